//! Per-image feature records and their on-disk forms.
//!
//! One record per image: the image id, 94 quality values, and optionally 128
//! forensic values. Two encodings exist (see `docs/FORMATS.md`): a
//! tab-delimited text form (`#`-prefixed comment lines allowed, floats in
//! shortest round-trip notation) and a binary form using the checkpoint
//! header conventions with magic `FANET-FT`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{
    expect_magic, expect_version, read_f64, read_string, read_u32, write_f64, write_string,
    write_u32, FORMAT_VERSION,
};
use crate::{FORENSIC_DIM, QUALITY_DIM};

pub const FEATURES_MAGIC: &[u8; 8] = b"FANET-FT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub quality: Vec<f64>,
    pub forensic: Option<Vec<f64>>,
}

impl FeatureRecord {
    pub fn new(id: String, quality: Vec<f64>, forensic: Option<Vec<f64>>) -> Result<Self> {
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(Error::Format(format!("invalid record id {id:?}")));
        }
        if quality.len() != QUALITY_DIM {
            return Err(Error::DimensionMismatch(format!(
                "record {id}: {} quality values, expected {QUALITY_DIM}",
                quality.len()
            )));
        }
        if let Some(f) = &forensic {
            if f.len() != FORENSIC_DIM {
                return Err(Error::DimensionMismatch(format!(
                    "record {id}: {} forensic values, expected {FORENSIC_DIM}",
                    f.len()
                )));
            }
        }
        Ok(Self {
            id,
            quality,
            forensic,
        })
    }
}

pub fn write_features(path: &Path, records: &[FeatureRecord], format: FeatureFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        FeatureFormat::Text => write_text(&mut w, records)?,
        FeatureFormat::Binary => write_binary(&mut w, records)?,
    }
    w.flush()?;
    Ok(())
}

/// Reads either encoding, sniffing the binary magic.
pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    let mut file = File::open(path)?;
    let mut head = [0u8; 8];
    let n = read_head(&mut file, &mut head)?;
    if n == 8 && &head == FEATURES_MAGIC {
        let mut r = BufReader::new(File::open(path)?);
        read_binary(&mut r)
    } else {
        let r = BufReader::new(File::open(path)?);
        read_text(r)
    }
}

/// Loads a feature file and returns `id -> forensic vector` for every record
/// that carries forensic features, erroring on records with the wrong
/// dimension.
pub fn import_forensic(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let records = read_features(path)?;
    let mut map = BTreeMap::new();
    for rec in records {
        if let Some(f) = rec.forensic {
            map.insert(rec.id, f);
        }
    }
    Ok(map)
}

fn read_head(file: &mut File, head: &mut [u8; 8]) -> Result<usize> {
    let mut filled = 0;
    loop {
        let n = file.read(&mut head[filled..])?;
        if n == 0 {
            return Ok(filled);
        }
        filled += n;
        if filled == 8 {
            return Ok(filled);
        }
    }
}

fn write_text<W: Write>(w: &mut W, records: &[FeatureRecord]) -> Result<()> {
    writeln!(
        w,
        "# forensicability features: id\tq1..q{QUALITY_DIM}[\tf1..f{FORENSIC_DIM}]"
    )?;
    for rec in records {
        write!(w, "{}", rec.id)?;
        for v in &rec.quality {
            write!(w, "\t{v}")?;
        }
        if let Some(f) = &rec.forensic {
            for v in f {
                write!(w, "\t{v}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

fn read_text<B: BufRead>(r: B) -> Result<Vec<FeatureRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let id = parts.next().unwrap_or_default().to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::Format(format!("record {id} (line {}): bad float {p:?}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        let (quality, forensic) = if values.len() == QUALITY_DIM {
            (values, None)
        } else if values.len() == QUALITY_DIM + FORENSIC_DIM {
            let forensic = values[QUALITY_DIM..].to_vec();
            (values[..QUALITY_DIM].to_vec(), Some(forensic))
        } else {
            return Err(Error::Format(format!(
                "record {id} (line {}): {} values, expected {QUALITY_DIM} or {}",
                lineno + 1,
                values.len(),
                QUALITY_DIM + FORENSIC_DIM
            )));
        };
        records.push(FeatureRecord::new(id, quality, forensic)?);
    }
    Ok(records)
}

fn write_binary<W: Write>(w: &mut W, records: &[FeatureRecord]) -> Result<()> {
    w.write_all(FEATURES_MAGIC)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, records.len() as u32)?;
    for rec in records {
        write_string(w, &rec.id)?;
        w.write_all(&[u8::from(rec.forensic.is_some())])?;
        for &v in &rec.quality {
            write_f64(w, v)?;
        }
        if let Some(f) = &rec.forensic {
            for &v in f {
                write_f64(w, v)?;
            }
        }
    }
    Ok(())
}

fn read_binary<I: Read>(r: &mut I) -> Result<Vec<FeatureRecord>> {
    expect_magic(r, FEATURES_MAGIC)?;
    expect_version(r)?;
    let count = read_u32(r)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let id = read_string(r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut quality = vec![0.0; QUALITY_DIM];
        for v in &mut quality {
            *v = read_f64(r)?;
        }
        let forensic = if flag[0] != 0 {
            let mut f = vec![0.0; FORENSIC_DIM];
            for v in &mut f {
                *v = read_f64(r)?;
            }
            Some(f)
        } else {
            None
        };
        records.push(FeatureRecord::new(id, quality, forensic)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<FeatureRecord> {
        let q: Vec<f64> = (0..QUALITY_DIM).map(|i| (i as f64) * 0.125 - 3.0).collect();
        let f: Vec<f64> = (0..FORENSIC_DIM).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        vec![
            FeatureRecord::new("img_a".into(), q.clone(), Some(f)).unwrap(),
            FeatureRecord::new("img_b".into(), q, None).unwrap(),
        ]
    }

    #[test]
    fn text_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.tsv");
        let records = sample_records();
        write_features(&path, &records, FeatureFormat::Text).unwrap();
        assert_eq!(read_features(&path).unwrap(), records);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.bin");
        let records = sample_records();
        write_features(&path, &records, FeatureFormat::Binary).unwrap();
        assert_eq!(read_features(&path).unwrap(), records);
    }

    #[test]
    fn wrong_dimension_names_the_record() {
        let err = FeatureRecord::new("bad_one".into(), vec![0.0; QUALITY_DIM], Some(vec![0.0; 127]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad_one") && msg.contains("127"), "{msg}");
    }

    #[test]
    fn empty_file_gives_empty_map() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        std::fs::write(&path, "").unwrap();
        assert!(import_forensic(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_text_record_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.tsv");
        std::fs::write(&path, "short_rec\t1.0\t2.0\n").unwrap();
        let err = read_features(&path).unwrap_err();
        assert!(err.to_string().contains("short_rec"));
    }
}
