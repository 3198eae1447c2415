//! Corpus layout on disk: a `manifest.tsv` listing every sample (id, label,
//! image path, optional frame group, source ids, and the full synthesis
//! parameters of generated spoofs) next to an `images/` directory of 8-bit
//! grayscale PNGs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::synth::{sample_params, synthesize_spoof, CropRect, ParamRanges, SynthParams};

pub const MANIFEST_NAME: &str = "manifest.tsv";
const HEADER: &str = "id\tlabel\tpath\tgroup\tsource\tblur_sigma\tblend_alpha\th0\th1\th2\th3\th4\th5\th6\th7\th8\tcrop_x\tcrop_y\tcrop_w\tcrop_h\tseed";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: String,
    /// true = genuine/captured, false = spoof/recaptured.
    pub genuine: bool,
    /// Image path relative to the manifest directory.
    pub path: String,
    /// Frame group for video-style corpora; frames sharing a group are
    /// scored together.
    pub group: Option<String>,
    /// Source ids a synthesized sample was built from.
    pub source: Option<String>,
    pub params: Option<SynthParams>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn image_path(&self, root: &Path, entry: &CorpusEntry) -> PathBuf {
        root.join(&entry.path)
    }
}

pub fn write_manifest(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{HEADER}")?;
    for e in &manifest.entries {
        let label = if e.genuine { "genuine" } else { "spoof" };
        write!(
            w,
            "{}\t{label}\t{}\t{}\t{}",
            e.id,
            e.path,
            e.group.as_deref().unwrap_or("-"),
            e.source.as_deref().unwrap_or("-")
        )?;
        match &e.params {
            Some(p) => {
                write!(w, "\t{}\t{}", p.blur_sigma, p.blend_alpha)?;
                for v in p.homography {
                    write!(w, "\t{v}")?;
                }
                write!(
                    w,
                    "\t{}\t{}\t{}\t{}\t{}",
                    p.crop.x, p.crop.y, p.crop.width, p.crop.height, p.seed
                )?;
            }
            None => {
                for _ in 0..16 {
                    write!(w, "\t-")?;
                }
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let r = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line != HEADER {
                return Err(Error::Format(format!(
                    "unexpected manifest header: {line:?}"
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 21 {
            return Err(Error::Format(format!(
                "manifest line {}: expected 21 fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let genuine = match parts[1] {
            "genuine" => true,
            "spoof" => false,
            other => {
                return Err(Error::Format(format!(
                    "manifest line {}: unknown label {other:?}",
                    lineno + 1
                )))
            }
        };
        let opt = |s: &str| {
            if s == "-" {
                None
            } else {
                Some(s.to_string())
            }
        };
        let params = if parts[5] == "-" {
            None
        } else {
            let pf = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| {
                    Error::Format(format!("manifest line {}: bad float {s:?}", lineno + 1))
                })
            };
            let pu = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| {
                    Error::Format(format!("manifest line {}: bad integer {s:?}", lineno + 1))
                })
            };
            let mut homography = [0.0f64; 9];
            for (i, v) in homography.iter_mut().enumerate() {
                *v = pf(parts[7 + i])?;
            }
            Some(SynthParams {
                blur_sigma: pf(parts[5])?,
                blend_alpha: pf(parts[6])?,
                homography,
                crop: CropRect {
                    x: pu(parts[16])?,
                    y: pu(parts[17])?,
                    width: pu(parts[18])?,
                    height: pu(parts[19])?,
                },
                seed: parts[20].parse().map_err(|_| {
                    Error::Format(format!(
                        "manifest line {}: bad seed {:?}",
                        lineno + 1,
                        parts[20]
                    ))
                })?,
            })
        };
        entries.push(CorpusEntry {
            id: parts[0].to_string(),
            genuine,
            path: parts[2].to_string(),
            group: opt(parts[3]),
            source: opt(parts[4]),
            params,
        });
    }
    Ok(CorpusManifest { entries })
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_spoof: usize,
    pub ranges: ParamRanges,
    /// Tile genuine images into `size x size` patches before augmentation.
    pub patch_size: Option<usize>,
    pub seed: u64,
}

/// Builds a labeled corpus under `out_dir`: genuine images (label genuine)
/// plus `n_spoof` synthesized spoof images (label spoof), with every sample
/// listed in the manifest. Returns the manifest.
pub fn build_corpus(
    genuine: &[(String, GrayImage<f64>)],
    backgrounds: &[(String, GrayImage<f64>)],
    out_dir: &Path,
    cfg: &CorpusConfig,
) -> Result<CorpusManifest> {
    if genuine.is_empty() || backgrounds.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one genuine and one background image".into(),
        ));
    }
    if cfg.n_spoof == 0 {
        return Err(Error::InvalidInput("n_spoof must be > 0".into()));
    }
    cfg.ranges.validate()?;

    // Patch mode tiles the genuine pool before anything else.
    let pool: Vec<(String, GrayImage<f64>)> = match cfg.patch_size {
        None => genuine.to_vec(),
        Some(patch) => {
            let mut tiles = Vec::new();
            for (id, img) in genuine {
                for (k, tile) in tile_image(img, patch)?.into_iter().enumerate() {
                    tiles.push((format!("{id}_p{k:02}"), tile));
                }
            }
            if tiles.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no {0}x{0} patches fit the genuine images",
                    cfg.patch_size.unwrap_or(0)
                )));
            }
            tiles
        }
    };

    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let mut entries = Vec::with_capacity(pool.len() + cfg.n_spoof);
    for (id, img) in &pool {
        let rel = format!("images/{id}.png");
        img.save(&out_dir.join(&rel))?;
        entries.push(CorpusEntry {
            id: id.clone(),
            genuine: true,
            path: rel,
            group: None,
            source: None,
            params: None,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.n_spoof {
        let gi = rng.random_range(0..pool.len());
        let bi = rng.random_range(0..backgrounds.len());
        let (src_id, src_img) = &pool[gi];
        let (bg_id, bg_img) = &backgrounds[bi];
        let params = sample_params(&mut rng, &cfg.ranges, src_img.width(), src_img.height())?;
        let spoof = synthesize_spoof(src_img, bg_img, &params)?;
        let id = format!("spoof_{i:05}");
        let rel = format!("images/{id}.png");
        spoof.save(&out_dir.join(&rel))?;
        entries.push(CorpusEntry {
            id,
            genuine: false,
            path: rel,
            group: None,
            source: Some(format!("{src_id}+{bg_id}")),
            params: Some(params),
        });
    }

    let manifest = CorpusManifest { entries };
    write_manifest(&out_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

fn tile_image(img: &GrayImage<f64>, patch: usize) -> Result<Vec<GrayImage<f64>>> {
    if patch < crate::image::MIN_IMAGE_SIDE {
        return Err(Error::InvalidInput(format!(
            "patch size {patch} below minimum image side"
        )));
    }
    let mut tiles = Vec::new();
    for by in 0..img.height() / patch {
        for bx in 0..img.width() / patch {
            tiles.push(GrayImage::from_fn(patch, patch, |x, y| {
                img.at(bx * patch + x, by * patch + y)
            })?);
        }
    }
    Ok(tiles)
}
