//! Ground-truth supervision scores: a pseudo-MOS quality regressor trained
//! on a synthetic degradation ladder produces `y_Q`, and the forensic
//! extractor's classifier head produces `y_F`. Both live in `[0,1]`
//! (0 = low quality / spoof, 1 = high quality / genuine).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureRecord;
use crate::forensic::ForensicExtractor;
use crate::image::GrayImage;
use crate::iqa::quality_feature_vector;
use crate::nn::checkpoint::{
    expect_magic, expect_version, read_f64, read_net, read_u32, write_f64, write_net, write_u32,
    FORMAT_VERSION,
};
use crate::nn::{Activation, BatchLoss, DenseLayer, Layer, Net, SgdConfig, SgdState};
use crate::num::{count, real, Real};
use crate::QUALITY_DIM;

pub const QUALITY_HEAD_MAGIC: &[u8; 8] = b"FANET-QH";

/// A supervision (or prediction) score pair, both components in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair<R: Real> {
    pub y_q: R,
    pub y_f: R,
}

impl<R: Real> ScorePair<R> {
    pub fn new(y_q: R, y_f: R) -> Result<Self> {
        for (name, v) in [("y_q", y_q), ("y_f", y_f)] {
            if !v.is_finite() || v < R::zero() || v > R::one() {
                return Err(Error::InvalidInput(format!("{name}={v} outside [0,1]")));
            }
        }
        Ok(Self { y_q, y_f })
    }
}

/// Per-feature standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler<R: Real> {
    pub mean: Vec<R>,
    pub std: Vec<R>,
}

impl<R: Real> FeatureScaler<R> {
    pub fn fit(rows: &[Vec<R>]) -> Result<Self> {
        let dim = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot fit scaler on empty set".into()))?
            .len();
        let n = count::<R>(rows.len());
        let mut mean = vec![R::zero(); dim];
        for row in rows {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![R::zero(); dim];
        for row in rows {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let floor = real::<R>(1e-8);
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < floor {
                    R::one()
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, row: &[R]) -> Vec<R> {
        debug_assert_eq!(row.len(), self.mean.len());
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    pub(crate) fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        write_u32(w, self.mean.len() as u32)?;
        for &v in self.mean.iter().chain(&self.std) {
            write_f64(w, v)?;
        }
        Ok(())
    }

    pub(crate) fn read<I: Read>(r: &mut I) -> Result<Self> {
        let dim = read_u32(r)? as usize;
        if dim == 0 || dim > 1 << 20 {
            return Err(Error::Format(format!("implausible scaler dimension {dim}")));
        }
        let mut mean = vec![R::zero(); dim];
        let mut std = vec![R::zero(); dim];
        for v in mean.iter_mut().chain(std.iter_mut()) {
            *v = read_f64(r)?;
        }
        Ok(Self { mean, std })
    }
}

/// Quality-score regressor: standardized 94 features -> 16 relu -> 1 sigmoid.
#[derive(Debug, Clone)]
pub struct QualityHead<R: Real> {
    scaler: FeatureScaler<R>,
    net: Net<R>,
    trained: bool,
}

impl<R: Real> QualityHead<R> {
    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn flops(&self) -> f64 {
        self.net.flops()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(QUALITY_HEAD_MAGIC)?;
        write_u32(&mut w, FORMAT_VERSION)?;
        w.write_all(&[u8::from(self.trained)])?;
        self.scaler.write(&mut w)?;
        write_net(&mut w, &self.net)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, QUALITY_HEAD_MAGIC)?;
        expect_version(&mut r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let scaler = FeatureScaler::read(&mut r)?;
        let net = read_net(&mut r)?;
        if net.input_dim() != QUALITY_DIM || net.output_dim() != 1 {
            return Err(Error::Format(format!(
                "quality head geometry mismatch: {} -> {}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(Self {
            scaler,
            net,
            trained: flag[0] != 0,
        })
    }
}

/// Quality score of a 94-dimensional feature vector, in `(0,1)`.
pub fn quality_score<R: Real>(head: &QualityHead<R>, quality: &[R]) -> Result<R> {
    if !head.trained {
        return Err(Error::ModelNotReady("quality head has not been trained".into()));
    }
    if quality.len() != QUALITY_DIM {
        return Err(Error::DimensionMismatch(format!(
            "quality feature dimension {}, expected {QUALITY_DIM}",
            quality.len()
        )));
    }
    let out = head.net.infer(&head.scaler.transform(quality))?;
    Ok(out[0])
}

/// Genuine-class probability of a 128-dimensional forensic feature vector.
pub fn forensic_score<R: Real>(extractor: &ForensicExtractor<R>, forensic: &[R]) -> Result<R> {
    extractor.head_score(forensic)
}

/// One degradation rung: Gaussian blur then clamped Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeLevel {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
}

/// Default ladder: blur sigma 0, 1, 2, 4 with a little sensor-style noise on
/// the degraded rungs.
pub fn default_ladder_levels() -> Vec<DegradeLevel> {
    [0.0, 1.0, 2.0, 4.0]
        .iter()
        .map(|&s| DegradeLevel {
            blur_sigma: s,
            noise_sigma: if s == 0.0 { 0.0 } else { 0.01 * s },
        })
        .collect()
}

pub fn degrade<R: Real>(img: &GrayImage<R>, level: &DegradeLevel, seed: u64) -> GrayImage<R> {
    let blurred = img.gaussian_blur(level.blur_sigma);
    if level.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        blurred.add_gaussian_noise(level.noise_sigma, &mut rng)
    } else {
        blurred
    }
}

#[derive(Debug, Clone)]
pub struct LadderEntry<R: Real> {
    pub features: Vec<R>,
    /// Pseudo-MOS target: `1 - rank/(levels-1)`.
    pub target: R,
    pub base_index: usize,
    pub level_index: usize,
}

/// Applies every degradation level to every base image and extracts quality
/// features, labeling each entry with its normalized-rank pseudo-MOS.
pub fn build_quality_ladder<R: Real>(
    bases: &[GrayImage<R>],
    levels: &[DegradeLevel],
    seed: u64,
) -> Result<Vec<LadderEntry<R>>> {
    if levels.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "degradation ladder needs at least 2 levels, got {}",
            levels.len()
        )));
    }
    if bases.is_empty() {
        return Err(Error::InvalidInput("no base images for the ladder".into()));
    }
    let denom = (levels.len() - 1) as f64;
    let mut entries = Vec::with_capacity(bases.len() * levels.len());
    for (bi, base) in bases.iter().enumerate() {
        for (li, level) in levels.iter().enumerate() {
            let img = degrade(base, level, seed ^ ((bi as u64) << 20) ^ li as u64);
            entries.push(LadderEntry {
                features: quality_feature_vector(&img)?.to_vec(),
                target: real(1.0 - li as f64 / denom),
                base_index: bi,
                level_index: li,
            });
        }
    }
    Ok(entries)
}

/// Mean squared error against scalar targets.
struct MseLoss<R: Real> {
    targets: Vec<R>,
}

impl<R: Real> BatchLoss<R> for MseLoss<R> {
    fn value(&self, outputs: &[Vec<R>]) -> R {
        let mut total = R::zero();
        for (o, &t) in outputs.iter().zip(&self.targets) {
            let d = o[0] - t;
            total += d * d;
        }
        total / count(outputs.len())
    }

    fn output_grads(&self, outputs: &[Vec<R>]) -> Vec<Vec<R>> {
        let scale = real::<R>(2.0) / count(outputs.len());
        outputs
            .iter()
            .zip(&self.targets)
            .map(|(o, &t)| vec![scale * (o[0] - t)])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct QualityHeadTrainConfig<R: Real> {
    pub sgd: SgdConfig<R>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Every k-th base image is held out for validation.
    pub holdout_every: usize,
    pub seed: u64,
}

impl<R: Real> Default for QualityHeadTrainConfig<R> {
    fn default() -> Self {
        Self {
            sgd: SgdConfig {
                learning_rate: real(0.01),
                momentum: real(0.9),
                weight_decay: real(1e-4),
                decay_factor: real(5.0),
                decay_every: 100,
            },
            epochs: 300,
            batch_size: 32,
            holdout_every: 5,
            seed: 0,
        }
    }
}

/// Trains the quality head on ladder entries; returns the head and the
/// held-out mean squared error.
pub fn train_quality_head<R: Real>(
    ladder: &[LadderEntry<R>],
    cfg: &QualityHeadTrainConfig<R>,
) -> Result<(QualityHead<R>, R)> {
    cfg.sgd.validate()?;
    if ladder.is_empty() {
        return Err(Error::InvalidInput("empty ladder".into()));
    }
    let holdout = cfg.holdout_every.max(2);
    let (mut train_idx, mut held_idx) = (Vec::new(), Vec::new());
    for (i, e) in ladder.iter().enumerate() {
        if e.base_index % holdout == holdout - 1 {
            held_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    if train_idx.is_empty() || held_idx.is_empty() {
        return Err(Error::InvalidInput(
            "ladder too small to split into train and held-out sets".into(),
        ));
    }

    let rows: Vec<Vec<R>> = train_idx.iter().map(|&i| ladder[i].features.clone()).collect();
    let scaler = FeatureScaler::fit(&rows)?;
    let inputs: Vec<Vec<R>> = ladder
        .iter()
        .map(|e| scaler.transform(&e.features))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51ed_2701);
    let l1 = DenseLayer::init(QUALITY_DIM, 16, Activation::Relu, &mut rng)?;
    let l2 = DenseLayer::init(16, 1, Activation::Sigmoid, &mut rng)?;
    let mut net = Net::new(vec![Layer::Dense(l1), Layer::Dense(l2)])?;
    let mut state = SgdState::for_net(&net);

    let mut order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zero_grads();
            let loss = MseLoss {
                targets: batch.iter().map(|&i| ladder[i].target).collect(),
            };
            let acts: Vec<_> = batch
                .iter()
                .map(|&i| net.forward(&inputs[i]))
                .collect::<Result<_>>()?;
            let outputs: Vec<Vec<R>> = acts.iter().map(|a| a.output().to_vec()).collect();
            if !loss.value(&outputs).is_finite() {
                return Err(Error::TrainingFailed(format!(
                    "non-finite quality-head loss in epoch {epoch}"
                )));
            }
            let d_outputs = loss.output_grads(&outputs);
            for (a, d) in acts.iter().zip(&d_outputs) {
                net.backward(a, d, &mut grads)?;
            }
            net.sgd_step(&grads, &mut state, &cfg.sgd, epoch)?;
        }
    }

    let mut held_mse = R::zero();
    for &i in &held_idx {
        let out = net.infer(&inputs[i])?;
        let d = out[0] - ladder[i].target;
        held_mse += d * d;
    }
    held_mse = held_mse / count(held_idx.len());

    Ok((
        QualityHead {
            scaler,
            net,
            trained: true,
        },
        held_mse,
    ))
}

/// One supervision pair per feature record, via the trained heads. Records
/// missing forensic features are collected into a single error.
pub fn build_supervision(
    records: &[FeatureRecord],
    quality_head: &QualityHead<f64>,
    extractor: &ForensicExtractor<f64>,
) -> Result<Vec<(String, ScorePair<f64>)>> {
    let missing: Vec<&str> = records
        .iter()
        .filter(|r| r.forensic.is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "records missing forensic features: {}",
            missing.join(", ")
        )));
    }
    records
        .iter()
        .map(|rec| {
            let y_q = quality_score(quality_head, &rec.quality)?;
            let y_f = forensic_score(extractor, rec.forensic.as_ref().expect("checked"))?;
            Ok((rec.id.clone(), ScorePair::new(y_q, y_f)?))
        })
        .collect()
}

/// Writes the scores file: `id<TAB>y_q<TAB>y_f<TAB>label` with a header
/// line, label one of `genuine`, `spoof`, or `-`.
pub fn write_scores(
    path: &Path,
    entries: &[(String, ScorePair<f64>, Option<bool>)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id\ty_q\ty_f\tlabel")?;
    for (id, pair, label) in entries {
        let label = match label {
            Some(true) => "genuine",
            Some(false) => "spoof",
            None => "-",
        };
        writeln!(w, "{id}\t{}\t{}\t{label}", pair.y_q, pair.y_f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<(String, ScorePair<f64>, Option<bool>)>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line != "id\ty_q\ty_f\tlabel" {
                return Err(Error::Format(format!("bad scores header: {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!(
                "scores line {}: expected 4 fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("scores line {}: bad float {s:?}", lineno + 1)))
        };
        let label = match parts[3] {
            "genuine" => Some(true),
            "spoof" => Some(false),
            "-" => None,
            other => {
                return Err(Error::Format(format!(
                    "scores line {}: unknown label {other:?}",
                    lineno + 1
                )))
            }
        };
        out.push((
            parts[0].to_string(),
            ScorePair::new(parse(parts[1])?, parse(parts[2])?)?,
            label,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_pair_rejects_out_of_range() {
        assert!(ScorePair::new(0.5, 1.2).is_err());
        assert!(ScorePair::new(-0.1, 0.5).is_err());
        assert!(ScorePair::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn ladder_targets_follow_rank_normalization() {
        let levels = default_ladder_levels();
        assert_eq!(levels.len(), 4);
        let base = GrayImage::<f64>::from_fn(48, 48, |x, y| {
            (((x / 4) % 2) ^ ((y / 4) % 2)) as f64 * 0.7 + 0.15
        })
        .unwrap();
        let ladder = build_quality_ladder(&[base], &levels, 3).unwrap();
        assert_eq!(ladder[0].target, 1.0);
        assert_eq!(ladder[3].target, 0.0);
        assert!((ladder[1].target - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_level_ladder_is_rejected() {
        let base = GrayImage::<f64>::from_fn(32, 32, |_, _| 0.5).unwrap();
        let levels = vec![DegradeLevel {
            blur_sigma: 0.0,
            noise_sigma: 0.0,
        }];
        assert!(build_quality_ladder(&[base], &levels, 0).is_err());
    }

    #[test]
    fn scores_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.tsv");
        let entries = vec![
            ("a".to_string(), ScorePair::new(0.25, 0.75).unwrap(), Some(true)),
            ("b".to_string(), ScorePair::new(1.0, 0.0).unwrap(), Some(false)),
            ("c".to_string(), ScorePair::new(0.5, 0.5).unwrap(), None),
        ];
        write_scores(&path, &entries).unwrap();
        assert_eq!(read_scores(&path).unwrap(), entries);
    }

    #[test]
    fn untrained_quality_head_is_not_ready() {
        let scaler = FeatureScaler {
            mean: vec![0.0; QUALITY_DIM],
            std: vec![1.0; QUALITY_DIM],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l1 = DenseLayer::init(QUALITY_DIM, 16, Activation::Relu, &mut rng).unwrap();
        let l2 = DenseLayer::init(16, 1, Activation::Sigmoid, &mut rng).unwrap();
        let head = QualityHead::<f64> {
            scaler,
            net: Net::new(vec![Layer::Dense(l1), Layer::Dense(l2)]).unwrap(),
            trained: false,
        };
        assert!(matches!(
            quality_score(&head, &vec![0.0; QUALITY_DIM]),
            Err(Error::ModelNotReady(_))
        ));
    }
}
