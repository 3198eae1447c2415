//! Forensic feature extraction: an 8-layer CNN (five 3x3 stride-2
//! convolutions into a 4096 -> 128 -> 2 dense tail) trained as a two-class
//! captured/recaptured classifier. The 128-dimensional penultimate
//! activation is the forensic feature vector; the retained 2-way head turns
//! features into a genuine-class probability.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::nn::checkpoint::{
    expect_magic, expect_version, read_net, read_u32, write_net, write_u32, FORMAT_VERSION,
};
use crate::nn::{Activation, BatchLoss, ConvLayer, DenseLayer, Layer, Net, SgdConfig, SgdState};
use crate::num::{count, real, Real};
use crate::FORENSIC_DIM;

pub const EXTRACTOR_MAGIC: &[u8; 8] = b"FANET-FX";
const CONV_CHANNELS: [usize; 5] = [16, 32, 64, 64, 64];
const WIDE_DENSE: usize = 4096;
pub const DEFAULT_INPUT_SIZE: usize = 128;
pub const MIN_INPUT_SIZE: usize = 32;

#[derive(Debug, Clone)]
pub struct ForensicExtractor<R: Real> {
    net: Net<R>,
    input_size: usize,
    trained: bool,
}

#[derive(Debug, Clone)]
pub struct ExtractorTrainConfig<R: Real> {
    pub sgd: SgdConfig<R>,
    pub epochs: usize,
    pub batch_size: usize,
    pub input_size: usize,
    pub seed: u64,
}

impl<R: Real> Default for ExtractorTrainConfig<R> {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            epochs: 10,
            batch_size: 32,
            input_size: DEFAULT_INPUT_SIZE,
            seed: 0,
        }
    }
}

impl<R: Real> ForensicExtractor<R> {
    /// Seeded random initialization.
    pub fn init(input_size: usize, seed: u64) -> Result<Self> {
        Self::build(input_size, Some(seed))
    }

    /// All-zero weights; a forward pass produces all-zero post-relu features.
    pub fn zeros(input_size: usize) -> Result<Self> {
        Self::build(input_size, None)
    }

    fn build(input_size: usize, seed: Option<u64>) -> Result<Self> {
        if input_size < MIN_INPUT_SIZE {
            return Err(Error::InvalidInput(format!(
                "extractor input size {input_size} below minimum {MIN_INPUT_SIZE}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        let mut layers: Vec<Layer<R>> = Vec::with_capacity(8);
        let mut side = input_size;
        let mut in_ch = 1;
        for &out_ch in &CONV_CHANNELS {
            let layer = match seed {
                Some(_) => {
                    ConvLayer::init(in_ch, out_ch, 3, 3, 2, 1, side, side, Activation::Relu, &mut rng)?
                }
                None => ConvLayer::zeros(in_ch, out_ch, 3, 3, 2, 1, side, side, Activation::Relu)?,
            };
            side = layer.out_h();
            in_ch = out_ch;
            layers.push(Layer::Conv(layer));
        }
        let flat = in_ch * side * side;
        for (dim_in, dim_out, act) in [
            (flat, WIDE_DENSE, Activation::Relu),
            (WIDE_DENSE, FORENSIC_DIM, Activation::Relu),
            (FORENSIC_DIM, 2, Activation::Identity),
        ] {
            let layer = match seed {
                Some(_) => DenseLayer::init(dim_in, dim_out, act, &mut rng)?,
                None => DenseLayer::zeros(dim_in, dim_out, act)?,
            };
            layers.push(Layer::Dense(layer));
        }
        Ok(Self {
            net: Net::new(layers)?,
            input_size,
            trained: false,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn net(&self) -> &Net<R> {
        &self.net
    }

    /// Analytic FLOPs of one forward pass.
    pub fn flops(&self) -> f64 {
        self.net.flops()
    }

    /// Resizes `img` to the model input and flattens it (single channel).
    pub fn prepare_input(&self, img: &GrayImage<R>) -> Result<Vec<R>> {
        let resized = if img.width() == self.input_size && img.height() == self.input_size {
            img.clone()
        } else {
            img.resize_bilinear(self.input_size, self.input_size)?
        };
        Ok(resized.pixels().to_vec())
    }

    /// The 128-dimensional penultimate activation for `img`.
    pub fn extract(&self, img: &GrayImage<R>) -> Result<Vec<R>> {
        let input = self.prepare_input(img)?;
        let acts = self.net.forward(&input)?;
        let features = acts.values[acts.values.len() - 2].clone();
        debug_assert_eq!(features.len(), FORENSIC_DIM);
        Ok(features)
    }

    /// Genuine-class probability from the retained 2-way head applied to a
    /// 128-dimensional feature vector.
    pub fn head_score(&self, forensic: &[R]) -> Result<R> {
        if !self.trained {
            return Err(Error::ModelNotReady(
                "forensic extractor head has not been trained".into(),
            ));
        }
        let probs = self.head_probabilities(forensic)?;
        Ok(probs[1])
    }

    /// `[p_spoof, p_genuine]` softmax of the head logits; sums to 1.
    pub fn head_probabilities(&self, forensic: &[R]) -> Result<[R; 2]> {
        if forensic.len() != FORENSIC_DIM {
            return Err(Error::DimensionMismatch(format!(
                "forensic feature dimension {}, expected {FORENSIC_DIM}",
                forensic.len()
            )));
        }
        let head = self
            .net
            .layers()
            .last()
            .expect("extractor has layers");
        let mut logits = vec![R::zero(); 2];
        match head {
            Layer::Dense(l) => l.forward(forensic, &mut logits),
            Layer::Conv(_) => unreachable!("extractor head is dense"),
        }
        Ok(softmax2([logits[0], logits[1]]))
    }

    /// Extract + head in one pass (the bundled stub classifier).
    pub fn classify(&self, img: &GrayImage<R>) -> Result<R> {
        let f = self.extract(img)?;
        self.head_score(&f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(EXTRACTOR_MAGIC)?;
        write_u32(w, FORMAT_VERSION)?;
        write_u32(w, self.input_size as u32)?;
        w.write_all(&[u8::from(self.trained)])?;
        write_net(w, &self.net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut r)
    }

    pub fn read<I: Read>(r: &mut I) -> Result<Self> {
        expect_magic(r, EXTRACTOR_MAGIC)?;
        expect_version(r)?;
        let input_size = read_u32(r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let net = read_net(r)?;
        let penultimate = net.layers()[net.layers().len() - 2].out_len();
        if penultimate != FORENSIC_DIM || net.output_dim() != 2 {
            return Err(Error::Format(format!(
                "extractor geometry mismatch: penultimate {penultimate}, output {}",
                net.output_dim()
            )));
        }
        Ok(Self {
            net,
            input_size,
            trained: flag[0] != 0,
        })
    }
}

#[inline]
fn softmax2<R: Real>(logits: [R; 2]) -> [R; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Mean softmax cross-entropy over a batch; `targets[i]` is true for the
/// genuine class.
pub struct CrossEntropyLoss {
    pub targets: Vec<bool>,
}

impl<R: Real> BatchLoss<R> for CrossEntropyLoss {
    fn value(&self, outputs: &[Vec<R>]) -> R {
        let mut total = R::zero();
        for (o, &genuine) in outputs.iter().zip(&self.targets) {
            let p = softmax2([o[0], o[1]]);
            let target = usize::from(genuine);
            total -= p[target].max(real(1e-300)).ln();
        }
        total / count(outputs.len())
    }

    fn output_grads(&self, outputs: &[Vec<R>]) -> Vec<Vec<R>> {
        let inv_n = R::one() / count(outputs.len());
        outputs
            .iter()
            .zip(&self.targets)
            .map(|(o, &genuine)| {
                let p = softmax2([o[0], o[1]]);
                let mut g = vec![p[0] * inv_n, p[1] * inv_n];
                g[usize::from(genuine)] -= inv_n;
                g
            })
            .collect()
    }
}

/// Trains the extractor (with its classifier head retained) on a labeled
/// corpus; label true = genuine/captured. Returns the trained model and the
/// mean loss per epoch, preceded by the loss at initialization.
pub fn train_extractor<R: Real>(
    corpus: &[(GrayImage<R>, bool)],
    cfg: &ExtractorTrainConfig<R>,
) -> Result<(ForensicExtractor<R>, Vec<R>)> {
    cfg.sgd.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty training corpus".into()));
    }
    let genuine = corpus.iter().filter(|(_, l)| *l).count();
    if genuine == 0 || genuine == corpus.len() {
        return Err(Error::InvalidInput(
            "training corpus must contain both classes".into(),
        ));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be > 0".into()));
    }

    let mut model = ForensicExtractor::init(cfg.input_size, cfg.seed)?;
    let inputs: Vec<Vec<R>> = corpus
        .iter()
        .map(|(img, _)| model.prepare_input(img))
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = corpus.iter().map(|(_, l)| *l).collect();

    let mut state = SgdState::for_net(&model.net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    losses.push(mean_loss(&model, &inputs, &labels)?);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = R::zero();
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.net.zero_grads();
            let loss = CrossEntropyLoss {
                targets: batch.iter().map(|&i| labels[i]).collect(),
            };
            let acts: Vec<_> = batch
                .iter()
                .map(|&i| model.net.forward(&inputs[i]))
                .collect::<Result<_>>()?;
            let outputs: Vec<Vec<R>> = acts.iter().map(|a| a.output().to_vec()).collect();
            let batch_loss = <CrossEntropyLoss as BatchLoss<R>>::value(&loss, &outputs);
            if !batch_loss.is_finite() {
                return Err(Error::TrainingFailed(format!(
                    "non-finite loss in epoch {epoch}"
                )));
            }
            let d_outputs = loss.output_grads(&outputs);
            for (a, d) in acts.iter().zip(&d_outputs) {
                model.net.backward(a, d, &mut grads)?;
            }
            model.net.sgd_step(&grads, &mut state, &cfg.sgd, epoch)?;
            epoch_loss += batch_loss;
            batches += 1;
        }
        losses.push(epoch_loss / count(batches));
    }
    model.trained = true;
    Ok((model, losses))
}

/// Fraction of the corpus the trained head classifies correctly.
pub fn training_accuracy<R: Real>(
    model: &ForensicExtractor<R>,
    corpus: &[(GrayImage<R>, bool)],
) -> Result<f64> {
    let mut correct = 0usize;
    for (img, genuine) in corpus {
        let score = model.classify(img)?;
        if (score > real(0.5)) == *genuine {
            correct += 1;
        }
    }
    Ok(correct as f64 / corpus.len() as f64)
}

fn mean_loss<R: Real>(
    model: &ForensicExtractor<R>,
    inputs: &[Vec<R>],
    labels: &[bool],
) -> Result<R> {
    let outputs: Vec<Vec<R>> = inputs
        .iter()
        .map(|x| model.net.infer(x))
        .collect::<Result<_>>()?;
    let loss = CrossEntropyLoss {
        targets: labels.to_vec(),
    };
    Ok(<CrossEntropyLoss as BatchLoss<R>>::value(&loss, &outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_dimension_is_128() {
        let model = ForensicExtractor::<f64>::init(32, 7).unwrap();
        let img = GrayImage::from_fn(40, 40, |x, y| ((x + y) % 2) as f64).unwrap();
        assert_eq!(model.extract(&img).unwrap().len(), FORENSIC_DIM);
    }

    #[test]
    fn extraction_is_deterministic() {
        let model = ForensicExtractor::<f64>::init(32, 7).unwrap();
        let img = GrayImage::from_fn(48, 48, |x, y| ((x * y) % 5) as f64 / 5.0).unwrap();
        assert_eq!(model.extract(&img).unwrap(), model.extract(&img).unwrap());
    }

    #[test]
    fn zero_model_produces_zero_features() {
        let model = ForensicExtractor::<f64>::zeros(32).unwrap();
        let img = GrayImage::from_fn(32, 32, |x, _| (x % 3) as f64 / 3.0).unwrap();
        let f = model.extract(&img).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_probabilities_sum_to_one() {
        let mut model = ForensicExtractor::<f64>::init(32, 3).unwrap();
        model.trained = true;
        let f: Vec<f64> = (0..FORENSIC_DIM).map(|i| (i % 11) as f64 * 0.07).collect();
        let p = model.head_probabilities(&f).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn untrained_head_is_not_ready() {
        let model = ForensicExtractor::<f64>::init(32, 3).unwrap();
        let f = vec![0.0; FORENSIC_DIM];
        assert!(matches!(
            model.head_score(&f),
            Err(Error::ModelNotReady(_))
        ));
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let img = GrayImage::<f64>::from_fn(32, 32, |_, _| 0.5).unwrap();
        let corpus = vec![(img.clone(), true), (img, true)];
        let cfg = ExtractorTrainConfig {
            input_size: 32,
            epochs: 1,
            ..Default::default()
        };
        assert!(train_extractor(&corpus, &cfg).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extractor.bin");
        let model = ForensicExtractor::<f64>::init(32, 99).unwrap();
        model.save(&path).unwrap();
        let loaded = ForensicExtractor::<f64>::load(&path).unwrap();
        assert_eq!(loaded.input_size(), 32);
        let img = GrayImage::from_fn(36, 36, |x, y| ((x ^ y) % 7) as f64 / 7.0).unwrap();
        assert_eq!(model.extract(&img).unwrap(), loaded.extract(&img).unwrap());
    }
}
