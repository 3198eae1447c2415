//! Forensicability quantification: label assignment against three class
//! centers, the SMapNet-Q/SMapNet-F score-mapping networks trained with an
//! RBF-kernel cross-entropy loss, momentum-based center updates, and the
//! forensicability score.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{
    expect_magic, expect_version, read_f64, read_net, write_f64, write_net, FORMAT_VERSION,
};
use crate::nn::{Activation, DenseLayer, Layer, Net, SgdConfig, SgdState};
use crate::num::{count, real, Real};
use crate::supervision::{FeatureScaler, ScorePair};
use crate::{FORENSIC_DIM, INPUT_DIM, QUALITY_DIM};

pub const MODEL_MAGIC: &[u8; 8] = b"FANET-MD";

pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_ETA: f64 = 0.9;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_LOW_FRACTION: f64 = 0.30;
/// Kernel values are clamped to `[CLAMP, 1 - CLAMP]` before logarithms.
pub const CLAMP: f64 = 1e-12;

/// The three forensicability classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForensicabilityClass {
    HighPositive,
    HighNegative,
    Low,
}

impl ForensicabilityClass {
    pub fn index(self) -> usize {
        match self {
            ForensicabilityClass::HighPositive => 0,
            ForensicabilityClass::HighNegative => 1,
            ForensicabilityClass::Low => 2,
        }
    }
}

/// Model variants exercised by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// Two classes only; scoring ignores the low-forensicability center.
    NoLowClass,
    /// Centers drawn from a seeded standard Gaussian instead of the
    /// domain-informed locations.
    RandomCenters,
    /// Forensic inputs zeroed; the model sees quality features alone.
    QualityOnly,
}

impl Ablation {
    /// Number of classes participating in labeling and the loss.
    pub fn active_classes(self) -> usize {
        match self {
            Ablation::NoLowClass => 2,
            _ => 3,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Ablation::Full => 0,
            Ablation::NoLowClass => 1,
            Ablation::RandomCenters => 2,
            Ablation::QualityOnly => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Ablation::Full),
            1 => Some(Ablation::NoLowClass),
            2 => Some(Ablation::RandomCenters),
            3 => Some(Ablation::QualityOnly),
            _ => None,
        }
    }
}

/// The three 2-D class centers with their trainable kernel weights and the
/// momentum accumulators of the center-update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet<R: Real> {
    /// Center locations `e_c` in (quality, forensic) score space.
    pub e: [[R; 2]; 3],
    /// Trainable per-center weights balancing the two score axes.
    pub lambda: [[R; 2]; 3],
    /// RBF kernel size.
    pub sigma: R,
    /// Momentum of the center update.
    pub eta: R,
    /// Momentum numerator: running weighted sum of class scores.
    m: [[R; 2]; 3],
    /// Momentum denominator: running weighted sample count.
    n: [R; 3],
}

impl<R: Real> CenterSet<R> {
    /// Domain-informed initialization: e1 = (1,1) high positive,
    /// e2 = (1,0) high negative, e3 = (0,0.5) low forensicability.
    pub fn init(sigma: R, eta: R) -> Result<Self> {
        let e = [
            [real(1.0), real(1.0)],
            [real(1.0), real(0.0)],
            [real(0.0), real(0.5)],
        ];
        Self::with_centers(e, sigma, eta)
    }

    /// Ablation initialization: centers drawn from a seeded standard
    /// Gaussian.
    pub fn init_random(sigma: R, eta: R, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> R {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            real((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
        };
        let e = [
            [draw(), draw()],
            [draw(), draw()],
            [draw(), draw()],
        ];
        Self::with_centers(e, sigma, eta)
    }

    pub fn with_centers(e: [[R; 2]; 3], sigma: R, eta: R) -> Result<Self> {
        if !(sigma.is_finite() && sigma > R::zero()) {
            return Err(Error::InvalidInput(format!("kernel size sigma={sigma} must be > 0")));
        }
        if !(eta.is_finite() && eta >= R::zero() && eta <= R::one()) {
            return Err(Error::InvalidInput(format!("momentum eta={eta} outside [0,1]")));
        }
        Ok(Self {
            e,
            lambda: [[R::one(); 2]; 3],
            sigma,
            eta,
            m: e,
            n: [R::one(); 3],
        })
    }

    /// Momentum center update from the current mini-batch scores:
    ///
    /// - `m_c <- eta * m_c + (1 - eta) * sum of class-c scores`
    /// - `n_c <- eta * n_c + (1 - eta) * N_c`
    /// - `e_c <- m_c / n_c` while `n_c` stays positive
    ///
    /// A batch without members of class `c` leaves `e_c` unchanged (both
    /// accumulators scale by `eta`, so their ratio is preserved).
    pub fn update(&mut self, batch: &[([R; 2], ForensicabilityClass)]) {
        let mut sums = [[R::zero(); 2]; 3];
        let mut counts = [R::zero(); 3];
        for (y, class) in batch {
            let c = class.index();
            sums[c][0] += y[0];
            sums[c][1] += y[1];
            counts[c] += R::one();
        }
        let keep = self.eta;
        let take = R::one() - self.eta;
        for c in 0..3 {
            self.m[c][0] = keep * self.m[c][0] + take * sums[c][0];
            self.m[c][1] = keep * self.m[c][1] + take * sums[c][1];
            self.n[c] = keep * self.n[c] + take * counts[c];
            if self.n[c] > real(1e-12) {
                self.e[c][0] = self.m[c][0] / self.n[c];
                self.e[c][1] = self.m[c][1] / self.n[c];
            }
        }
    }

    pub fn accumulators(&self) -> (&[[R; 2]; 3], &[R; 3]) {
        (&self.m, &self.n)
    }

    /// Overrides the accumulators (used by checkpoint loading and tests).
    pub fn set_accumulators(&mut self, m: [[R; 2]; 3], n: [R; 3]) {
        self.m = m;
        self.n = n;
    }
}

/// RBF kernel of a score point against a center:
/// `K = exp(-||lambda . (y - e)||^2 / (2 sigma^2))`, in `(0, 1]`.
pub fn rbf_kernel<R: Real>(y_hat: [R; 2], center: [R; 2], lambda: [R; 2], sigma: R) -> R {
    let dq = lambda[0] * (y_hat[0] - center[0]);
    let df = lambda[1] * (y_hat[1] - center[1]);
    (-(dq * dq + df * df) / (real::<R>(2.0) * sigma * sigma)).exp()
}

#[inline]
fn clamp_kernel<R: Real>(k: R) -> R {
    k.max(real(CLAMP)).min(R::one() - real(CLAMP))
}

#[inline]
fn euclidean<R: Real>(a: [R; 2], b: [R; 2]) -> R {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Sum of per-class binary cross-entropies of the clamped kernel values
/// against the one-hot class label.
pub fn fanet_loss<R: Real>(
    y_hat: [R; 2],
    class: ForensicabilityClass,
    centers: &CenterSet<R>,
    active_classes: usize,
) -> R {
    let mut loss = R::zero();
    for c in 0..active_classes {
        let k = clamp_kernel(rbf_kernel(y_hat, centers.e[c], centers.lambda[c], centers.sigma));
        if class.index() == c {
            loss -= k.ln();
        } else {
            loss -= (R::one() - k).ln();
        }
    }
    loss
}

/// Distance-based label assignment: the `ceil(low_fraction * n)` samples
/// closest to the low center are labeled low (stable ties by index); the
/// rest go to whichever high center is nearer.
pub fn assign_labels<R: Real>(
    pairs: &[ScorePair<R>],
    centers: &CenterSet<R>,
    low_fraction: f64,
) -> Result<Vec<ForensicabilityClass>> {
    if !(low_fraction > 0.0 && low_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "low_fraction {low_fraction} outside (0,1)"
        )));
    }
    let n = pairs.len();
    let low_count = ((low_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    assign_labels_impl(pairs, centers, low_count)
}

pub(crate) fn assign_labels_impl<R: Real>(
    pairs: &[ScorePair<R>],
    centers: &CenterSet<R>,
    low_count: usize,
) -> Result<Vec<ForensicabilityClass>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no samples to label".into()));
    }
    let mut by_low_distance: Vec<(R, usize)> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (euclidean([p.y_q, p.y_f], centers.e[2]), i))
        .collect();
    by_low_distance.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    });
    let mut labels = vec![ForensicabilityClass::HighPositive; pairs.len()];
    for &(_, i) in by_low_distance.iter().take(low_count) {
        labels[i] = ForensicabilityClass::Low;
    }
    for (i, p) in pairs.iter().enumerate() {
        if labels[i] == ForensicabilityClass::Low {
            continue;
        }
        let y = [p.y_q, p.y_f];
        let d1 = euclidean(y, centers.e[0]);
        let d2 = euclidean(y, centers.e[1]);
        labels[i] = if d1 <= d2 {
            ForensicabilityClass::HighPositive
        } else {
            ForensicabilityClass::HighNegative
        };
    }
    Ok(labels)
}

/// Forensicability score of a predicted point:
/// `F = beta (1 - K3) + (1 - beta) |D1 - D2|`, where `K3` is the RBF kernel
/// against the low center and `D1`, `D2` are unweighted Euclidean distances
/// to the two high centers. Small `F` means low forensicability. The
/// no-low-class ablation scores with `|D1 - D2|` alone.
pub fn forensicability_score<R: Real>(
    y_hat: [R; 2],
    centers: &CenterSet<R>,
    beta: R,
    ablation: Ablation,
) -> R {
    let d1 = euclidean(y_hat, centers.e[0]);
    let d2 = euclidean(y_hat, centers.e[1]);
    let spread = (d1 - d2).abs();
    match ablation {
        Ablation::NoLowClass => spread,
        _ => {
            let k3 = rbf_kernel(y_hat, centers.e[2], centers.lambda[2], centers.sigma);
            beta * (R::one() - k3) + (R::one() - beta) * spread
        }
    }
}

/// Arithmetic mean of frame-level scores.
pub fn video_score<R: Real>(frames: &[R]) -> Result<R> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frame scores to average".into()));
    }
    let sum = frames.iter().fold(R::zero(), |acc, &v| acc + v);
    Ok(sum / count(frames.len()))
}

/// The trained forensicability assessment model.
#[derive(Debug, Clone)]
pub struct FanetModel<R: Real> {
    smapnet_q: Net<R>,
    smapnet_f: Net<R>,
    scaler_q: FeatureScaler<R>,
    scaler_f: FeatureScaler<R>,
    pub centers: CenterSet<R>,
    pub beta: R,
    pub ablation: Ablation,
}

impl<R: Real> FanetModel<R> {
    pub fn smapnet_q(&self) -> &Net<R> {
        &self.smapnet_q
    }

    pub fn smapnet_f(&self) -> &Net<R> {
        &self.smapnet_f
    }

    pub fn flops(&self) -> f64 {
        self.smapnet_q.flops() + self.smapnet_f.flops()
    }

    /// Maps a (94, 128) feature pair to the predicted score point
    /// `(y_q_hat, y_f_hat)`.
    pub fn predict(&self, quality: &[R], forensic: &[R]) -> Result<[R; 2]> {
        if quality.len() != QUALITY_DIM || forensic.len() != FORENSIC_DIM {
            return Err(Error::DimensionMismatch(format!(
                "feature dimensions ({}, {}) do not form the {INPUT_DIM}-dim model input",
                quality.len(),
                forensic.len()
            )));
        }
        let q = self.scaler_q.transform(quality);
        let f = match self.ablation {
            Ablation::QualityOnly => self.scaler_f.transform(&vec![R::zero(); FORENSIC_DIM]),
            _ => self.scaler_f.transform(forensic),
        };
        let yq = self.smapnet_q.infer(&q)?[0];
        let yf = self.smapnet_f.infer(&f)?[0];
        Ok([yq, yf])
    }

    /// Forensicability score of a feature pair (small = low forensicability).
    pub fn score(&self, quality: &[R], forensic: &[R]) -> Result<R> {
        let y = self.predict(quality, forensic)?;
        Ok(self.score_of_point(y))
    }

    /// See [`forensicability_score`].
    pub fn score_of_point(&self, y_hat: [R; 2]) -> R {
        forensicability_score(y_hat, &self.centers, self.beta, self.ablation)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        crate::nn::checkpoint::write_u32(w, FORMAT_VERSION)?;
        w.write_all(&[self.ablation.tag()])?;
        write_f64(w, self.beta)?;
        write_f64(w, self.centers.sigma)?;
        write_f64(w, self.centers.eta)?;
        for c in 0..3 {
            for d in 0..2 {
                write_f64(w, self.centers.e[c][d])?;
            }
        }
        for c in 0..3 {
            for d in 0..2 {
                write_f64(w, self.centers.lambda[c][d])?;
            }
        }
        let (m, n) = self.centers.accumulators();
        for c in 0..3 {
            for d in 0..2 {
                write_f64(w, m[c][d])?;
            }
        }
        for c in 0..3 {
            write_f64(w, n[c])?;
        }
        self.scaler_q.write(w)?;
        self.scaler_f.write(w)?;
        write_net(w, &self.smapnet_q)?;
        write_net(w, &self.smapnet_f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r)
    }

    pub fn read<I: Read>(r: &mut I) -> Result<Self> {
        expect_magic(r, MODEL_MAGIC)?;
        expect_version(r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let ablation = Ablation::from_tag(tag[0])
            .ok_or_else(|| Error::Format(format!("unknown ablation tag {}", tag[0])))?;
        let beta = read_f64(r)?;
        let sigma = read_f64(r)?;
        let eta = read_f64(r)?;
        let mut e = [[R::zero(); 2]; 3];
        for c in 0..3 {
            for d in 0..2 {
                e[c][d] = read_f64(r)?;
            }
        }
        let mut centers = CenterSet::with_centers(e, sigma, eta)?;
        let mut lambda = [[R::zero(); 2]; 3];
        for c in 0..3 {
            for d in 0..2 {
                lambda[c][d] = read_f64(r)?;
            }
        }
        centers.lambda = lambda;
        let mut m = [[R::zero(); 2]; 3];
        for c in 0..3 {
            for d in 0..2 {
                m[c][d] = read_f64(r)?;
            }
        }
        let mut n = [R::zero(); 3];
        for c in 0..3 {
            n[c] = read_f64(r)?;
        }
        centers.set_accumulators(m, n);
        let scaler_q = FeatureScaler::read(r)?;
        let scaler_f = FeatureScaler::read(r)?;
        let smapnet_q = read_net(r)?;
        let smapnet_f = read_net(r)?;
        if smapnet_q.input_dim() != QUALITY_DIM || smapnet_f.input_dim() != FORENSIC_DIM {
            return Err(Error::Format(format!(
                "score-mapping input dims ({}, {}) do not match ({QUALITY_DIM}, {FORENSIC_DIM})",
                smapnet_q.input_dim(),
                smapnet_f.input_dim()
            )));
        }
        Ok(Self {
            smapnet_q,
            smapnet_f,
            scaler_q,
            scaler_f,
            centers,
            beta,
            ablation,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FanetTrainConfig<R: Real> {
    pub sgd: SgdConfig<R>,
    pub epochs: usize,
    pub batch_size: usize,
    pub low_fraction: f64,
    pub sigma: R,
    pub eta: R,
    pub beta: R,
    pub ablation: Ablation,
    /// Optional hidden width for the score-mapping networks (default: a
    /// single dense layer per branch).
    pub hidden: Option<usize>,
    pub seed: u64,
}

impl<R: Real> Default for FanetTrainConfig<R> {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            epochs: 50,
            batch_size: 128,
            low_fraction: DEFAULT_LOW_FRACTION,
            sigma: real(DEFAULT_SIGMA),
            eta: real(DEFAULT_ETA),
            beta: real(DEFAULT_BETA),
            ablation: Ablation::Full,
            hidden: None,
            seed: 0,
        }
    }
}

/// Statistics returned alongside the trained model.
#[derive(Debug, Clone)]
pub struct FanetTrainReport<R: Real> {
    /// Mean loss per epoch, preceded by the loss at initialization.
    pub losses: Vec<R>,
    pub labels: Vec<ForensicabilityClass>,
    pub class_counts: [usize; 3],
}

fn smapnet<R: Real>(input: usize, hidden: Option<usize>, rng: &mut ChaCha8Rng) -> Result<Net<R>> {
    let layers = match hidden {
        None => vec![Layer::Dense(DenseLayer::init(
            input,
            1,
            Activation::Sigmoid,
            rng,
        )?)],
        Some(h) => vec![
            Layer::Dense(DenseLayer::init(input, h, Activation::Relu, rng)?),
            Layer::Dense(DenseLayer::init(h, 1, Activation::Sigmoid, rng)?),
        ],
    };
    Net::new(layers)
}

/// Per-sample gradients of the loss w.r.t. the predicted point and the
/// kernel weights. Clamped kernels contribute no gradient.
pub(crate) fn loss_gradients<R: Real>(
    y_hat: [R; 2],
    class: ForensicabilityClass,
    centers: &CenterSet<R>,
    active_classes: usize,
) -> ([R; 2], [[R; 2]; 3]) {
    let mut d_y = [R::zero(); 2];
    let mut d_lambda = [[R::zero(); 2]; 3];
    let lo = real::<R>(CLAMP);
    let hi = R::one() - lo;
    let sigma_sq = centers.sigma * centers.sigma;
    for c in 0..active_classes {
        let k = rbf_kernel(y_hat, centers.e[c], centers.lambda[c], centers.sigma);
        if k <= lo || k >= hi {
            continue;
        }
        let d_loss_d_k = if class.index() == c {
            -(R::one() / k)
        } else {
            R::one() / (R::one() - k)
        };
        for d in 0..2 {
            let diff = y_hat[d] - centers.e[c][d];
            let lam = centers.lambda[c][d];
            let d_k_d_y = -k * lam * lam * diff / sigma_sq;
            let d_k_d_lambda = -k * lam * diff * diff / sigma_sq;
            d_y[d] += d_loss_d_k * d_k_d_y;
            d_lambda[c][d] = d_loss_d_k * d_k_d_lambda;
        }
    }
    (d_y, d_lambda)
}

/// Trains FANet per the training algorithm: labels are assigned once from
/// the supervision scores, then every mini-batch runs forward passes of both
/// score-mapping networks, the kernel loss, backpropagation into the network
/// weights and the kernel weights, an SGD step, and the momentum center
/// update.
pub fn train_fanet<R: Real>(
    features: &[(Vec<R>, Vec<R>)],
    supervision: &[ScorePair<R>],
    cfg: &FanetTrainConfig<R>,
) -> Result<(FanetModel<R>, FanetTrainReport<R>)> {
    cfg.sgd.validate()?;
    if features.len() != supervision.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows vs {} supervision pairs",
            features.len(),
            supervision.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be > 0".into()));
    }
    for (q, f) in features {
        if q.len() != QUALITY_DIM || f.len() != FORENSIC_DIM {
            return Err(Error::DimensionMismatch(format!(
                "feature row dims ({}, {}) do not form the {INPUT_DIM}-dim model input",
                q.len(),
                f.len()
            )));
        }
    }

    // Centers and one-off label assignment (training algorithm steps 1-2).
    let mut centers = match cfg.ablation {
        Ablation::RandomCenters => CenterSet::init_random(cfg.sigma, cfg.eta, cfg.seed)?,
        _ => CenterSet::init(cfg.sigma, cfg.eta)?,
    };
    let active = cfg.ablation.active_classes();
    let labels = match cfg.ablation {
        Ablation::NoLowClass => assign_labels_impl(supervision, &centers, 0)?,
        _ => {
            if !(cfg.low_fraction > 0.0 && cfg.low_fraction < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "low_fraction {} outside (0,1)",
                    cfg.low_fraction
                )));
            }
            assign_labels(supervision, &centers, cfg.low_fraction)?
        }
    };
    let mut class_counts = [0usize; 3];
    for l in &labels {
        class_counts[l.index()] += 1;
    }
    for c in 0..active {
        if class_counts[c] < 3 {
            return Err(Error::TrainingFailed(format!(
                "class {c} has only {} samples after labeling (counts {:?}); need at least 3",
                class_counts[c], class_counts
            )));
        }
    }

    // Feature scalers; the quality-only ablation blanks forensic inputs.
    let q_rows: Vec<Vec<R>> = features.iter().map(|(q, _)| q.clone()).collect();
    let f_rows: Vec<Vec<R>> = features
        .iter()
        .map(|(_, f)| match cfg.ablation {
            Ablation::QualityOnly => vec![R::zero(); FORENSIC_DIM],
            _ => f.clone(),
        })
        .collect();
    let scaler_q = FeatureScaler::fit(&q_rows)?;
    let scaler_f = FeatureScaler::fit(&f_rows)?;
    let q_in: Vec<Vec<R>> = q_rows.iter().map(|r| scaler_q.transform(r)).collect();
    let f_in: Vec<Vec<R>> = f_rows.iter().map(|r| scaler_f.transform(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0ffa_4e71);
    let mut smapnet_q = smapnet(QUALITY_DIM, cfg.hidden, &mut rng)?;
    let mut smapnet_f = smapnet(FORENSIC_DIM, cfg.hidden, &mut rng)?;
    let mut state_q = SgdState::for_net(&smapnet_q);
    let mut state_f = SgdState::for_net(&smapnet_f);
    let mut lambda_velocity = [[R::zero(); 2]; 3];

    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let initial = mean_loss(&smapnet_q, &smapnet_f, &q_in, &f_in, &labels, &centers, active)?;
    losses.push(initial);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.sgd.lr_at_epoch(epoch);
        let mut epoch_loss = R::zero();
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let inv_n = R::one() / count::<R>(batch.len());
            let mut grads_q = smapnet_q.zero_grads();
            let mut grads_f = smapnet_f.zero_grads();
            let mut d_lambda_sum = [[R::zero(); 2]; 3];
            let mut batch_loss = R::zero();
            let mut batch_points = Vec::with_capacity(batch.len());
            for &i in batch {
                let acts_q = smapnet_q.forward(&q_in[i])?;
                let acts_f = smapnet_f.forward(&f_in[i])?;
                let y_hat = [acts_q.output()[0], acts_f.output()[0]];
                batch_loss += fanet_loss(y_hat, labels[i], &centers, active);
                let (d_y, d_lambda) = loss_gradients(y_hat, labels[i], &centers, active);
                smapnet_q.backward(&acts_q, &[d_y[0] * inv_n], &mut grads_q)?;
                smapnet_f.backward(&acts_f, &[d_y[1] * inv_n], &mut grads_f)?;
                for c in 0..3 {
                    for d in 0..2 {
                        d_lambda_sum[c][d] += d_lambda[c][d] * inv_n;
                    }
                }
                batch_points.push((y_hat, labels[i]));
            }
            batch_loss = batch_loss * inv_n;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingFailed(format!(
                    "non-finite loss in epoch {epoch}"
                )));
            }
            smapnet_q.sgd_step(&grads_q, &mut state_q, &cfg.sgd, epoch)?;
            smapnet_f.sgd_step(&grads_f, &mut state_f, &cfg.sgd, epoch)?;
            for c in 0..3 {
                crate::nn::sgd_step_with_lr(
                    &mut centers.lambda[c],
                    &d_lambda_sum[c],
                    &mut lambda_velocity[c],
                    &cfg.sgd,
                    lr,
                )?;
            }
            centers.update(&batch_points);
            epoch_loss += batch_loss;
            batches += 1;
        }
        losses.push(epoch_loss / count(batches));
    }

    let model = FanetModel {
        smapnet_q,
        smapnet_f,
        scaler_q,
        scaler_f,
        centers,
        beta: cfg.beta,
        ablation: cfg.ablation,
    };
    Ok((
        model,
        FanetTrainReport {
            losses,
            labels,
            class_counts,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn mean_loss<R: Real>(
    smapnet_q: &Net<R>,
    smapnet_f: &Net<R>,
    q_in: &[Vec<R>],
    f_in: &[Vec<R>],
    labels: &[ForensicabilityClass],
    centers: &CenterSet<R>,
    active: usize,
) -> Result<R> {
    let mut total = R::zero();
    for i in 0..q_in.len() {
        let yq = smapnet_q.infer(&q_in[i])?[0];
        let yf = smapnet_f.infer(&f_in[i])?[0];
        total += fanet_loss([yq, yf], labels[i], centers, active);
    }
    Ok(total / count(q_in.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_centers() -> CenterSet<f64> {
        CenterSet::init(DEFAULT_SIGMA, DEFAULT_ETA).unwrap()
    }

    #[test]
    fn kernel_is_one_at_the_center() {
        let k = rbf_kernel([0.3, 0.8], [0.3, 0.8], [1.0, 1.0], 0.1);
        assert_eq!(k, 1.0);
    }

    #[test]
    fn kernel_matches_hand_evaluation() {
        // offset (0.1, 0), unit weights, sigma 0.1 -> exp(-0.5).
        let k = rbf_kernel([0.6, 0.5], [0.5, 0.5], [1.0, 1.0], 0.1);
        assert!((k - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k - 0.6065306597126334).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_annihilate_the_distance() {
        let k = rbf_kernel([0.9, 0.1], [0.0, 1.0], [0.0, 0.0], 0.1);
        assert_eq!(k, 1.0);
    }

    #[test]
    fn kernel_stays_in_unit_interval() {
        // Over the score domain [0,1]^2 with moderate weights the kernel
        // never underflows, so (0, 1] holds in floating point as well.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let y = [rng.random::<f64>(), rng.random::<f64>()];
            let e = [rng.random::<f64>(), rng.random::<f64>()];
            let l = [rng.random::<f64>() * 1.5, rng.random::<f64>() * 1.5];
            let k = rbf_kernel(y, e, l, 0.1);
            assert!(k > 0.0 && k <= 1.0);
            let weighted_zero = l[0] * (y[0] - e[0]) == 0.0 && l[1] * (y[1] - e[1]) == 0.0;
            assert_eq!(k == 1.0, weighted_zero);
        }
    }

    #[test]
    fn loss_is_near_zero_at_the_labeled_center() {
        let centers = default_centers();
        let loss = fanet_loss([0.0, 0.5], ForensicabilityClass::Low, &centers, 3);
        assert!(loss >= 0.0);
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn loss_explodes_at_a_wrong_center() {
        let centers = default_centers();
        // Sitting exactly on e1 while labeled low: the e1 kernel clamps at
        // 1 - 1e-12 and contributes -ln(1e-12) ~ 27.6.
        let loss = fanet_loss([1.0, 1.0], ForensicabilityClass::Low, &centers, 3);
        assert!(loss > 20.0, "loss {loss}");
    }

    #[test]
    fn loss_is_nonnegative_everywhere() {
        let centers = default_centers();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let y = [rng.random::<f64>() * 3.0 - 1.0, rng.random::<f64>() * 3.0 - 1.0];
            for class in [
                ForensicabilityClass::HighPositive,
                ForensicabilityClass::HighNegative,
                ForensicabilityClass::Low,
            ] {
                assert!(fanet_loss(y, class, &centers, 3) >= 0.0);
            }
        }
    }

    #[test]
    fn exact_low_center_is_labeled_low() {
        let centers = default_centers();
        let pairs = vec![
            ScorePair::new(0.0, 0.5).unwrap(),
            ScorePair::new(1.0, 1.0).unwrap(),
            ScorePair::new(1.0, 0.0).unwrap(),
        ];
        let labels = assign_labels(&pairs, &centers, 0.3).unwrap();
        assert_eq!(labels[0], ForensicabilityClass::Low);
    }

    #[test]
    fn nearest_high_center_wins() {
        let centers = default_centers();
        // (1, 0.9): distance 0.1 to e1, 0.9 to e2.
        let pairs = vec![
            ScorePair::new(0.0, 0.5).unwrap(),
            ScorePair::new(1.0, 0.9).unwrap(),
            ScorePair::new(1.0, 0.1).unwrap(),
        ];
        let labels = assign_labels(&pairs, &centers, 0.3).unwrap();
        assert_eq!(labels[1], ForensicabilityClass::HighPositive);
        assert_eq!(labels[2], ForensicabilityClass::HighNegative);
    }

    #[test]
    fn low_fraction_counts_exactly() {
        let centers = default_centers();
        let pairs: Vec<ScorePair<f64>> = (0..10)
            .map(|i| ScorePair::new(i as f64 / 10.0, 0.5).unwrap())
            .collect();
        let labels = assign_labels(&pairs, &centers, 0.3).unwrap();
        let low = labels
            .iter()
            .filter(|l| **l == ForensicabilityClass::Low)
            .count();
        assert_eq!(low, 3);
        // Ties broken by index: the three smallest quality scores are the
        // closest to (0, 0.5).
        assert_eq!(labels[0], ForensicabilityClass::Low);
        assert_eq!(labels[1], ForensicabilityClass::Low);
        assert_eq!(labels[2], ForensicabilityClass::Low);
    }

    #[test]
    fn empty_sample_list_is_rejected() {
        let centers = default_centers();
        assert!(assign_labels::<f64>(&[], &centers, 0.3).is_err());
    }

    #[test]
    fn center_update_fixed_point() {
        let mut centers = default_centers();
        // Accumulators consistent with N = 4 samples sitting at the center.
        let e1 = centers.e[0];
        centers.set_accumulators(
            [
                [4.0 * e1[0], 4.0 * e1[1]],
                centers.accumulators().0[1],
                centers.accumulators().0[2],
            ],
            [4.0, 1.0, 1.0],
        );
        let batch: Vec<([f64; 2], ForensicabilityClass)> = (0..4)
            .map(|_| (e1, ForensicabilityClass::HighPositive))
            .collect();
        centers.update(&batch);
        assert_eq!(centers.e[0], e1);
    }

    #[test]
    fn first_update_matches_hand_iteration() {
        // m = e_init, n = 1; one sample y:
        // e <- (0.9 e + 0.1 y) / (0.9 + 0.1).
        let mut centers = default_centers();
        let y = [0.4, 0.6];
        centers.update(&[(y, ForensicabilityClass::HighPositive)]);
        let expected = [
            (0.9 * 1.0 + 0.1 * y[0]) / (0.9 + 0.1),
            (0.9 * 1.0 + 0.1 * y[1]) / (0.9 + 0.1),
        ];
        assert!((centers.e[0][0] - expected[0]).abs() < 1e-15);
        assert!((centers.e[0][1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn eta_one_freezes_centers() {
        let mut centers = CenterSet::init(0.1, 1.0).unwrap();
        let before = centers.e;
        for step in 0..50 {
            let y = [step as f64 * 0.01, 1.0 - step as f64 * 0.01];
            centers.update(&[
                (y, ForensicabilityClass::HighPositive),
                (y, ForensicabilityClass::HighNegative),
                (y, ForensicabilityClass::Low),
            ]);
        }
        assert_eq!(centers.e, before);
    }

    #[test]
    fn eta_zero_gives_batch_class_means() {
        let mut centers = CenterSet::<f64>::init(0.1, 0.0).unwrap();
        let batch = vec![
            ([0.2, 0.4], ForensicabilityClass::Low),
            ([0.6, 0.8], ForensicabilityClass::Low),
        ];
        centers.update(&batch);
        assert!((centers.e[2][0] - 0.4).abs() < 1e-15);
        assert!((centers.e[2][1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn empty_class_in_batch_leaves_its_center_unchanged() {
        let mut centers = default_centers();
        let e2 = centers.e[1];
        let e3 = centers.e[2];
        centers.update(&[([0.9, 0.9], ForensicabilityClass::HighPositive)]);
        assert_eq!(centers.e[1], e2);
        assert_eq!(centers.e[2], e3);
    }

    #[test]
    fn score_is_zero_at_the_low_center() {
        let centers = default_centers();
        let f = forensicability_score([0.0, 0.5], &centers, 0.5, Ablation::Full);
        assert!(f.abs() < 1e-9, "F {f}");
    }

    #[test]
    fn score_is_one_at_the_high_positive_center() {
        let centers = default_centers();
        let f = forensicability_score([1.0, 1.0], &centers, 0.5, Ablation::Full);
        assert!((f - 1.0).abs() < 1e-9, "F {f}");
    }

    #[test]
    fn beta_one_collapses_to_the_kernel_term() {
        let centers = default_centers();
        for y in [[0.2, 0.3], [0.8, 0.4], [0.5, 0.5]] {
            let f = forensicability_score(y, &centers, 1.0, Ablation::Full);
            let k3 = rbf_kernel(y, centers.e[2], centers.lambda[2], centers.sigma);
            assert!((f - (1.0 - k3)).abs() < 1e-15);
        }
    }

    #[test]
    fn no_low_class_scoring_ignores_e3() {
        let mut a = default_centers();
        let b = default_centers();
        a.e[2] = [9.0, -3.0];
        let y = [0.7, 0.2];
        let fa = forensicability_score(y, &a, 0.5, Ablation::NoLowClass);
        let fb = forensicability_score(y, &b, 0.5, Ablation::NoLowClass);
        assert_eq!(fa, fb);
        let d1 = ((y[0] - 1.0f64).powi(2) + (y[1] - 1.0).powi(2)).sqrt();
        let d2 = ((y[0] - 1.0f64).powi(2) + y[1].powi(2)).sqrt();
        assert!((fa - (d1 - d2).abs()) < 1e-15);
    }

    #[test]
    fn random_centers_differ_from_domain_initialization() {
        let random = CenterSet::<f64>::init_random(0.1, 0.9, 7).unwrap();
        let fixed = default_centers();
        assert_ne!(random.e, fixed.e);
        let again = CenterSet::<f64>::init_random(0.1, 0.9, 7).unwrap();
        assert_eq!(random.e, again.e);
    }

    #[test]
    fn video_score_examples() {
        assert!((video_score(&[0.2f64, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(video_score(&[0.7f64]).unwrap(), 0.7);
        let a = video_score(&[0.1f64, 0.5, 0.9]).unwrap();
        let b = video_score(&[0.9f64, 0.1, 0.5]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(video_score::<f64>(&[]).is_err());
    }
}
