//! Moment-matching fits of the (asymmetric) generalized Gaussian
//! distribution to coefficient samples.
//!
//! Shape estimation solves `rho(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a))`
//! against the sample moment ratio by bisection; `rho` is strictly
//! increasing on the clamp interval `[0.05, 10]`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::num::{count, real, Real};

pub const ALPHA_MIN: f64 = 0.05;
pub const ALPHA_MAX: f64 = 10.0;
/// Scale floor used for degenerate (all-zero or one-sided) inputs.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Second moments below this are treated as numerically zero.
const DEGENERATE_M2: f64 = 1e-24;
const MIN_SAMPLES: usize = 64;

/// Generalized Gaussian parameters: shape `alpha`, scale `sigma`
/// (root mean square of the samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdParams<R: Real> {
    pub alpha: R,
    pub sigma: R,
}

/// Asymmetric generalized Gaussian parameters. `one_sided` flags inputs
/// where one tail had no samples and the missing scale was floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdParams<R: Real> {
    pub alpha: R,
    pub sigma_left: R,
    pub sigma_right: R,
    pub mean: R,
    pub one_sided: bool,
}

/// `Gamma(2/a)^2 / (Gamma(1/a) * Gamma(3/a))`, computed in log space.
pub fn shape_ratio(alpha: f64) -> f64 {
    (2.0 * ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp()
}

/// Inverts [`shape_ratio`] by bisection, clamping to `[ALPHA_MIN, ALPHA_MAX]`.
fn solve_alpha(rho: f64) -> f64 {
    if !rho.is_finite() || rho <= shape_ratio(ALPHA_MIN) {
        return ALPHA_MIN;
    }
    if rho >= shape_ratio(ALPHA_MAX) {
        return ALPHA_MAX;
    }
    let (mut lo, mut hi) = (ALPHA_MIN, ALPHA_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shape_ratio(mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fits a zero-mean GGD. Requires at least 64 samples that are not all zero.
pub fn fit_ggd<R: Real>(samples: &[R]) -> Result<GgdParams<R>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "GGD fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    fit_ggd_lenient(samples).ok_or_else(|| Error::DegenerateInput(
        "GGD fit on all-zero samples".into(),
    ))
}

/// Moment-matching GGD fit without the sample-count gate; returns `None` for
/// all-zero input. Feature extractors use this directly and substitute
/// clamped degenerate parameters where it returns `None`.
pub fn fit_ggd_lenient<R: Real>(samples: &[R]) -> Option<GgdParams<R>> {
    let n = count::<R>(samples.len());
    let mut abs_sum = R::zero();
    let mut sq_sum = R::zero();
    for &x in samples {
        abs_sum += x.abs();
        sq_sum = x.mul_add(x, sq_sum);
    }
    let m2 = (sq_sum / n).to_f64().unwrap_or(0.0);
    if m2 < DEGENERATE_M2 {
        return None;
    }
    let e_abs = (abs_sum / n).to_f64().unwrap_or(0.0);
    let rho = e_abs * e_abs / m2;
    Some(GgdParams {
        alpha: real(solve_alpha(rho)),
        sigma: real(m2.sqrt()),
    })
}

/// Degenerate GGD stand-in for all-zero coefficient sets: the flattest
/// admissible peak (`alpha` at the lower clamp) with the floored scale.
pub fn degenerate_ggd<R: Real>() -> GgdParams<R> {
    GgdParams {
        alpha: real(ALPHA_MIN),
        sigma: real(SIGMA_FLOOR),
    }
}

/// Fits an asymmetric GGD with separate left/right second moments.
pub fn fit_aggd<R: Real>(samples: &[R]) -> Result<AggdParams<R>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "AGGD fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    Ok(fit_aggd_lenient(samples))
}

pub fn fit_aggd_lenient<R: Real>(samples: &[R]) -> AggdParams<R> {
    let mut left_sq = 0.0f64;
    let mut left_n = 0usize;
    let mut right_sq = 0.0f64;
    let mut right_n = 0usize;
    let mut abs_sum = 0.0f64;
    let mut sq_sum = 0.0f64;
    for &x in samples {
        let v = x.to_f64().unwrap_or(0.0);
        abs_sum += v.abs();
        sq_sum += v * v;
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
    }
    let n = samples.len() as f64;
    let m2 = sq_sum / n;
    if m2 < DEGENERATE_M2 {
        return AggdParams {
            alpha: real(ALPHA_MIN),
            sigma_left: real(SIGMA_FLOOR),
            sigma_right: real(SIGMA_FLOOR),
            mean: R::zero(),
            one_sided: true,
        };
    }
    let one_sided = left_n == 0 || right_n == 0;
    let sigma_l = if left_n == 0 {
        SIGMA_FLOOR
    } else {
        (left_sq / left_n as f64).sqrt().max(SIGMA_FLOOR)
    };
    let sigma_r = if right_n == 0 {
        SIGMA_FLOOR
    } else {
        (right_sq / right_n as f64).sqrt().max(SIGMA_FLOOR)
    };
    let gamma_hat = sigma_l / sigma_r;
    let r_hat = (abs_sum / n).powi(2) / m2;
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0)
        / (gamma_hat * gamma_hat + 1.0).powi(2);
    let alpha = solve_alpha(r_norm);
    let mean = (sigma_r - sigma_l) * (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp()
        * ((ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)) / 2.0).exp();
    AggdParams {
        alpha: real(alpha),
        sigma_left: real(sigma_l),
        sigma_right: real(sigma_r),
        mean: real(mean),
        one_sided,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_samples(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect()
    }

    fn laplacian_samples(n: usize, b: f64, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).max(1e-15).ln()
            })
            .collect()
    }

    #[test]
    fn shape_ratio_is_increasing() {
        let mut last = shape_ratio(ALPHA_MIN);
        let mut a = ALPHA_MIN;
        while a < ALPHA_MAX {
            a += 0.05;
            let r = shape_ratio(a.min(ALPHA_MAX));
            assert!(r > last, "shape ratio not increasing at alpha {a}");
            last = r;
        }
    }

    #[test]
    fn gaussian_samples_recover_alpha_two() {
        let samples = gaussian_samples(100_000, 0.7, 42);
        let fit = fit_ggd(&samples).unwrap();
        assert!(fit.alpha > 1.9 && fit.alpha < 2.1, "alpha {}", fit.alpha);
        assert!((fit.sigma - 0.7).abs() < 0.02, "sigma {}", fit.sigma);
    }

    #[test]
    fn laplacian_samples_recover_alpha_one() {
        let samples = laplacian_samples(100_000, 1.3, 7);
        let fit = fit_ggd(&samples).unwrap();
        assert!(fit.alpha > 0.95 && fit.alpha < 1.05, "alpha {}", fit.alpha);
    }

    #[test]
    fn two_point_samples_hit_the_upper_clamp() {
        // rho = 1 forces the flattest admissible shape.
        let samples: Vec<f64> = (0..128).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fit = fit_ggd(&samples).unwrap();
        assert_eq!(fit.alpha, ALPHA_MAX);
    }

    #[test]
    fn all_zero_samples_are_degenerate() {
        let samples = vec![0.0f64; 128];
        assert!(matches!(
            fit_ggd(&samples),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(fit_ggd(&[1.0f64; 32]).is_err());
    }

    #[test]
    fn symmetric_samples_give_balanced_aggd() {
        let samples = gaussian_samples(100_000, 0.5, 9);
        let fit = fit_aggd(&samples).unwrap();
        let ratio = fit.sigma_left / fit.sigma_right;
        assert!(ratio > 0.95 && ratio < 1.05, "ratio {ratio}");
        assert!(fit.mean.abs() < 0.02, "mean {}", fit.mean);
        assert!(!fit.one_sided);
    }

    #[test]
    fn shifted_samples_have_positive_mean_component() {
        let samples: Vec<f64> = gaussian_samples(10_000, 0.5, 3)
            .into_iter()
            .map(|x| x + 10.0)
            .collect();
        let fit = fit_aggd(&samples).unwrap();
        assert!(fit.mean > 0.0);
    }

    #[test]
    fn mirrored_input_swaps_sides_and_negates_mean() {
        let samples: Vec<f64> = gaussian_samples(50_000, 0.5, 5)
            .into_iter()
            .map(|x| x + 0.1)
            .collect();
        let mirrored: Vec<f64> = samples.iter().map(|x| -x).collect();
        let a = fit_aggd(&samples).unwrap();
        let b = fit_aggd(&mirrored).unwrap();
        assert_eq!(a.sigma_left, b.sigma_right);
        assert_eq!(a.sigma_right, b.sigma_left);
        assert!((a.mean + b.mean).abs() < 1e-12);
        assert!((a.alpha - b.alpha).abs() < 1e-9);
    }

    #[test]
    fn one_sided_input_floors_the_empty_side() {
        let samples: Vec<f64> = (0..128).map(|i| 0.5 + (i % 7) as f64 * 0.1).collect();
        let fit = fit_aggd(&samples).unwrap();
        assert!(fit.one_sided);
        assert_eq!(fit.sigma_left, SIGMA_FLOOR);
        assert!(fit.sigma_right > 0.0);
    }

    #[test]
    fn ggd_round_trip_recovers_shapes_within_ten_percent() {
        // Generator oracle: x = s * sign(u) * G^(1/alpha), G ~ Gamma(1/alpha, 1).
        use rand::Rng;
        use rand_distr::{Distribution, Gamma};
        for (i, &alpha) in [0.7f64, 1.0, 2.0, 4.0].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let gamma = Gamma::new(1.0 / alpha, 1.0).unwrap();
            let samples: Vec<f64> = (0..100_000)
                .map(|_| {
                    let g: f64 = gamma.sample(&mut rng);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * g.powf(1.0 / alpha)
                })
                .collect();
            let fit = fit_ggd(&samples).unwrap();
            let rel = (fit.alpha - alpha).abs() / alpha;
            assert!(rel < 0.10, "alpha {alpha}: fitted {} (rel {rel})", fit.alpha);
        }
    }
}
