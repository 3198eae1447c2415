//! Wavelet-domain quality statistics: a 3-level separable 9/7 decomposition
//! with a GGD fit per detail subband (3 scales x 3 orientations, 18 values).

use crate::error::{Error, Result};
use crate::image::{reflect_101, GrayImage, Plane};
use crate::iqa::fit::{degenerate_ggd, fit_ggd_lenient};
use crate::num::{real, Real};

pub const BIQI_DIM: usize = 18;
const LEVELS: usize = 3;

/// Biorthogonal 9/7 analysis filters (DC gain 1 lowpass, zero-mean highpass).
const LOWPASS: [f64; 9] = [
    0.026748757410810898,
    -0.016864118442875896,
    -0.078223266528987848,
    0.266864118442872328,
    0.602949018236358901,
    0.266864118442872328,
    -0.078223266528987848,
    -0.016864118442875896,
    0.026748757410810898,
];
const HIGHPASS: [f64; 7] = [
    0.091271763114249475,
    -0.057543526228499747,
    -0.591271763114249560,
    1.115087052456994000,
    -0.591271763114249560,
    -0.057543526228499747,
    0.091271763114249475,
];

/// 18 wavelet features: for each level 1..3 and each detail orientation
/// `[xhigh-ylow, xlow-yhigh, xhigh-yhigh]`, the GGD `(alpha, sigma)`.
pub fn biqi_features<R: Real>(img: &GrayImage<R>) -> Result<Vec<R>> {
    if img.width() < 8 || img.height() < 8 {
        return Err(Error::InvalidInput(format!(
            "image {}x{} too small for a {LEVELS}-level decomposition",
            img.width(),
            img.height()
        )));
    }
    let mut features = Vec::with_capacity(BIQI_DIM);
    let mut approx = img.plane().clone();
    for _ in 0..LEVELS {
        let (ll, lh, hl, hh) = dwt_level(&approx);
        for band in [&lh, &hl, &hh] {
            let ggd = fit_ggd_lenient(&band.data).unwrap_or_else(degenerate_ggd);
            features.push(ggd.alpha);
            features.push(ggd.sigma);
        }
        approx = ll;
    }
    debug_assert_eq!(features.len(), BIQI_DIM);
    Ok(features)
}

/// One separable analysis level: filter + downsample along x, then along y.
/// Returns `(LL, LH, HL, HH)` where the first letter is the x-axis filter
/// band (L = lowpass) and the second the y-axis band.
fn dwt_level<R: Real>(p: &Plane<R>) -> (Plane<R>, Plane<R>, Plane<R>, Plane<R>) {
    let low_x = filter_down_x(p, &LOWPASS);
    let high_x = filter_down_x(p, &HIGHPASS);
    let ll = filter_down_y(&low_x, &LOWPASS);
    let lh = filter_down_y(&high_x, &LOWPASS);
    let hl = filter_down_y(&low_x, &HIGHPASS);
    let hh = filter_down_y(&high_x, &HIGHPASS);
    (ll, lh, hl, hh)
}

fn filter_down_x<R: Real>(p: &Plane<R>, taps: &[f64]) -> Plane<R> {
    let half = taps.len() / 2;
    let out_w = p.width.div_ceil(2);
    let mut out = Plane::zeros(out_w, p.height);
    for y in 0..p.height {
        for k in 0..out_w {
            let mut sum = R::zero();
            for (t, &w) in taps.iter().enumerate() {
                let xi = reflect_101(2 * k as isize + t as isize - half as isize, p.width);
                sum = real::<R>(w).mul_add(p.data[y * p.width + xi], sum);
            }
            out.set(k, y, sum);
        }
    }
    out
}

fn filter_down_y<R: Real>(p: &Plane<R>, taps: &[f64]) -> Plane<R> {
    let half = taps.len() / 2;
    let out_h = p.height.div_ceil(2);
    let mut out = Plane::zeros(p.width, out_h);
    for k in 0..out_h {
        for x in 0..p.width {
            let mut sum = R::zero();
            for (t, &w) in taps.iter().enumerate() {
                let yi = reflect_101(2 * k as isize + t as isize - half as isize, p.height);
                sum = real::<R>(w).mul_add(p.data[yi * p.width + x], sum);
            }
            out.set(x, k, sum);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn filters_have_expected_gains() {
        let low: f64 = LOWPASS.iter().sum();
        let high: f64 = HIGHPASS.iter().sum();
        assert!((low - 1.0).abs() < 1e-12, "lowpass DC gain {low}");
        assert!(high.abs() < 1e-12, "highpass DC leak {high}");
    }

    #[test]
    fn dimension_is_18() {
        let img = GrayImage::<f64>::from_fn(64, 64, |x, y| ((x ^ y) % 9) as f64 / 9.0).unwrap();
        assert_eq!(biqi_features(&img).unwrap().len(), BIQI_DIM);
    }

    #[test]
    fn constant_image_yields_clamped_fits_without_nan() {
        let img = GrayImage::<f64>::from_fn(32, 32, |_, _| 0.77).unwrap();
        let f = biqi_features(&img).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        for level in 0..3 {
            for band in 0..3 {
                assert_eq!(f[level * 6 + band * 2], crate::iqa::fit::ALPHA_MIN);
            }
        }
    }

    #[test]
    fn doubling_contrast_doubles_scales_and_keeps_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let base = GrayImage::<f64>::from_fn(64, 64, |_, _| rng.random::<f64>() * 0.5).unwrap();
        let doubled = GrayImage::<f64>::from_fn(64, 64, |x, y| base.at(x, y) * 2.0).unwrap();
        let f = biqi_features(&base).unwrap();
        let g = biqi_features(&doubled).unwrap();
        for i in 0..BIQI_DIM / 2 {
            let (alpha_a, sigma_a) = (f[2 * i], f[2 * i + 1]);
            let (alpha_b, sigma_b) = (g[2 * i], g[2 * i + 1]);
            assert!((alpha_a - alpha_b).abs() < 1e-6, "{alpha_a} vs {alpha_b}");
            assert!((sigma_b - 2.0 * sigma_a).abs() < 1e-6 * sigma_a.max(1.0));
        }
    }

    #[test]
    fn noise_image_shapes_stay_strictly_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let img = GrayImage::<f64>::from_fn(64, 64, |_, _| rng.random()).unwrap();
        let f = biqi_features(&img).unwrap();
        for i in 0..BIQI_DIM / 2 {
            let alpha = f[2 * i];
            assert!(
                alpha > crate::iqa::fit::ALPHA_MIN && alpha < crate::iqa::fit::ALPHA_MAX,
                "alpha {alpha} hit a clamp"
            );
        }
    }
}
