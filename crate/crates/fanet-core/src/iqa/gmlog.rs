//! Gradient-magnitude / Laplacian-of-Gaussian joint statistics (40 values):
//! Prewitt gradient magnitude and a LoG response are jointly normalized by
//! the local root energy, quantized into a 10x10 joint histogram, and
//! summarized by the two marginals plus two conditional-dependency vectors.

use crate::error::Result;
use crate::image::{gaussian_kernel, GrayImage, Plane};
use crate::iqa::mscn::MSCN_C;
use crate::num::{count, real, Real};

pub const GMLOG_DIM: usize = 40;
const BINS: usize = 10;
/// Normalized responses are histogrammed over `[0, BIN_RANGE]`; the last bin
/// absorbs overflow.
const BIN_RANGE: f64 = 2.0;
const LOG_SIGMA: f64 = 0.5;

/// 40 features: `[P_gm (10) | P_log (10) | Q_gm (10) | Q_log (10)]` where the
/// `P` vectors are the joint-histogram marginals (each sums to 1) and the
/// `Q` vectors average the conditional probabilities across the other map's
/// bins.
pub fn gmlog_features<R: Real>(img: &GrayImage<R>) -> Result<Vec<R>> {
    let plane = img.plane();

    // Prewitt gradient magnitude.
    let px: Vec<R> = [-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0]
        .iter()
        .map(|&v| real::<R>(v))
        .collect();
    let py: Vec<R> = [-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
        .iter()
        .map(|&v| real::<R>(v))
        .collect();
    let gx = plane.convolve2d(&px, 3, 3);
    let gy = plane.convolve2d(&py, 3, 3);
    let gm = Plane {
        width: plane.width,
        height: plane.height,
        data: gx
            .data
            .iter()
            .zip(&gy.data)
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .collect(),
    };

    // Laplacian of Gaussian, zero-mean normalized.
    let log_kernel = log_kernel::<R>(LOG_SIGMA);
    let log = plane.convolve2d(&log_kernel, 5, 5);

    // Joint adaptive normalization by the local root energy of both maps.
    let energy = Plane {
        width: plane.width,
        height: plane.height,
        data: gm
            .data
            .iter()
            .zip(&log.data)
            .map(|(&g, &l)| (g * g + l * l) * real::<R>(0.5))
            .collect(),
    };
    let window = gaussian_kernel::<R>(3, 7.0 / 6.0);
    let local = energy.convolve_separable(&window);
    let eps = real::<R>(MSCN_C);
    let norm = |v: R, i: usize| v / (local.data[i].max(R::zero()).sqrt() + eps);

    // Joint histogram over (gm bin, |log| bin).
    let mut joint = [[0usize; BINS]; BINS];
    for i in 0..gm.data.len() {
        let g = norm(gm.data[i], i);
        let l = norm(log.data[i], i).abs();
        joint[bin_of(g)][bin_of(l)] += 1;
    }
    let total = count::<R>(gm.data.len());

    let mut p_gm = [R::zero(); BINS];
    let mut p_log = [R::zero(); BINS];
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let mass = count::<R>(c) / total;
            p_gm[i] += mass;
            p_log[j] += mass;
        }
    }

    // Conditional dependency: average of P(gm bin | log bin) over occupied
    // log bins, and vice versa.
    let occupied_log = p_log.iter().filter(|&&m| m > R::zero()).count();
    let occupied_gm = p_gm.iter().filter(|&&m| m > R::zero()).count();
    let mut q_gm = [R::zero(); BINS];
    let mut q_log = [R::zero(); BINS];
    for i in 0..BINS {
        for j in 0..BINS {
            let mass = count::<R>(joint[i][j]) / total;
            if p_log[j] > R::zero() {
                q_gm[i] += mass / p_log[j] / count::<R>(occupied_log);
            }
            if p_gm[i] > R::zero() {
                q_log[j] += mass / p_gm[i] / count::<R>(occupied_gm);
            }
        }
    }

    let mut features = Vec::with_capacity(GMLOG_DIM);
    features.extend_from_slice(&p_gm);
    features.extend_from_slice(&p_log);
    features.extend_from_slice(&q_gm);
    features.extend_from_slice(&q_log);
    Ok(features)
}

#[inline]
fn bin_of<R: Real>(v: R) -> usize {
    let x = v.to_f64().unwrap_or(0.0).max(0.0);
    ((x / (BIN_RANGE / BINS as f64)) as usize).min(BINS - 1)
}

fn log_kernel<R: Real>(sigma: f64) -> Vec<R> {
    let mut k = Vec::with_capacity(25);
    for y in -2i32..=2 {
        for x in -2i32..=2 {
            let r2 = (x * x + y * y) as f64;
            let s2 = sigma * sigma;
            k.push((r2 - 2.0 * s2) / (s2 * s2) * (-r2 / (2.0 * s2)).exp());
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.into_iter().map(|v| real::<R>(v - mean)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn marginals_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = GrayImage::<f64>::from_fn(48, 48, |_, _| rng.random()).unwrap();
        let f = gmlog_features(&img).unwrap();
        let gm_sum: f64 = f[0..10].iter().sum();
        let log_sum: f64 = f[10..20].iter().sum();
        assert!((gm_sum - 1.0).abs() < 1e-9, "gm marginal {gm_sum}");
        assert!((log_sum - 1.0).abs() < 1e-9, "log marginal {log_sum}");
    }

    #[test]
    fn constant_image_concentrates_in_bin_zero() {
        let img = GrayImage::<f64>::from_fn(32, 32, |_, _| 0.5).unwrap();
        let f = gmlog_features(&img).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[10], 1.0);
        assert!(f[1..10].iter().all(|&v| v == 0.0));
        assert!(f[11..20].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_edge_puts_mass_in_top_gradient_bins() {
        let edge = GrayImage::<f64>::from_fn(48, 48, |x, _| if x < 24 { 0.1 } else { 0.9 })
            .unwrap();
        let flat = GrayImage::<f64>::from_fn(48, 48, |_, _| 0.1).unwrap();
        let fe = gmlog_features(&edge).unwrap();
        let ff = gmlog_features(&flat).unwrap();
        let top_edge: f64 = fe[5..10].iter().sum();
        let top_flat: f64 = ff[5..10].iter().sum();
        assert!(
            top_edge > top_flat,
            "edge top mass {top_edge} vs flat {top_flat}"
        );
        assert!(top_edge > 0.0);
    }

    #[test]
    fn dimension_is_40() {
        let img = GrayImage::<f64>::from_fn(32, 32, |x, y| ((x + y) % 5) as f64 / 5.0).unwrap();
        assert_eq!(gmlog_features(&img).unwrap().len(), GMLOG_DIM);
    }
}
