//! Synthetic spoof generation: a genuine image is Gaussian blurred, blended
//! with a background, perspective warped, and cropped. Every stage is
//! deterministic given the recorded parameters, so any manifest entry
//! re-synthesizes bit-identically.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{GrayImage, MIN_IMAGE_SIDE};
use crate::num::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub blur_sigma: f64,
    pub blend_alpha: f64,
    /// Row-major 3x3 source-to-destination projective map.
    pub homography: [f64; 9],
    pub crop: CropRect,
    /// RNG seed recorded when the parameters were drawn.
    pub seed: u64,
}

impl SynthParams {
    /// Identity pipeline: no blur, full foreground, identity warp,
    /// full-frame crop.
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            blur_sigma: 0.0,
            blend_alpha: 1.0,
            homography: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            crop: CropRect {
                x: 0,
                y: 0,
                width,
                height,
            },
            seed: 0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "blur sigma {} must be nonnegative",
                self.blur_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.blend_alpha) {
            return Err(Error::InvalidInput(format!(
                "blend alpha {} outside [0,1]",
                self.blend_alpha
            )));
        }
        if det3(&self.homography).abs() <= 1e-9 {
            return Err(Error::InvalidInput(
                "degenerate homography (determinant ~ 0)".into(),
            ));
        }
        let c = &self.crop;
        if c.width < MIN_IMAGE_SIDE
            || c.height < MIN_IMAGE_SIDE
            || c.x + c.width > width
            || c.y + c.height > height
        {
            return Err(Error::InvalidInput(format!(
                "crop {}x{}+{}+{} invalid for a {width}x{height} frame",
                c.width, c.height, c.x, c.y
            )));
        }
        Ok(())
    }
}

pub fn det3(h: &[f64; 9]) -> f64 {
    h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6])
        + h[2] * (h[3] * h[7] - h[4] * h[6])
}

fn invert3(h: &[f64; 9]) -> Result<[f64; 9]> {
    let det = det3(h);
    if det.abs() <= 1e-9 {
        return Err(Error::InvalidInput(
            "degenerate homography (determinant ~ 0)".into(),
        ));
    }
    let inv_det = 1.0 / det;
    Ok([
        (h[4] * h[8] - h[5] * h[7]) * inv_det,
        (h[2] * h[7] - h[1] * h[8]) * inv_det,
        (h[1] * h[5] - h[2] * h[4]) * inv_det,
        (h[5] * h[6] - h[3] * h[8]) * inv_det,
        (h[0] * h[8] - h[2] * h[6]) * inv_det,
        (h[2] * h[3] - h[0] * h[5]) * inv_det,
        (h[3] * h[7] - h[4] * h[6]) * inv_det,
        (h[1] * h[6] - h[0] * h[7]) * inv_det,
        (h[0] * h[4] - h[1] * h[3]) * inv_det,
    ])
}

/// Solves the 4-point homography mapping each `src` corner to its `dst`
/// position (Gaussian elimination with partial pivoting, h33 fixed to 1).
pub fn homography_from_corners(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Result<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for (i, (&(x, y), &(u, v))) in src.iter().zip(dst).enumerate() {
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("rows remain");
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::InvalidInput(
                "degenerate corner configuration for homography".into(),
            ));
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..9 {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    let mut h = [0.0f64; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Ok(h)
}

/// Runs the full synthesis pipeline. The background is resized to the
/// genuine frame first; warp samples bilinearly from the blended frame and
/// falls back to the background where the inverse map leaves the frame.
pub fn synthesize_spoof<R: Real>(
    genuine: &GrayImage<R>,
    background: &GrayImage<R>,
    params: &SynthParams,
) -> Result<GrayImage<R>> {
    let (w, h) = (genuine.width(), genuine.height());
    params.validate(w, h)?;
    let bg = if background.width() == w && background.height() == h {
        background.clone()
    } else {
        background.resize_bilinear(w, h)?
    };

    let blurred = genuine.gaussian_blur(params.blur_sigma);

    let alpha = real::<R>(params.blend_alpha);
    let one_minus = R::one() - alpha;
    let blended: Vec<R> = blurred
        .pixels()
        .iter()
        .zip(bg.pixels())
        .map(|(&f, &b)| alpha * f + one_minus * b)
        .collect();
    let blended = GrayImage::new(w, h, blended)?;

    let hinv = invert3(&params.homography)?;
    let warped = GrayImage::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let denom = hinv[6] * xf + hinv[7] * yf + hinv[8];
        if denom.abs() < 1e-12 {
            return bg.at(x, y);
        }
        let sx = (hinv[0] * xf + hinv[1] * yf + hinv[2]) / denom;
        let sy = (hinv[3] * xf + hinv[4] * yf + hinv[5]) / denom;
        if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
            return bg.at(x, y);
        }
        bilinear(&blended, sx, sy)
    })?;

    let c = &params.crop;
    GrayImage::from_fn(c.width, c.height, |x, y| warped.at(c.x + x, c.y + y))
}

fn bilinear<R: Real>(img: &GrayImage<R>, x: f64, y: f64) -> R {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let tx = real::<R>(x - x0 as f64);
    let ty = real::<R>(y - y0 as f64);
    if tx == R::zero() && ty == R::zero() {
        return img.at(x0, y0);
    }
    let one = R::one();
    let top = (one - tx) * img.at(x0, y0) + tx * img.at(x1, y0);
    let bottom = (one - tx) * img.at(x0, y1) + tx * img.at(x1, y1);
    (one - ty) * top + ty * bottom
}

/// Sampling ranges for [`sample_params`] with the documented defaults:
/// blur sigma in [0.5, 3], alpha in [0.85, 1], corner jitter up to 8% of the
/// side, crop 70-95% of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRanges {
    pub blur_sigma: (f64, f64),
    pub blend_alpha: (f64, f64),
    pub corner_jitter: f64,
    pub crop_fraction: (f64, f64),
    /// Disabled for document-style corpora where no crop step is wanted.
    pub crop_enabled: bool,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            blur_sigma: (0.5, 3.0),
            blend_alpha: (0.85, 1.0),
            corner_jitter: 0.08,
            crop_fraction: (0.70, 0.95),
            crop_enabled: true,
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.blur_sigma.0 <= self.blur_sigma.1
            && self.blend_alpha.0 <= self.blend_alpha.1
            && self.crop_fraction.0 <= self.crop_fraction.1;
        let bounded = self.blur_sigma.0 >= 0.0
            && self.blend_alpha.0 >= 0.0
            && self.blend_alpha.1 <= 1.0
            && self.corner_jitter >= 0.0
            && self.corner_jitter < 0.5
            && self.crop_fraction.0 > 0.0
            && self.crop_fraction.1 <= 1.0;
        if ordered && bounded {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid parameter ranges: {self:?}")))
        }
    }
}

/// Draws one parameter set for a `width x height` frame.
pub fn sample_params<G: Rng>(
    rng: &mut G,
    ranges: &ParamRanges,
    width: usize,
    height: usize,
) -> Result<SynthParams> {
    ranges.validate()?;
    let seed = rng.random::<u64>();
    let blur_sigma = draw(rng, ranges.blur_sigma);
    let blend_alpha = draw(rng, ranges.blend_alpha);

    let (wf, hf) = ((width - 1) as f64, (height - 1) as f64);
    let src = [(0.0, 0.0), (wf, 0.0), (wf, hf), (0.0, hf)];
    let (jx, jy) = (ranges.corner_jitter * wf, ranges.corner_jitter * hf);
    let mut dst = [(0.0, 0.0); 4];
    for (d, s) in dst.iter_mut().zip(&src) {
        *d = (
            s.0 + draw(rng, (-jx, jx)),
            s.1 + draw(rng, (-jy, jy)),
        );
    }
    let homography = homography_from_corners(&src, &dst)?;

    let crop = if ranges.crop_enabled {
        let cw = ((draw(rng, ranges.crop_fraction) * width as f64).round() as usize)
            .clamp(MIN_IMAGE_SIDE, width);
        let ch = ((draw(rng, ranges.crop_fraction) * height as f64).round() as usize)
            .clamp(MIN_IMAGE_SIDE, height);
        let x = rng.random_range(0..=(width - cw));
        let y = rng.random_range(0..=(height - ch));
        CropRect {
            x,
            y,
            width: cw,
            height: ch,
        }
    } else {
        CropRect {
            x: 0,
            y: 0,
            width,
            height,
        }
    };

    Ok(SynthParams {
        blur_sigma,
        blend_alpha,
        homography,
        crop,
        seed,
    })
}

fn draw<G: Rng>(rng: &mut G, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

/// Procedural "genuine" test images: a soft illumination gradient, an
/// elliptical subject, patterned texture, and mild sensor noise.
pub fn demo_genuine_image<R: Real>(size: usize, seed: u64) -> Result<GrayImage<R>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let cx = size as f64 * rng.random_range(0.35..0.65);
    let cy = size as f64 * rng.random_range(0.35..0.65);
    let rx = size as f64 * rng.random_range(0.18..0.30);
    let ry = size as f64 * rng.random_range(0.22..0.34);
    let gradient_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (ga, gb) = (gradient_angle.cos(), gradient_angle.sin());
    let freq = rng.random_range(0.25..0.8);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let noise: Vec<f64> = (0..size * size).map(|_| rng.random_range(-0.03..0.03)).collect();
    GrayImage::from_fn(size, size, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let grad = 0.45 + 0.2 * ((xf * ga + yf * gb) / size as f64);
        let d = ((xf - cx) / rx).powi(2) + ((yf - cy) / ry).powi(2);
        let blob = 0.35 * (-d * 1.5).exp();
        let texture = 0.08 * (freq * xf + phase).sin() * (freq * 0.8 * yf).cos();
        real::<R>((grad + blob + texture + noise[y * size + x]).clamp(0.0, 1.0))
    })
}

/// Procedural background test images: oriented stripes over a gradient.
pub fn demo_background_image<R: Real>(size: usize, seed: u64) -> Result<GrayImage<R>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x85eb_ca6b).wrapping_add(7));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (ca, sa) = (angle.cos(), angle.sin());
    let freq = rng.random_range(0.15..0.5);
    let base = rng.random_range(0.25..0.6);
    let contrast = rng.random_range(0.1..0.25);
    let noise: Vec<f64> = (0..size * size).map(|_| rng.random_range(-0.04..0.04)).collect();
    GrayImage::from_fn(size, size, |x, y| {
        let t = (x as f64 * ca + y as f64 * sa) * freq;
        real::<R>((base + contrast * t.sin() + noise[y * size + x]).clamp(0.0, 1.0))
    })
}
