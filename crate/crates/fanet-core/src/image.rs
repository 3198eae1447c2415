//! Grayscale images and the filtering primitives shared by the feature
//! extractors and the corpus synthesizer.
//!
//! [`GrayImage`] is the validated input type (luminance in `[0,1]`, at least
//! 32 px per axis so two-scale statistics have room). [`Plane`] is the
//! unconstrained 2-D buffer used for intermediate maps (MSCN coefficients,
//! gradient maps, wavelet subbands) where values range freely.

use std::path::Path;

use crate::error::{Error, Result};
use crate::num::{real, Real};

/// Row-major 2-D buffer without value constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<R: Real> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<R>,
}

impl<R: Real> Plane<R> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![R::zero(); width * height],
        }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> R>(width: usize, height: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> R {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: R) {
        self.data[y * self.width + x] = v;
    }

    /// Mirror boundary handling that does not repeat the edge sample
    /// (index -1 maps to 1, index n to n-2).
    #[inline]
    pub fn at_reflect(&self, x: isize, y: isize) -> R {
        let xi = reflect_101(x, self.width);
        let yi = reflect_101(y, self.height);
        self.data[yi * self.width + xi]
    }

    /// Separable convolution with a symmetric odd-length 1-D kernel applied
    /// along both axes, reflect-101 boundaries.
    pub fn convolve_separable(&self, kernel: &[R]) -> Plane<R> {
        debug_assert!(kernel.len() % 2 == 1);
        let r = (kernel.len() / 2) as isize;
        // Rows.
        let mut tmp = Plane::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut sum = R::zero();
                for (k, &w) in kernel.iter().enumerate() {
                    let xi = reflect_101(x as isize + k as isize - r, self.width);
                    sum = w.mul_add(self.data[y * self.width + xi], sum);
                }
                tmp.set(x, y, sum);
            }
        }
        // Columns.
        let mut out = Plane::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut sum = R::zero();
                for (k, &w) in kernel.iter().enumerate() {
                    let yi = reflect_101(y as isize + k as isize - r, self.height);
                    sum = w.mul_add(tmp.data[yi * self.width + x], sum);
                }
                out.set(x, y, sum);
            }
        }
        out
    }

    /// Full 2-D convolution with a small odd-sized kernel, reflect-101
    /// boundaries. `kernel` is row-major `[kh x kw]`.
    pub fn convolve2d(&self, kernel: &[R], kw: usize, kh: usize) -> Plane<R> {
        debug_assert_eq!(kernel.len(), kw * kh);
        debug_assert!(kw % 2 == 1 && kh % 2 == 1);
        let (rx, ry) = ((kw / 2) as isize, (kh / 2) as isize);
        let mut out = Plane::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut sum = R::zero();
                for ky in 0..kh {
                    for kx in 0..kw {
                        let v = self.at_reflect(
                            x as isize + kx as isize - rx,
                            y as isize + ky as isize - ry,
                        );
                        sum = kernel[ky * kw + kx].mul_add(v, sum);
                    }
                }
                out.set(x, y, sum);
            }
        }
        out
    }

    /// 2x2 box-average downscale (floors odd dimensions).
    pub fn downscale_half(&self) -> Plane<R> {
        let (w, h) = (self.width / 2, self.height / 2);
        let quarter = real::<R>(0.25);
        Plane::from_fn(w, h, |x, y| {
            let (sx, sy) = (2 * x, 2 * y);
            (self.at(sx, sy) + self.at(sx + 1, sy) + self.at(sx, sy + 1) + self.at(sx + 1, sy + 1))
                * quarter
        })
    }
}

#[inline]
pub(crate) fn reflect_101(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Minimum side length for feature-extraction inputs.
pub const MIN_IMAGE_SIDE: usize = 32;

/// A validated grayscale image: luminance in `[0,1]`, both sides at least
/// [`MIN_IMAGE_SIDE`] px.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<R: Real> {
    plane: Plane<R>,
}

impl<R: Real> GrayImage<R> {
    pub fn new(width: usize, height: usize, pixels: Vec<R>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::InvalidInput(format!(
                "image {width}x{height} smaller than minimum {MIN_IMAGE_SIDE} px per side"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite() || *p < R::zero() || *p > R::one()) {
            return Err(Error::InvalidInput(
                "pixel values must be finite and within [0,1]".into(),
            ));
        }
        Ok(Self {
            plane: Plane {
                width,
                height,
                data: pixels,
            },
        })
    }

    pub fn from_fn<F: FnMut(usize, usize) -> R>(width: usize, height: usize, f: F) -> Result<Self> {
        let plane = Plane::from_fn(width, height, f);
        Self::new(width, height, plane.data)
    }

    pub fn width(&self) -> usize {
        self.plane.width
    }

    pub fn height(&self) -> usize {
        self.plane.height
    }

    pub fn pixels(&self) -> &[R] {
        &self.plane.data
    }

    pub fn plane(&self) -> &Plane<R> {
        &self.plane
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> R {
        self.plane.at(x, y)
    }

    /// Gaussian blur with standard deviation `sigma` (kernel radius
    /// `ceil(3*sigma)`, reflect-101 boundaries). `sigma = 0` returns the
    /// image unchanged.
    pub fn gaussian_blur(&self, sigma: f64) -> GrayImage<R> {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel::<R>((3.0 * sigma).ceil() as usize, sigma);
        let blurred = self.plane.convolve_separable(&kernel);
        // Convex combination of [0,1] values; clamp only against rounding.
        GrayImage {
            plane: clamp_unit(blurred),
        }
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<GrayImage<R>> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::InvalidInput(format!(
                "resize target {width}x{height} below minimum side {MIN_IMAGE_SIDE}"
            )));
        }
        let sx = self.width() as f64 / width as f64;
        let sy = self.height() as f64 / height as f64;
        let plane = Plane::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width() - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height() - 1) as f64);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(self.width() - 1), (y0 + 1).min(self.height() - 1));
            let (tx, ty) = (real::<R>(fx - x0 as f64), real::<R>(fy - y0 as f64));
            let one = R::one();
            let top = (one - tx) * self.at(x0, y0) + tx * self.at(x1, y0);
            let bottom = (one - tx) * self.at(x0, y1) + tx * self.at(x1, y1);
            (one - ty) * top + ty * bottom
        });
        Ok(GrayImage {
            plane: clamp_unit(plane),
        })
    }

    /// Adds clamped Gaussian noise (Box-Muller from the provided RNG).
    pub fn add_gaussian_noise<G: rand::Rng>(&self, sigma: f64, rng: &mut G) -> GrayImage<R> {
        if sigma <= 0.0 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.plane.data.len());
        for &p in &self.plane.data {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            let n = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            let v = p + real::<R>(n * sigma);
            data.push(v.max(R::zero()).min(R::one()));
        }
        GrayImage {
            plane: Plane {
                width: self.width(),
                height: self.height(),
                data,
            },
        }
    }

    /// Loads a PNG (or other supported raster file); color inputs are
    /// converted with ITU-R 601 luma weights.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let scale = real::<R>(1.0 / 255.0);
        let mut data = Vec::with_capacity(w * h);
        for p in img.pixels() {
            let y = 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64;
            data.push(real::<R>(y.min(255.0)) * scale);
        }
        GrayImage::new(w, h, data)
    }

    /// Saves as an 8-bit grayscale PNG (`round(p * 255)` per pixel).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = image::GrayImage::new(self.width() as u32, self.height() as u32);
        for (i, p) in self.plane.data.iter().enumerate() {
            let v = (p.to_f64().unwrap_or(0.0) * 255.0).round().clamp(0.0, 255.0) as u8;
            out.put_pixel((i % self.width()) as u32, (i / self.width()) as u32, image::Luma([v]));
        }
        out.save(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Normalized Gaussian kernel of radius `radius` (length `2*radius + 1`).
pub fn gaussian_kernel<R: Real>(radius: usize, sigma: f64) -> Vec<R> {
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut total = 0.0;
    for i in 0..=(2 * radius) {
        let d = i as f64 - radius as f64;
        let v = (-d * d / (2.0 * sigma * sigma)).exp();
        total += v;
        kernel.push(v);
    }
    kernel.into_iter().map(|v| real::<R>(v / total)).collect()
}

fn clamp_unit<R: Real>(mut plane: Plane<R>) -> Plane<R> {
    for v in &mut plane.data {
        *v = v.max(R::zero()).min(R::one());
    }
    plane
}
