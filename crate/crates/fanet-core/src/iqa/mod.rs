//! No-reference image-quality features: wavelet GGD statistics, joint
//! gradient/LoG histograms, and BRISQUE natural-scene statistics,
//! concatenated into the 94-dimensional quality vector.

pub mod biqi;
pub mod brisque;
pub mod fit;
pub mod gmlog;
pub mod mscn;

pub use biqi::{biqi_features, BIQI_DIM};
pub use brisque::{brisque_features, BRISQUE_DIM};
pub use fit::{fit_aggd, fit_ggd, AggdParams, GgdParams};
pub use gmlog::{gmlog_features, GMLOG_DIM};
pub use mscn::mscn_map;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::num::Real;
use crate::QUALITY_DIM;

/// The 94 quality feature values of one image, grouped by method.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityFeatures<R: Real> {
    pub biqi: Vec<R>,
    pub gmlog: Vec<R>,
    pub brisque: Vec<R>,
}

impl<R: Real> QualityFeatures<R> {
    /// Fixed concatenation order: `[biqi | gmlog | brisque]`.
    pub fn to_vec(&self) -> Vec<R> {
        let mut v = Vec::with_capacity(QUALITY_DIM);
        v.extend_from_slice(&self.biqi);
        v.extend_from_slice(&self.gmlog);
        v.extend_from_slice(&self.brisque);
        v
    }
}

/// Computes all 94 quality features for `img`.
pub fn quality_feature_vector<R: Real>(img: &GrayImage<R>) -> Result<QualityFeatures<R>> {
    let features = QualityFeatures {
        biqi: biqi_features(img)?,
        gmlog: gmlog_features(img)?,
        brisque: brisque_features(img)?,
    };
    let total = features.biqi.len() + features.gmlog.len() + features.brisque.len();
    if total != QUALITY_DIM {
        return Err(Error::DimensionMismatch(format!(
            "quality feature dimension {total}, expected {QUALITY_DIM}"
        )));
    }
    if features.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(
            "non-finite quality feature value".into(),
        ));
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_is_94_and_order_is_fixed() {
        let img = GrayImage::<f64>::from_fn(48, 48, |x, y| ((3 * x + y) % 11) as f64 / 11.0)
            .unwrap();
        let f = quality_feature_vector(&img).unwrap();
        assert_eq!(f.biqi.len(), BIQI_DIM);
        assert_eq!(f.gmlog.len(), GMLOG_DIM);
        assert_eq!(f.brisque.len(), BRISQUE_DIM);
        let v = f.to_vec();
        assert_eq!(v.len(), QUALITY_DIM);
        assert_eq!(&v[..BIQI_DIM], f.biqi.as_slice());
        assert_eq!(&v[BIQI_DIM + GMLOG_DIM..], f.brisque.as_slice());
    }

    #[test]
    fn extraction_is_pure() {
        let img = GrayImage::<f64>::from_fn(40, 40, |x, y| ((x * y) % 23) as f64 / 23.0)
            .unwrap();
        let a = quality_feature_vector(&img).unwrap().to_vec();
        let b = quality_feature_vector(&img).unwrap().to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn blur_changes_the_feature_vector() {
        let img = GrayImage::<f64>::from_fn(48, 48, |x, y| {
            (((x / 3) % 2) ^ ((y / 3) % 2)) as f64 * 0.8 + 0.1
        })
        .unwrap();
        let blurred = img.gaussian_blur(3.0);
        let a = quality_feature_vector(&img).unwrap().to_vec();
        let b = quality_feature_vector(&blurred).unwrap().to_vec();
        let l2: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(l2 > 0.0);
    }
}
