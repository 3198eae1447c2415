//! Forensicability assessment for recapture detection.
//!
//! The crate quantifies how much forensic evidence a questioned image
//! carries before the actual forensic inspection runs: no-reference image
//! quality features (94 values) and CNN forensic features (128 values) are
//! mapped to a two-dimensional score, compared against three forensicability
//! class centers with an RBF kernel, and reduced to a scalar forensicability
//! score used to reject low-evidence samples ahead of a downstream
//! classifier.
//!
//! All numeric kernels are generic over the scalar type (see [`num::Real`]);
//! the shipped pipeline and every file format use `f64`, with aliases for
//! the main types exported below.

pub mod error;
pub mod features;
pub mod forensic;
pub mod image;
pub mod iqa;
pub mod nn;
pub mod num;
pub mod quantifier;
pub mod supervision;

pub use error::{Error, Result};

/// Number of image-quality feature values per image.
pub const QUALITY_DIM: usize = 94;
/// Number of forensic feature values per image.
pub const FORENSIC_DIM: usize = 128;
/// Concatenated model input dimension.
pub const INPUT_DIM: usize = QUALITY_DIM + FORENSIC_DIM;

/// `f64` instantiations of the generic core types.
pub type GrayImage64 = image::GrayImage<f64>;
pub type Plane64 = image::Plane<f64>;
pub type Net64 = nn::Net<f64>;
pub type SgdConfig64 = nn::SgdConfig<f64>;
