//! Multimodal TNM-staging baseline pipeline.
//!
//! The crate covers the whole chain: MVOL volume/mask IO and largest-lesion
//! isolation, radiomics texture features, clinical tabular preprocessing,
//! mutual-information + RFECV feature selection, gradient-boosted softmax
//! trees, and patient-level cross-validated evaluation with a
//! modality-ablation grid. A seeded synthetic cohort generator provides
//! desk-scale ground truth for end-to-end checks.
//!
//! All numeric kernels are generic over [`Scalar`] (`f32`/`f64`); the
//! concrete aliases below fix `f64` as the default precision.

pub mod error;
pub mod matrix;
pub mod scalar;
pub mod volumes;

pub mod radiomics;
pub mod tabular;

pub mod boost;
pub mod select;

pub mod evaluate;

pub mod cohortgen;

pub mod config;
pub mod pipeline;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Default scalar type of the pipeline.
pub type Real = f64;

pub type Volume = volumes::Volume3D<Real>;
pub type FeatureVector = radiomics::FeatureVector<Real>;
pub type Table = tabular::Table<Real>;
pub type Booster = boost::Booster<Real>;
pub type Dataset = evaluate::Dataset<Real>;
