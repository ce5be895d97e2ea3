//! Measurement toolkit for anonymized tabular data.
//!
//! The crate computes the allowed-inference baseline for a dataset by
//! predicting the secrets of held-out non-members from the remaining
//! records, compares externally produced attack predictions against that
//! baseline at matched coverage, and converts membership-inference ROC
//! points to precision and recall under realistic member/non-member skews.
//!
//! Numeric code is generic over [`Scalar`] (the learners) and [`Measure`]
//! (the ratio measures, which also accept exact rationals); the aliases
//! below fix the types used by the pipeline.

pub mod baseline;
pub mod comparison;
pub mod data;
pub mod learners;
pub mod membership;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod synthetic;

mod error;

pub use error::{Error, Result};
pub use scalar::{Measure, Scalar};

/// Feature matrix in the precision the pipeline runs at.
pub type FeatureMatrix64 = data::FeatureMatrix<f64>;
pub type CategoricalModel64 = learners::CategoricalModel<f64>;
pub type ContinuousModel64 = learners::ContinuousModel<f64>;
pub type NearestNeighbor64 = learners::NearestNeighbor<f64>;
pub type CategoricalModel32 = learners::CategoricalModel<f32>;
pub type ContinuousModel32 = learners::ContinuousModel<f32>;
/// Exact rational used to evaluate measures without rounding.
pub type Exact = num_rational::Ratio<i128>;
pub type RocPoint64 = metrics::RocPoint<f64>;
pub type SkewScenario64 = metrics::SkewScenario<f64>;
pub type ExactRocPoint = metrics::RocPoint<Exact>;
pub type ExactSkewScenario = metrics::SkewScenario<Exact>;
