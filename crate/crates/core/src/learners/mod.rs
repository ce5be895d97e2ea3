//! Analyses used to predict a target's secret from its known attributes.
//!
//! * [`fit_logistic_l1`]: multinomial logistic regression with an L1
//!   penalty, fit by proximal gradient descent.
//! * [`fit_lasso`]: L1-penalised least squares, fit by cyclic coordinate
//!   descent.
//! * [`fit_majority`]: always predicts the modal label.
//! * [`NearestNeighbor`]: memorises its fitting set; used to stress the
//!   effect of dependent records.

mod lasso;
mod logistic;
mod majority;
mod neighbor;

pub use lasso::{fit_lasso, kkt_violation, soft_threshold, ContinuousModel};
pub use logistic::{best_of, fit_logistic_l1, CategoricalModel, LogisticObjective, ModelDocument, Scorer};
pub use majority::fit_majority;
pub use neighbor::{NeighborTargets, NearestNeighbor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::RowId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least two distinct labels to fit a classifier")]
    SingleClass,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot fit on an empty set")]
    Empty,
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
}

pub type Result<T> = std::result::Result<T, FitError>;

/// Solver controls shared by the learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Proximal gradient stops once no optimality condition is violated by
    /// more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Coordinate descent stops once no coefficient moves more than this.
    pub cd_tolerance: f64,
    pub cd_max_epochs: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            tolerance: 1e-6,
            max_iterations: 10_000,
            cd_tolerance: 1e-8,
            cd_max_epochs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedValue {
    Label(String),
    Real(f64),
    Abstain,
}

/// One prediction about one target. `confidence` is the largest class
/// probability and is only set by categorical models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target_row_id: RowId,
    pub value: PredictedValue,
    pub confidence: Option<f64>,
}

impl Prediction {
    pub fn is_abstain(&self) -> bool {
        matches!(self.value, PredictedValue::Abstain)
    }
}
