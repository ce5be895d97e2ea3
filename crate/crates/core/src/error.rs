use thiserror::Error;

use crate::data::DataError;
use crate::learners::FitError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("fitting {context}: {source}")]
    Fit {
        context: String,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid condition: {0}")]
    Condition(String),
    #[error("invalid attack submission: {0}")]
    Submission(String),
    #[error("invalid ROC data: {0}")]
    Roc(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn fit(context: impl Into<String>, source: FitError) -> Self {
        Error::Fit {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
