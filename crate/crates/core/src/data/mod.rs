//! Tabular datasets: loading, member/non-member splits, record replication
//! and numeric encoding.

mod dataset;
mod encode;
mod load;
mod sampling;

pub use dataset::{ColumnKind, ColumnSpec, Dataset, Row, RowId, Value};
pub use encode::{encode, Encoder, FeatureMatrix, TargetEncoding, Targets};
pub use load::{load_csv, parse_csv, write_csv, LoadReport, Schema, SchemaEntry, MISSING_LABEL};
pub use sampling::{deduplicate, replicate, split_by_ids, split_members};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("missing header row")]
    MissingHeader,
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("dataset needs at least one column")]
    NoColumns,
    #[error("row {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("row {line}, column {column:?}: {value:?} is not a finite number")]
    NotNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("row {line}, column {column:?}: empty value in a non-nullable column")]
    MissingValue { line: u64, column: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("secret column {0:?} is also listed as known")]
    SecretIsKnown(String),
    #[error("the known attribute set is empty")]
    EmptyKnown,
    #[error("non-member count {count} out of range for {rows} rows")]
    CountOutOfRange { count: usize, rows: usize },
    #[error("fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("duplicate row id {0}")]
    DuplicateRowId(u64),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
