use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub pii: bool,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, pii: bool) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            pii,
        }
    }
}

/// Stable identifier of a row. Ids assigned at load are `0..n` in file
/// order; duplicated rows receive fresh ids past the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowId(pub u64);

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(Arc<str>),
}

impl Value {
    pub fn cat(s: &str) -> Self {
        Value::Cat(Arc::from(s))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    /// Bitwise equality, so that `NaN`-free rows compare like their text.
    pub fn same(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.to_bits() == b.to_bits(),
            (Value::Cat(a), Value::Cat(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: RowId,
    /// Set on rows appended by [`replicate`](super::replicate).
    pub duplicate_of: Option<RowId>,
    pub values: Vec<Value>,
}

/// An immutable table. Constructed through [`Dataset::new`], which checks
/// the invariants; every transformation returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnSpec>, rows: Vec<Row>) -> Result<Self> {
        if columns.is_empty() {
            return Err(DataError::NoColumns);
        }
        let mut names = HashSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(DataError::DuplicateColumn(c.name.clone()));
            }
        }
        let mut ids = HashSet::with_capacity(rows.len());
        for row in &rows {
            if !ids.insert(row.id) {
                return Err(DataError::DuplicateRowId(row.id.0));
            }
            if row.values.len() != columns.len() {
                return Err(DataError::Invalid(format!(
                    "row {} has {} values for {} columns",
                    row.id,
                    row.values.len(),
                    columns.len()
                )));
            }
            for (v, c) in row.values.iter().zip(&columns) {
                match (c.kind, v) {
                    (ColumnKind::Continuous, Value::Num(x)) if x.is_finite() => {}
                    (ColumnKind::Categorical, Value::Cat(_)) => {}
                    _ => {
                        return Err(DataError::Invalid(format!(
                            "row {}: value {v} does not fit {:?} column {:?}",
                            row.id, c.kind, c.name
                        )))
                    }
                }
            }
        }
        Ok(Dataset { columns, rows })
    }

    /// Builds a dataset from plain value rows, assigning ids `0..n`.
    pub fn from_values(columns: Vec<ColumnSpec>, rows: Vec<Vec<Value>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| Row {
                id: RowId(i as u64),
                duplicate_of: None,
                values,
            })
            .collect();
        Dataset::new(columns, rows)
    }

    pub(crate) fn with_rows(&self, rows: Vec<Row>) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows,
        }
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSpec> {
        self.column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn row_by_id(&self, id: RowId) -> Option<&Row> {
        // Ids are usually dense and ordered; try the direct slot first.
        if let Some(r) = self.rows.get(id.0 as usize) {
            if r.id == id {
                return Some(r);
            }
        }
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn row_ids(&self) -> Vec<RowId> {
        self.rows.iter().map(|r| r.id).collect()
    }

    /// All values of one column, in row order.
    pub fn column_values(&self, name: &str) -> Result<Vec<&Value>> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| &r.values[idx]).collect())
    }

    pub fn pii_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.pii)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Returns a copy where the values of `column` are permuted by `perm`
    /// (row `i` receives the value of row `perm[i]`).
    pub fn permute_column(&self, column: &str, perm: &[usize]) -> Result<Dataset> {
        let idx = self
            .column_index(column)
            .ok_or_else(|| DataError::UnknownColumn(column.to_string()))?;
        if perm.len() != self.rows.len() {
            return Err(DataError::Invalid("permutation length mismatch".into()));
        }
        let mut rows = self.rows.clone();
        for (row, &src) in rows.iter_mut().zip(perm) {
            row.values[idx] = self.rows[src].values[idx].clone();
        }
        Ok(self.with_rows(rows))
    }
}
