use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, ColumnSpec, Dataset, Row, RowId, Value};
use super::{DataError, Result};

/// Label given to an empty cell of a nullable categorical column.
pub const MISSING_LABEL: &str = "⟂";

/// Per-column schema entry. `kind` is inferred when omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaEntry {
    #[serde(default)]
    pub kind: Option<ColumnKind>,
    #[serde(default)]
    pub pii: bool,
    #[serde(default)]
    pub nullable: bool,
    /// Column is present in the file but not loaded.
    #[serde(default)]
    pub drop: bool,
}

/// Flat mapping of column name to [`SchemaEntry`], read from TOML:
///
/// ```toml
/// Customer_Age = { kind = "continuous", pii = true }
/// Gender = { kind = "categorical", pii = true }
/// CLIENTNUM = { drop = true }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub columns: BTreeMap<String, SchemaEntry>,
}

impl Schema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| DataError::Schema(e.to_string()))
    }

    /// Schema that reloads `d` with the same kinds and PII flags.
    pub fn from_dataset(d: &Dataset) -> Self {
        Schema {
            columns: d
                .columns()
                .iter()
                .map(|c| {
                    (
                        c.name.clone(),
                        SchemaEntry {
                            kind: Some(c.kind),
                            pii: c.pii,
                            ..SchemaEntry::default()
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_loaded: usize,
    /// Rows rejected because a nullable continuous column was empty.
    pub rows_dropped_missing: usize,
    pub columns_dropped: Vec<String>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(std::io::BufReader::new(file), schema)
}

/// Parses CSV text. Row ids are the zero-based record index in the file.
pub fn parse_csv<R: Read>(reader: R, schema: Option<&Schema>) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DataError::MissingHeader);
    }
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    if let Some(schema) = schema {
        for name in schema.columns.keys() {
            if !seen.contains(name.as_str()) {
                return Err(DataError::Schema(format!("schema column {name:?} missing from header")));
            }
        }
        for h in &header {
            if !schema.columns.contains_key(h) {
                return Err(DataError::Schema(format!("header column {h:?} missing from schema")));
            }
        }
    }

    let entry = |name: &str| -> SchemaEntry {
        schema
            .and_then(|s| s.columns.get(name))
            .cloned()
            .unwrap_or_default()
    };
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !entry(&header[i]).drop).collect();
    let mut report = LoadReport {
        columns_dropped: header
            .iter()
            .filter(|h| entry(h).drop)
            .cloned()
            .collect(),
        ..LoadReport::default()
    };

    let mut raw: Vec<(u64, Vec<String>)> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(idx as u64 + 2);
        if rec.len() != header.len() {
            return Err(DataError::RaggedRow {
                line,
                expected: header.len(),
                found: rec.len(),
            });
        }
        raw.push((line, keep.iter().map(|&i| rec[i].trim().to_string()).collect()));
    }

    let names: Vec<&String> = keep.iter().map(|&i| &header[i]).collect();
    let mut columns = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let e = entry(name);
        let kind = match e.kind {
            Some(k) => k,
            None => {
                let all_numeric = raw
                    .iter()
                    .map(|(_, r)| r[j].as_str())
                    .filter(|v| !v.is_empty())
                    .all(|v| parse_finite(v).is_some());
                if all_numeric {
                    ColumnKind::Continuous
                } else {
                    ColumnKind::Categorical
                }
            }
        };
        columns.push((ColumnSpec::new(name.as_str(), kind, e.pii), e.nullable));
    }

    let mut rows = Vec::with_capacity(raw.len());
    'rows: for (idx, (line, fields)) in raw.into_iter().enumerate() {
        let mut values = Vec::with_capacity(fields.len());
        for (field, (spec, nullable)) in fields.into_iter().zip(&columns) {
            if field.is_empty() {
                if !nullable {
                    return Err(DataError::MissingValue {
                        line,
                        column: spec.name.clone(),
                    });
                }
                match spec.kind {
                    ColumnKind::Categorical => values.push(Value::cat(MISSING_LABEL)),
                    ColumnKind::Continuous => {
                        report.rows_dropped_missing += 1;
                        continue 'rows;
                    }
                }
                continue;
            }
            match spec.kind {
                ColumnKind::Categorical => values.push(Value::cat(&field)),
                ColumnKind::Continuous => match parse_finite(&field) {
                    Some(v) => values.push(Value::Num(v)),
                    None => {
                        return Err(DataError::NotNumeric {
                            line,
                            column: spec.name.clone(),
                            value: field,
                        })
                    }
                },
            }
        }
        rows.push(Row {
            id: RowId(idx as u64),
            duplicate_of: None,
            values,
        });
    }
    report.rows_loaded = rows.len();
    let specs = columns.into_iter().map(|(s, _)| s).collect();
    Ok((Dataset::new(specs, rows)?, report))
}

/// Writes `d` as CSV in the dialect [`parse_csv`] reads. Rows appear in
/// dataset order; row ids are not written.
pub fn write_csv<W: std::io::Write>(d: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(d.columns().iter().map(|c| c.name.as_str()))?;
    for r in d.rows() {
        w.write_record(r.values.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(())
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}
