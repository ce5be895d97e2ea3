use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, Dataset, Value};
use super::{DataError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetEncoding {
    /// Class index `i` stands for `labels[i]`; labels sorted.
    Classes { labels: Vec<String> },
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F> {
    pub design: Array2<F>,
    pub feature_names: Vec<String>,
    pub target_encoding: TargetEncoding,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets<F> {
    /// `None` marks a label that did not occur in the fitting set.
    Classes(Vec<Option<usize>>),
    Real(Vec<F>),
}

impl<F> Targets<F> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
enum FeatureBlock {
    OneHot {
        column: usize,
        alphabet: Vec<Arc<str>>,
        index: HashMap<Arc<str>, usize>,
    },
    Standardized {
        column: usize,
        mean: f64,
        /// Zero for constant columns, which encode to 0.
        std: f64,
    },
}

/// Feature and target encoding fitted on one dataset and applicable to
/// any dataset with the same columns. Categorical features are one-hot
/// over the fitted alphabet (unseen labels give an all-zero block);
/// continuous features are standardized with fitted mean and population
/// standard deviation.
#[derive(Debug, Clone)]
pub struct Encoder {
    blocks: Vec<FeatureBlock>,
    feature_names: Vec<String>,
    secret: usize,
    target: TargetEncoding,
    column_names: Vec<String>,
}

impl Encoder {
    pub fn fit(fit_on: &Dataset, known: &BTreeSet<String>, secret: &str) -> Result<Self> {
        if known.is_empty() {
            return Err(DataError::EmptyKnown);
        }
        if known.contains(secret) {
            return Err(DataError::SecretIsKnown(secret.to_string()));
        }
        let secret_idx = fit_on
            .column_index(secret)
            .ok_or_else(|| DataError::UnknownColumn(secret.to_string()))?;
        for k in known {
            fit_on.column(k)?;
        }
        if fit_on.is_empty() {
            return Err(DataError::Invalid("cannot fit an encoding on an empty dataset".into()));
        }

        let mut blocks = Vec::new();
        let mut feature_names = Vec::new();
        for (j, col) in fit_on.columns().iter().enumerate() {
            if !known.contains(&col.name) {
                continue;
            }
            match col.kind {
                ColumnKind::Categorical => {
                    let alphabet: Vec<Arc<str>> = fit_on
                        .rows()
                        .iter()
                        .filter_map(|r| match &r.values[j] {
                            Value::Cat(s) => Some(s.clone()),
                            Value::Num(_) => None,
                        })
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    for label in &alphabet {
                        feature_names.push(format!("{}={}", col.name, label));
                    }
                    let index = alphabet.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
                    blocks.push(FeatureBlock::OneHot {
                        column: j,
                        alphabet,
                        index,
                    });
                }
                ColumnKind::Continuous => {
                    let vals: Vec<f64> = fit_on.rows().iter().filter_map(|r| r.values[j].as_num()).collect();
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let std = var.sqrt();
                    let std = if std > f64::EPSILON * mean.abs().max(1.0) { std } else { 0.0 };
                    feature_names.push(col.name.clone());
                    blocks.push(FeatureBlock::Standardized { column: j, mean, std });
                }
            }
        }

        let target = match fit_on.columns()[secret_idx].kind {
            ColumnKind::Categorical => {
                let labels: BTreeSet<String> = fit_on
                    .rows()
                    .iter()
                    .filter_map(|r| r.values[secret_idx].as_cat().map(str::to_string))
                    .collect();
                TargetEncoding::Classes {
                    labels: labels.into_iter().collect(),
                }
            }
            ColumnKind::Continuous => TargetEncoding::Identity,
        };

        Ok(Encoder {
            blocks,
            feature_names,
            secret: secret_idx,
            target,
            column_names: fit_on.columns().iter().map(|c| c.name.clone()).collect(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn target_encoding(&self) -> &TargetEncoding {
        &self.target
    }

    fn check_columns(&self, d: &Dataset) -> Result<()> {
        let same = d.columns().len() == self.column_names.len()
            && d.columns().iter().zip(&self.column_names).all(|(c, n)| &c.name == n);
        if same {
            Ok(())
        } else {
            Err(DataError::Invalid("dataset columns differ from the fitted encoding".into()))
        }
    }

    pub fn features<F: Scalar>(&self, d: &Dataset) -> Result<FeatureMatrix<F>> {
        self.check_columns(d)?;
        let mut design = Array2::<F>::zeros((d.len(), self.n_features()));
        for (i, row) in d.rows().iter().enumerate() {
            let mut offset = 0;
            for block in &self.blocks {
                match block {
                    FeatureBlock::OneHot { column, alphabet, index } => {
                        if let Value::Cat(s) = &row.values[*column] {
                            if let Some(&k) = index.get(s) {
                                design[[i, offset + k]] = F::one();
                            }
                        }
                        offset += alphabet.len();
                    }
                    FeatureBlock::Standardized { column, mean, std } => {
                        if *std > 0.0 {
                            let v = row.values[*column].as_num().unwrap_or(*mean);
                            design[[i, offset]] = F::of((v - mean) / std);
                        }
                        offset += 1;
                    }
                }
            }
        }
        Ok(FeatureMatrix {
            design,
            feature_names: self.feature_names.clone(),
            target_encoding: self.target.clone(),
        })
    }

    pub fn targets<F: Scalar>(&self, d: &Dataset) -> Result<Targets<F>> {
        self.check_columns(d)?;
        let s = self.secret;
        Ok(match &self.target {
            TargetEncoding::Classes { labels } => Targets::Classes(
                d.rows()
                    .iter()
                    .map(|r| {
                        r.values[s]
                            .as_cat()
                            .and_then(|v| labels.binary_search_by(|l| l.as_str().cmp(v)).ok())
                    })
                    .collect(),
            ),
            TargetEncoding::Identity => Targets::Real(
                d.rows()
                    .iter()
                    .map(|r| F::of(r.values[s].as_num().unwrap_or(f64::NAN)))
                    .collect(),
            ),
        })
    }
}

/// Fits an [`Encoder`] on `fit_on` and applies it to `transform`.
pub fn encode<F: Scalar>(
    fit_on: &Dataset,
    transform: &Dataset,
    known: &BTreeSet<String>,
    secret: &str,
) -> Result<(FeatureMatrix<F>, Targets<F>)> {
    let enc = Encoder::fit(fit_on, known, secret)?;
    for k in known.iter().map(String::as_str).chain(std::iter::once(secret)) {
        let a = fit_on.column(k)?;
        let b = transform.column(k)?;
        if a.kind != b.kind {
            return Err(DataError::Invalid(format!("column {k:?} differs in kind")));
        }
    }
    Ok((enc.features(transform)?, enc.targets(transform)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;
    use ndarray::array;

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn toy(rows: &[(&str, f64, &str)]) -> Dataset {
        let cols = vec![
            ColumnSpec::new("c", ColumnKind::Categorical, false),
            ColumnSpec::new("x", ColumnKind::Continuous, false),
            ColumnSpec::new("s", ColumnKind::Categorical, false),
        ];
        Dataset::from_values(
            cols,
            rows.iter()
                .map(|(c, x, s)| vec![Value::cat(c), Value::Num(*x), Value::cat(s)])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn one_hot_definition() {
        let d = toy(&[("A", 0.0, "p"), ("B", 0.0, "q")]);
        let (fm, _) = encode::<f64>(&d, &d, &set(&["c"]), "s").unwrap();
        assert_eq!(fm.design.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(fm.feature_names, vec!["c=A", "c=B"]);
    }

    #[test]
    fn standardization_uses_fit_statistics() {
        let fit = toy(&[("A", 0.0, "p"), ("A", 2.0, "q")]);
        let tr = toy(&[("A", 1.0, "p")]);
        let (fm, _) = encode::<f64>(&fit, &tr, &set(&["x"]), "s").unwrap();
        assert_eq!(fm.design[[0, 0]], 0.0);
    }

    #[test]
    fn constant_columns_encode_to_zero() {
        let fit = toy(&[("A", 3.0, "p"), ("A", 3.0, "q")]);
        let (fm, _) = encode::<f64>(&fit, &fit, &set(&["x"]), "s").unwrap();
        assert!(fm.design.iter().all(|&v| v == 0.0));
    }

    /// Hand-computed encoding of a 5-row toy table, including an unseen
    /// label in the transform set.
    #[test]
    fn five_row_toy_with_unseen_label() {
        let fit = toy(&[
            ("A", 1.0, "p"),
            ("B", 2.0, "q"),
            ("A", 3.0, "p"),
            ("B", 4.0, "q"),
            ("A", 5.0, "p"),
        ]);
        let tr = toy(&[("C", 3.0, "z"), ("B", 1.0, "q")]);
        let (fm, y) = encode::<f64>(&fit, &tr, &set(&["c", "x"]), "s").unwrap();
        // mean 3, population variance (4+1+0+1+4)/5 = 2
        let s = 2f64.sqrt();
        let expected = array![[0.0, 0.0, 0.0], [0.0, 1.0, -2.0 / s]];
        assert_eq!(fm.design, expected);
        assert_eq!(y, Targets::Classes(vec![None, Some(1)]));
        assert_eq!(
            fm.target_encoding,
            TargetEncoding::Classes {
                labels: vec!["p".into(), "q".into()]
            }
        );
    }

    #[test]
    fn rejects_bad_conditions() {
        let d = toy(&[("A", 1.0, "p")]);
        assert!(matches!(
            encode::<f64>(&d, &d, &set(&["c", "s"]), "s"),
            Err(DataError::SecretIsKnown(_))
        ));
        assert!(matches!(encode::<f64>(&d, &d, &set(&[]), "s"), Err(DataError::EmptyKnown)));
        assert!(encode::<f64>(&d, &d, &set(&["nope"]), "s").is_err());
    }

    #[test]
    fn encoding_is_pure() {
        let fit = toy(&[("A", 1.0, "p"), ("B", 7.5, "q"), ("C", -2.0, "p")]);
        let a = encode::<f64>(&fit, &fit, &set(&["c", "x"]), "s").unwrap();
        let b = encode::<f64>(&fit, &fit, &set(&["c", "x"]), "s").unwrap();
        assert_eq!(a, b);
        for row in a.0.design.rows() {
            assert_eq!(row.iter().take(3).sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn f32_encoding() {
        let fit = toy(&[("A", 0.0, "p"), ("B", 2.0, "q")]);
        let (fm, y) = encode::<f32>(&fit, &fit, &set(&["c", "x"]), "s").unwrap();
        assert_eq!(fm.design.row(1).to_vec(), vec![0.0f32, 1.0, 1.0]);
        assert_eq!(y.len(), 2);
    }
}
