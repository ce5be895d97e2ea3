//! Precision/recall tables for membership-inference ROC curves under
//! member:non-member base rates.
//!
//! ROC curves are computed on balanced populations. An attacker who
//! observes one member for every `n / m` non-members sees the same TPR and
//! FPR but much lower precision; [`pr_tables`] makes that explicit.
//! Tables are pointwise: no interpolation between measured points.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::metrics::{roc_to_pr, MetricError, RocPoint, SkewScenario};
use crate::{Error, Measure, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T = f64> {
    pub name: String,
    points: Vec<RocPoint<T>>,
}

impl<T: Measure> RocCurve<T> {
    /// Sorts by FPR and rejects repeated FPRs or a TPR that falls as FPR
    /// rises.
    pub fn new(name: impl Into<String>, mut points: Vec<RocPoint<T>>) -> Result<Self> {
        let name = name.into();
        if points.is_empty() {
            return Err(Error::Roc(format!("curve {name:?} has no points")));
        }
        points.sort_by(|a, b| a.fpr.partial_cmp(&b.fpr).expect("range-checked"));
        for w in points.windows(2) {
            if w[1].fpr == w[0].fpr {
                return Err(Error::Roc(format!("curve {name:?} repeats fpr {:?}", w[0].fpr)));
            }
            if w[1].tpr < w[0].tpr {
                return Err(Error::Roc(format!(
                    "curve {name:?}: tpr falls from {:?} to {:?} as fpr rises",
                    w[0].tpr, w[1].tpr
                )));
            }
        }
        Ok(RocCurve { name, points })
    }

    pub fn points(&self) -> &[RocPoint<T>] {
        &self.points
    }
}

/// Reads a CSV with header `fpr,tpr`. The curve is named after the file.
pub fn load_roc(path: impl AsRef<Path>) -> Result<RocCurve> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "roc".into());
    parse_roc(file, name)
}

pub fn parse_roc<R: Read>(reader: R, name: impl Into<String>) -> Result<RocCurve> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(DataError::from)?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["fpr", "tpr"] {
        return Err(Error::Roc(format!("expected header fpr,tpr, found {}", header.join(","))));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(DataError::from)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Roc(format!("line {line}: {:?} is not a number", &rec[i])))
        };
        let (fpr, tpr) = (num(0)?, num(1)?);
        points.push(RocPoint::new(fpr, tpr).map_err(|e| Error::Roc(format!("line {line}: {e}")))?);
    }
    RocCurve::new(name, points)
}

/// One row of a [`PrTable`]. `precision` is `None` where it is undefined
/// (no positive predictions at this point and skew).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrRow<T = f64> {
    pub skew: SkewScenario<T>,
    pub fpr: T,
    pub tpr: T,
    pub precision: Option<T>,
    pub recall: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrTable<T = f64> {
    pub curve: String,
    pub rows: Vec<PrRow<T>>,
}

/// One table per curve, with rows ordered by skew then by FPR.
pub fn pr_tables<T: Measure>(curves: &[RocCurve<T>], skews: &[SkewScenario<T>]) -> Result<Vec<PrTable<T>>> {
    if curves.is_empty() || skews.is_empty() {
        return Err(Error::Roc("need at least one curve and one skew".into()));
    }
    curves
        .iter()
        .map(|c| {
            let mut rows = Vec::with_capacity(c.points.len() * skews.len());
            for skew in skews {
                for pt in &c.points {
                    let precision = match roc_to_pr(pt, skew) {
                        Ok((p, _)) => Some(p),
                        Err(MetricError::UndefinedPrecision) => None,
                        Err(e) => return Err(e.into()),
                    };
                    rows.push(PrRow {
                        skew: *skew,
                        fpr: pt.fpr,
                        tpr: pt.tpr,
                        precision,
                        recall: pt.tpr,
                    });
                }
            }
            Ok(PrTable {
                curve: c.name.clone(),
                rows,
            })
        })
        .collect()
}

/// Member:non-member ratios reported when none are given.
pub fn default_skews() -> Vec<SkewScenario> {
    [1.0, 2.0, 5.0, 10.0, 30.0, 50.0, 240.0]
        .iter()
        .map(|&n| SkewScenario::new(1.0, n).expect("valid skew"))
        .collect()
}

const FIXTURE_FPR: [f64; 8] = [1e-5, 1e-4, 1e-3, 0.01, 0.1, 0.25, 0.5, 1.0];
const SHOKRI_TPR: [Option<f64>; 8] = [
    Some(0.0003),
    Some(0.002),
    Some(0.015),
    Some(0.1),
    Some(0.4),
    None,
    Some(1.0),
    Some(1.0),
];
const CARLINI_TPR: [Option<f64>; 8] = [
    Some(0.1),
    Some(0.2),
    Some(0.35),
    Some(0.5),
    Some(0.75),
    Some(1.0),
    None,
    Some(1.0),
];

/// ROC points of the Shokri et al. and Carlini et al. membership attacks
/// as read from their published curves. Unread cells are left out.
pub fn bundled_fixture() -> (RocCurve, RocCurve) {
    let curve = |name: &str, tpr: &[Option<f64>; 8]| {
        let pts = FIXTURE_FPR
            .iter()
            .zip(tpr)
            .filter_map(|(&f, t)| t.map(|t| RocPoint::new(f, t).expect("fixture in range")))
            .collect();
        RocCurve::new(name, pts).expect("fixture is monotone")
    };
    (curve("shokri", &SHOKRI_TPR), curve("carlini", &CARLINI_TPR))
}

/// Long-format CSV: `curve,m,n,fpr,tpr,precision,recall`, with an empty
/// precision cell where it is undefined.
pub fn write_csv<W: Write>(tables: &[PrTable], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Data(DataError::from(e));
    w.write_record(["curve", "m", "n", "fpr", "tpr", "precision", "recall"]).map_err(io)?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.curve.clone(),
                r.skew.m.to_string(),
                r.skew.n.to_string(),
                r.fpr.to_string(),
                r.tpr.to_string(),
                r.precision.map(|p| p.to_string()).unwrap_or_default(),
                r.recall.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Data(DataError::Invalid(e.to_string())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exact;
    use num_rational::Ratio;

    #[test]
    fn fixture_shape() {
        let (s, c) = bundled_fixture();
        assert_eq!(s.points().len(), 7);
        assert_eq!(c.points().len(), 7);
        assert_eq!(c.points()[0], RocPoint { fpr: 1e-5, tpr: 0.1 });
        for curve in [&s, &c] {
            assert_eq!(*curve.points().last().unwrap(), RocPoint { fpr: 1.0, tpr: 1.0 });
        }
    }

    #[test]
    fn load_validation() {
        let c = parse_roc("fpr,tpr\n0.5,1.0\n0.1,0.4\n".as_bytes(), "s").unwrap();
        assert_eq!(c.points().len(), 2);
        assert_eq!(c.points()[0].fpr, 0.1);
        assert!(parse_roc("fpr,tpr\n0.1,0.5\n0.5,0.4\n".as_bytes(), "s").is_err());
        assert!(parse_roc("fpr,tpr\n1.2,0.5\n".as_bytes(), "s").is_err());
        assert!(parse_roc("fpr,tpr\nx,0.5\n".as_bytes(), "s").is_err());
        assert!(parse_roc("a,b\n0.1,0.5\n".as_bytes(), "s").is_err());
        assert!(parse_roc("fpr,tpr\n".as_bytes(), "s").is_err());
    }

    #[test]
    fn table_examples() {
        let (s, c) = bundled_fixture();
        let skews = vec![SkewScenario::new(1.0, 1.0).unwrap(), SkewScenario::new(1.0, 30.0).unwrap()];
        let t = pr_tables(&[s, c], &skews).unwrap();
        let carlini_1 = t[1].rows.iter().find(|r| r.fpr == 0.01 && r.skew.n == 1.0).unwrap();
        assert!((carlini_1.precision.unwrap() - 0.5 / 0.51).abs() < 1e-12);
        assert_eq!(carlini_1.recall, 0.5);
        let shokri_30 = t[0].rows.iter().find(|r| r.fpr == 1e-4 && r.skew.n == 30.0).unwrap();
        assert!((shokri_30.precision.unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(t[0].rows.len(), 14);
    }

    #[test]
    fn undefined_rows_are_explicit() {
        let c = RocCurve::new("z", vec![RocPoint::new(0.0, 0.0).unwrap(), RocPoint::new(0.5, 0.7).unwrap()]).unwrap();
        let t = pr_tables(&[c], &[SkewScenario::new(1.0, 0.0).unwrap()]).unwrap();
        assert_eq!(t[0].rows[0].precision, None);
        assert_eq!(t[0].rows[1].precision, Some(1.0));
    }

    #[test]
    fn exact_tables() {
        let r = |n, d| Ratio::new(n, d);
        let c: RocCurve<Exact> = RocCurve::new("e", vec![RocPoint::new(r(1, 10_000), r(2, 1000)).unwrap()]).unwrap();
        let t = pr_tables(&[c], &[SkewScenario::new(r(1, 1), r(30, 1)).unwrap()]).unwrap();
        assert_eq!(t[0].rows[0].precision, Some(r(2, 5)));
    }

    #[test]
    fn csv_long_format() {
        let (s, _) = bundled_fixture();
        let t = pr_tables(&[s], &default_skews()).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("curve,m,n,fpr,tpr,precision,recall\n"));
        assert_eq!(text.lines().count(), 1 + 49);
    }
}
