use ndarray::{Array2, ArrayView1, ArrayView2};

use super::{FitError, PredictedValue, Prediction, Result};
use crate::data::RowId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum NeighborTargets<F> {
    Labels(Vec<String>),
    Real(Vec<F>),
}

impl<F> NeighborTargets<F> {
    fn len(&self) -> usize {
        match self {
            NeighborTargets::Labels(v) => v.len(),
            NeighborTargets::Real(v) => v.len(),
        }
    }
}

/// Memorises its fitting set and answers with the target of the
/// Euclidean-nearest fitting row; ties go to the lowest row id.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighbor<F> {
    points: Array2<F>,
    row_ids: Vec<RowId>,
    targets: NeighborTargets<F>,
}

impl<F: Scalar> NearestNeighbor<F> {
    pub fn fit(x: ArrayView2<F>, row_ids: Vec<RowId>, targets: NeighborTargets<F>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(FitError::Empty);
        }
        if x.nrows() != row_ids.len() || x.nrows() != targets.len() {
            return Err(FitError::LengthMismatch {
                rows: x.nrows(),
                targets: targets.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite("features"));
        }
        Ok(NearestNeighbor {
            points: x.to_owned(),
            row_ids,
            targets,
        })
    }

    /// Position in the fitting set of the nearest row to `x`.
    pub fn nearest(&self, x: ArrayView1<F>) -> Result<usize> {
        if x.len() != self.points.ncols() {
            return Err(FitError::DimensionMismatch {
                expected: self.points.ncols(),
                got: x.len(),
            });
        }
        let mut best: Option<(F, RowId, usize)> = None;
        for (i, row) in self.points.rows().into_iter().enumerate() {
            let d = row
                .iter()
                .zip(x.iter())
                .fold(F::zero(), |a, (&p, &q)| a + (p - q) * (p - q));
            let better = match best {
                None => true,
                Some((bd, bid, _)) => d < bd || (d == bd && self.row_ids[i] < bid),
            };
            if better {
                best = Some((d, self.row_ids[i], i));
            }
        }
        Ok(best.map(|b| b.2).expect("fitting set is non-empty"))
    }

    pub fn predict(&self, target: RowId, x: ArrayView1<F>) -> Result<Prediction> {
        let i = self.nearest(x)?;
        Ok(match &self.targets {
            NeighborTargets::Labels(l) => Prediction {
                target_row_id: target,
                value: PredictedValue::Label(l[i].clone()),
                confidence: Some(1.0),
            },
            NeighborTargets::Real(v) => Prediction {
                target_row_id: target,
                value: PredictedValue::Real(v[i].as_f64()),
                confidence: None,
            },
        })
    }
}
