use std::collections::BTreeMap;

use ndarray::Array1;

use super::{CategoricalModel, FitError, Result, Scorer};
use crate::scalar::Scalar;

/// Constant model predicting the most common label, with the modal
/// frequency as confidence. Ties go to the lexicographically smallest
/// label.
pub fn fit_majority<F: Scalar, S: AsRef<str>>(y: &[S]) -> Result<CategoricalModel<F>> {
    if y.is_empty() {
        return Err(FitError::Empty);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in y {
        *counts.entry(label.as_ref()).or_default() += 1;
    }
    let n = F::of(y.len() as f64);
    let class_labels: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let probabilities: Array1<F> = counts.values().map(|&c| F::of(c as f64) / n).collect();
    Ok(CategoricalModel {
        class_labels,
        scorer: Scorer::Constant { probabilities },
        regularization: None,
        converged: true,
        iterations: 0,
        name: "majority",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RowId;
    use crate::learners::PredictedValue;
    use ndarray::array;

    fn predict(y: &[&str]) -> (PredictedValue, f64) {
        let m: CategoricalModel<f64> = fit_majority(y).unwrap();
        let p = m.predict_with_threshold(RowId(0), array![1.0, 2.0].view(), 0.0).unwrap();
        (p.value, p.confidence.unwrap())
    }

    #[test]
    fn modal_label() {
        let (v, c) = predict(&["A", "A", "B"]);
        assert_eq!(v, PredictedValue::Label("A".into()));
        assert_eq!(c, 2.0 / 3.0);
    }

    #[test]
    fn tie_goes_to_smallest_label() {
        let (v, c) = predict(&["B", "A"]);
        assert_eq!(v, PredictedValue::Label("A".into()));
        assert_eq!(c, 0.5);
    }

    #[test]
    fn uniform_labels() {
        let y: Vec<String> = (0..40).map(|i| format!("l{}", i % 4)).collect();
        let m: CategoricalModel<f64> = fit_majority(&y).unwrap();
        let p = m.predict_proba(array![0.0].view()).unwrap();
        assert!((CategoricalModel::argmax(p.view()).1 - 0.25).abs() < 1e-12);
        assert!(fit_majority::<f64, &str>(&[]).is_err());
    }
}
