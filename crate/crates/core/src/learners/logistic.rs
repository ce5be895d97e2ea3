use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{FitError, OptimizerSettings, PredictedValue, Prediction, Result};
use crate::data::RowId;
use crate::scalar::Scalar;

/// How a categorical model turns features into class scores.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer<F> {
    /// Softmax over `weights · x + intercepts`; weights are classes × features.
    Linear { weights: Array2<F>, intercepts: Array1<F> },
    /// Fixed class distribution regardless of input.
    Constant { probabilities: Array1<F> },
}

/// A fitted classifier over `class_labels` (sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalModel<F> {
    pub class_labels: Vec<String>,
    pub scorer: Scorer<F>,
    /// Inverse L1 strength `C` the model was fit with, if any.
    pub regularization: Option<F>,
    pub converged: bool,
    pub iterations: usize,
    pub name: &'static str,
}

impl<F: Scalar> CategoricalModel<F> {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Class probabilities for one feature vector.
    pub fn predict_proba(&self, x: ArrayView1<F>) -> Result<Array1<F>> {
        match &self.scorer {
            Scorer::Constant { probabilities } => Ok(probabilities.clone()),
            Scorer::Linear { weights, intercepts } => {
                if x.len() != weights.ncols() {
                    return Err(FitError::DimensionMismatch {
                        expected: weights.ncols(),
                        got: x.len(),
                    });
                }
                let mut z = weights.dot(&x) + intercepts;
                softmax_in_place(z.view_mut());
                Ok(z)
            }
        }
    }

    /// Class probabilities for every row of `x`.
    pub fn predict_proba_batch(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        match &self.scorer {
            Scorer::Constant { probabilities } => {
                let mut out = Array2::zeros((x.nrows(), probabilities.len()));
                for mut row in out.rows_mut() {
                    row.assign(probabilities);
                }
                Ok(out)
            }
            Scorer::Linear { weights, intercepts } => {
                if x.ncols() != weights.ncols() {
                    return Err(FitError::DimensionMismatch {
                        expected: weights.ncols(),
                        got: x.ncols(),
                    });
                }
                let mut z = x.dot(&weights.t()) + intercepts;
                for row in z.rows_mut() {
                    softmax_in_place(row);
                }
                Ok(z)
            }
        }
    }

    /// Index and probability of the most likely class; ties go to the
    /// earlier label.
    pub fn argmax(probs: ArrayView1<F>) -> (usize, F) {
        let mut best = (0, probs[0]);
        for (k, &p) in probs.iter().enumerate().skip(1) {
            if p > best.1 {
                best = (k, p);
            }
        }
        best
    }

    /// Predicts the most likely label, or abstains when its probability is
    /// below `p_thresh`.
    pub fn predict_with_threshold(&self, target: RowId, x: ArrayView1<F>, p_thresh: f64) -> Result<Prediction> {
        let probs = self.predict_proba(x)?;
        Ok(self.decide(target, probs.view(), p_thresh))
    }

    pub(crate) fn decide(&self, target: RowId, probs: ArrayView1<F>, p_thresh: f64) -> Prediction {
        let (k, p) = Self::argmax(probs);
        let p_max = p.as_f64();
        let value = if p_max < p_thresh {
            PredictedValue::Abstain
        } else {
            PredictedValue::Label(self.class_labels[k].clone())
        };
        Prediction {
            target_row_id: target,
            value,
            confidence: Some(p_max),
        }
    }

    /// Most likely label for every row of `x`.
    pub fn predict_labels(&self, x: ArrayView2<F>) -> Result<Vec<&str>> {
        let probs = self.predict_proba_batch(x)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| self.class_labels[Self::argmax(row).0].as_str())
            .collect())
    }

    pub fn to_document(&self) -> ModelDocument {
        let (weights, intercepts, probabilities) = match &self.scorer {
            Scorer::Linear { weights, intercepts } => (
                Some(weights.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()),
                Some(intercepts.iter().map(|v| v.as_f64()).collect()),
                None,
            ),
            Scorer::Constant { probabilities } => {
                (None, None, Some(probabilities.iter().map(|v| v.as_f64()).collect()))
            }
        };
        ModelDocument {
            model: self.name.to_string(),
            labels: self.class_labels.clone(),
            weights,
            intercepts,
            probabilities,
            regularization_c: self.regularization.map(Scalar::as_f64),
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

/// JSON form of a fitted categorical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub model: String,
    pub labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercepts: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularization_c: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn softmax_in_place<F: Scalar>(mut z: ndarray::ArrayViewMut1<F>) {
    let max = z.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    z.mapv_inplace(|v| (v - max).exp());
    let sum = z.sum();
    z.mapv_inplace(|v| v / sum);
}

/// The smooth part of the penalised multinomial logistic objective:
/// mean cross-entropy over the rows of `x`. Parameters are packed as the
/// `classes × features` weight matrix followed by the intercepts.
pub struct LogisticObjective<'a, F> {
    x: ArrayView2<'a, F>,
    y: &'a [usize],
    n_classes: usize,
}

impl<'a, F: Scalar> LogisticObjective<'a, F> {
    pub fn new(x: ArrayView2<'a, F>, y: &'a [usize], n_classes: usize) -> Self {
        LogisticObjective { x, y, n_classes }
    }

    // Row loops beat a general matrix product at these shapes (few classes).
    fn logits(&self, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
        let mut z = Array2::<F>::zeros((self.x.nrows(), w.nrows()));
        for (xi, mut zi) in self.x.rows().into_iter().zip(z.rows_mut()) {
            for ((zk, wk), &bk) in zi.iter_mut().zip(w.rows()).zip(b.iter()) {
                *zk = xi.iter().zip(wk.iter()).fold(bk, |acc, (&a, &c)| acc + a * c);
            }
        }
        z
    }

    /// Mean cross-entropy.
    pub fn value(&self, w: &Array2<F>, b: &Array1<F>) -> F {
        let z = self.logits(w, b);
        self.value_from_logits(&z)
    }

    fn value_from_logits(&self, z: &Array2<F>) -> F {
        let mut total = F::zero();
        for (row, &yi) in z.rows().into_iter().zip(self.y) {
            let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).fold(F::zero(), |a, e| a + e).ln();
            total = total + lse - row[yi];
        }
        total / F::of(self.y.len() as f64)
    }

    /// Value and gradient `(dW, db)`.
    pub fn value_and_gradient(&self, w: &Array2<F>, b: &Array1<F>) -> (F, Array2<F>, Array1<F>) {
        let z = self.logits(w, b);
        let value = self.value_from_logits(&z);
        let (gw, gb) = self.gradient_from_logits(z);
        (value, gw, gb)
    }

    fn gradient_from_logits(&self, z: Array2<F>) -> (Array2<F>, Array1<F>) {
        let mut p = z;
        for row in p.rows_mut() {
            softmax_in_place(row);
        }
        for (mut row, &yi) in p.rows_mut().into_iter().zip(self.y) {
            row[yi] = row[yi] - F::one();
        }
        let inv_n = F::one() / F::of(self.y.len() as f64);
        let mut gw = Array2::<F>::zeros((p.ncols(), self.x.ncols()));
        for (pi, xi) in p.rows().into_iter().zip(self.x.rows()) {
            for (&pk, mut gk) in pi.iter().zip(gw.rows_mut()) {
                gk.zip_mut_with(&xi, |g, &v| *g = *g + pk * v);
            }
        }
        gw.mapv_inplace(|v| v * inv_n);
        let gb = p.sum_axis(Axis(0)) * inv_n;
        debug_assert_eq!(gw.nrows(), self.n_classes);
        (gw, gb)
    }
}

/// Fits an L1-penalised multinomial logistic regression.
///
/// Minimises `mean cross-entropy + ||W||_1 / (c * n)`, which is the
/// `c * sum(loss) + ||W||_1` objective rescaled by `1 / (c * n)`: small `c`
/// means strong regularisation. Intercepts are not penalised. The solver is
/// proximal gradient descent with a backtracking line search; hitting
/// `max_iterations` returns a usable model with `converged == false`.
pub fn fit_logistic_l1<F: Scalar>(
    x: ArrayView2<F>,
    y: &[usize],
    class_labels: Vec<String>,
    c: F,
    opt: &OptimizerSettings,
) -> Result<CategoricalModel<F>> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(FitError::LengthMismatch { rows: n, targets: y.len() });
    }
    if n == 0 {
        return Err(FitError::Empty);
    }
    if !(c > F::zero()) || !c.is_finite() {
        return Err(FitError::InvalidSetting("C must be positive and finite".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("features"));
    }
    let k = class_labels.len();
    if y.iter().any(|&yi| yi >= k) {
        return Err(FitError::InvalidSetting("class index out of range".into()));
    }
    let mut present = vec![false; k];
    y.iter().for_each(|&yi| present[yi] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(FitError::SingleClass);
    }

    let objective = LogisticObjective::new(x, y, k);
    let lambda = F::one() / (c * F::of(n as f64));
    let tol = F::of(opt.tolerance);

    let mut w = Array2::<F>::zeros((k, d));
    let mut b = Array1::<F>::zeros(k);
    let (mut smooth, mut gw, mut gb) = objective.value_and_gradient(&w, &b);
    let mut lipschitz = F::one();
    let mut converged = false;
    let mut iterations = 0;
    let half = F::of(0.5);

    while iterations < opt.max_iterations {
        iterations += 1;
        let (new_w, new_b, new_smooth, new_z) = loop {
            let step = F::one() / lipschitz;
            let thresh = lambda * step;
            let cand_w = (&w - &(&gw * step)).mapv(|v| soft_threshold(v, thresh));
            let cand_b = &b - &(&gb * step);
            let dw = &cand_w - &w;
            let db = &cand_b - &b;
            let cand_z = objective.logits(&cand_w, &cand_b);
            let cand_smooth = objective.value_from_logits(&cand_z);
            let linear = (&gw * &dw).sum() + (&gb * &db).sum();
            let sq = dw.iter().chain(db.iter()).fold(F::zero(), |a, &v| a + v * v);
            if cand_smooth <= smooth + linear + half * lipschitz * sq || lipschitz > F::of(1e12) {
                break (cand_w, cand_b, cand_smooth, cand_z);
            }
            lipschitz = lipschitz + lipschitz;
        };
        let unchanged = new_w == w && new_b == b;
        w = new_w;
        b = new_b;
        let (g1, g2) = objective.gradient_from_logits(new_z);
        if unchanged || kkt_residual(&w, &g1, &g2, lambda) <= tol {
            converged = true;
            break;
        }
        smooth = new_smooth;
        gw = g1;
        gb = g2;
        lipschitz = lipschitz * F::of(0.8);
    }

    if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("fitted coefficients"));
    }
    Ok(CategoricalModel {
        class_labels,
        scorer: Scorer::Linear { weights: w, intercepts: b },
        regularization: Some(c),
        converged,
        iterations,
        name: "logistic_l1",
    })
}

/// Largest violation of the optimality conditions of the L1 problem:
/// zero intercept gradient, `|g| <= lambda` on zero weights and
/// `g = -lambda * sign(w)` elsewhere.
fn kkt_residual<F: Scalar>(w: &Array2<F>, gw: &Array2<F>, gb: &Array1<F>, lambda: F) -> F {
    let mut worst = gb.iter().fold(F::zero(), |a, &g| a.max(g.abs()));
    for (&wi, &g) in w.iter().zip(gw.iter()) {
        let v = if wi == F::zero() {
            (g.abs() - lambda).max(F::zero())
        } else {
            (g + lambda * wi.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

pub fn soft_threshold<F: Scalar>(v: F, t: F) -> F {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        F::zero()
    }
}

/// Returns the candidate with the highest precision at prediction rate 1
/// (argmax accuracy) on the validation rows. Ties favour the earlier
/// candidate.
pub fn best_of<'m, F: Scalar>(
    candidates: &'m [CategoricalModel<F>],
    x: ArrayView2<F>,
    truths: &[&str],
) -> Result<&'m CategoricalModel<F>> {
    if candidates.is_empty() {
        return Err(FitError::Empty);
    }
    if x.nrows() != truths.len() {
        return Err(FitError::LengthMismatch {
            rows: x.nrows(),
            targets: truths.len(),
        });
    }
    let mut best = 0;
    let mut best_hits = None;
    for (i, m) in candidates.iter().enumerate() {
        let hits = m
            .predict_labels(x)?
            .iter()
            .zip(truths)
            .filter(|(p, t)| p == t)
            .count();
        if best_hits.is_none_or(|b| hits > b) {
            best = i;
            best_hits = Some(hits);
        }
    }
    Ok(&candidates[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_majority;
    use ndarray::array;
    use rand::Rng;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn separable_pair() {
        let x = array![[-1.0], [1.0]];
        let m = fit_logistic_l1(x.view(), &[0, 1], labels(&["A", "B"]), 1e6, &OptimizerSettings::default()).unwrap();
        let a = m.predict_with_threshold(RowId(0), x.row(0), 0.0).unwrap();
        let b = m.predict_with_threshold(RowId(1), x.row(1), 0.0).unwrap();
        assert_eq!(a.value, PredictedValue::Label("A".into()));
        assert_eq!(b.value, PredictedValue::Label("B".into()));
        assert!(a.confidence.unwrap() > 0.5 && b.confidence.unwrap() > 0.5);
    }

    #[test]
    fn infinite_penalty_collapses_to_priors() {
        let x: Array2<f64> = array![[-1.0, 0.5], [1.0, 0.2], [0.3, -1.0], [2.0, 1.0]];
        let y = [0, 1, 1, 1];
        let m = fit_logistic_l1(x.view(), &y, labels(&["A", "B"]), 1e-12, &OptimizerSettings::default()).unwrap();
        let Scorer::Linear { weights, .. } = &m.scorer else { panic!() };
        assert!(weights.iter().all(|&w| w == 0.0));
        let p = m.predict_proba(x.row(0)).unwrap();
        assert!((p[1] - 0.75).abs() < 1e-3, "{p}");
    }

    #[test]
    fn single_class_and_bad_input() {
        let x = array![[1.0], [2.0]];
        let opt = OptimizerSettings::default();
        assert_eq!(
            fit_logistic_l1(x.view(), &[0, 0], labels(&["A", "B"]), 1.0, &opt),
            Err(FitError::SingleClass)
        );
        let bad = array![[1.0], [f64::NAN]];
        assert!(matches!(
            fit_logistic_l1(bad.view(), &[0, 1], labels(&["A", "B"]), 1.0, &opt),
            Err(FitError::NonFinite(_))
        ));
        assert!(fit_logistic_l1(x.view(), &[0], labels(&["A", "B"]), 1.0, &opt).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = array![[-1.0], [1.0], [0.5]];
        let opt = OptimizerSettings {
            max_iterations: 2,
            ..Default::default()
        };
        let m = fit_logistic_l1(x.view(), &[0, 1, 1], labels(&["A", "B"]), 1e6, &opt).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
    }

    #[test]
    fn dimension_mismatch() {
        let x = array![[-1.0], [1.0]];
        let m = fit_logistic_l1(x.view(), &[0, 1], labels(&["A", "B"]), 1.0, &OptimizerSettings::default()).unwrap();
        assert!(matches!(
            m.predict_with_threshold(RowId(0), array![1.0, 2.0].view(), 0.0),
            Err(FitError::DimensionMismatch { .. })
        ));
    }

    fn fixed_model(p: [f64; 2]) -> CategoricalModel<f64> {
        CategoricalModel {
            class_labels: labels(&["A", "B"]),
            scorer: Scorer::Constant {
                probabilities: Array1::from(p.to_vec()),
            },
            regularization: None,
            converged: true,
            iterations: 0,
            name: "fixed",
        }
    }

    #[test]
    fn threshold_rule() {
        let m = fixed_model([0.4, 0.6]);
        let x = array![0.0];
        let p = m.predict_with_threshold(RowId(3), x.view(), 0.7).unwrap();
        assert!(p.is_abstain());
        assert_eq!(p.confidence, Some(0.6));
        let p = m.predict_with_threshold(RowId(3), x.view(), 0.5).unwrap();
        assert_eq!(p.value, PredictedValue::Label("B".into()));
        let p = m.predict_with_threshold(RowId(3), x.view(), 0.0).unwrap();
        assert!(!p.is_abstain());
        // argmax ties favour label order
        let p = fixed_model([0.5, 0.5]).predict_with_threshold(RowId(0), x.view(), 0.0).unwrap();
        assert_eq!(p.value, PredictedValue::Label("A".into()));
    }

    #[test]
    fn best_of_picks_more_precise() {
        let x = array![[0.0], [0.0], [0.0], [0.0]];
        let truths = ["B", "B", "B", "A"];
        let a = fixed_model([0.9, 0.1]);
        let b = fixed_model([0.1, 0.9]);
        let both = [a.clone(), b.clone()];
        let pick = best_of(&both, x.view(), &truths).unwrap();
        assert_eq!(pick, &b);
        let single = [b.clone()];
        assert_eq!(best_of(&single, x.view(), &truths).unwrap(), &b);
        assert!(best_of::<f64>(&[], x.view(), &truths).is_err());
    }

    #[test]
    fn best_of_prefers_first_on_ties() {
        let x = array![[0.0], [0.0]];
        let truths = ["A", "B"];
        let models = [fixed_model([0.9, 0.1]), fixed_model([0.1, 0.9])];
        let pick = best_of(&models, x.view(), &truths).unwrap();
        assert!(std::ptr::eq(pick, &models[0]));
    }

    #[test]
    fn majority_vs_logistic() {
        // majority right on 7/10, logistic right on 9/10
        let x: Array2<f64> = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let truths: Vec<&str> = (0..10).map(|i| if i < 7 { "A" } else { "B" }).collect();
        let maj = fit_majority(&truths).unwrap();
        let mut lin = fixed_model([0.0, 0.0]);
        lin.scorer = Scorer::Linear {
            weights: array![[-1.0], [1.0]],
            intercepts: array![5.0, -5.0],
        };
        let mut shifted = truths.clone();
        shifted[6] = "B";
        shifted[9] = "A";
        let models = [maj, lin.clone()];
        assert_eq!(best_of(&models, x.view(), &shifted).unwrap(), &lin);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = crate::rng::seeded(11);
        let x: Array2<f64> = Array2::from_shape_fn((40, 3), |_| rng.gen_range(-2.0..2.0));
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let m = fit_logistic_l1(x.view(), &y, labels(&["a", "b", "c"]), 10.0, &OptimizerSettings::default()).unwrap();
        let probs = m.predict_proba_batch(x.view()).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!(CategoricalModel::argmax(row).1 >= 1.0 / 3.0);
        }
        let doc = m.to_document();
        assert_eq!(doc.weights.as_ref().unwrap().len(), 3);
        assert!(serde_json::to_string(&doc).is_ok());
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = crate::rng::seeded(5);
        let x = Array2::from_shape_fn((50, 4), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<usize> = (0..50).map(|i| (i * 7 % 3) % 2).collect();
        let opt = OptimizerSettings::default();
        let a = fit_logistic_l1(x.view(), &y, labels(&["a", "b"]), 1.0, &opt).unwrap();
        let b = fit_logistic_l1(x.view(), &y, labels(&["a", "b"]), 1.0, &opt).unwrap();
        assert_eq!(a, b);
    }

    /// Analytic gradient against central finite differences.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rng::seeded(5);
        let x: Array2<f64> = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-1.5..1.5));
        let y: Vec<usize> = (0..30).map(|_| rng.gen_range(0..3)).collect();
        let obj = LogisticObjective::new(x.view(), &y, 3);
        let w: Array2<f64> = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-0.5..0.5));
        let b = Array1::from_shape_fn(3, |_| rng.gen_range(-0.5..0.5));
        let (_, gw, gb) = obj.value_and_gradient(&w, &b);
        let h = 1e-6;
        let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        for k in 0..3 {
            for j in 0..4 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[[k, j]] += h;
                wm[[k, j]] -= h;
                let numeric = (obj.value(&wp, &b) - obj.value(&wm, &b)) / (2.0 * h);
                assert!(rel(gw[[k, j]], numeric) <= 1e-5, "w[{k},{j}]: {} vs {numeric}", gw[[k, j]]);
            }
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[k] += h;
            bm[k] -= h;
            let numeric = (obj.value(&w, &bp) - obj.value(&w, &bm)) / (2.0 * h);
            assert!(rel(gb[k], numeric) <= 1e-5, "b[{k}]: {} vs {numeric}", gb[k]);
        }
    }
}
