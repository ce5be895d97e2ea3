//! Scalar vulnerability measures.
//!
//! Every ratio measure refuses to produce a value when its denominator is
//! zero: an undefined precision is an error, never a silent `0` or `1`.
//! All functions are generic over [`Measure`] so they can be evaluated in
//! `f64` or exactly in rationals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Measure;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("precision is undefined: no positive predictions")]
    UndefinedPrecision,
    #[error("recall is undefined: no actual positives")]
    NoActualPositives,
    #[error("{0} is undefined: zero denominator")]
    ZeroDenominator(&'static str),
    #[error("baseline precision is already perfect; precision improvement is undefined")]
    BaselinePerfect,
    #[error("value {0:?} does not occur among the truths")]
    ValueAbsent(String),
    #[error("prediction and truth lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Confusion counts plus abstentions (`np`, targets for which no prediction
/// was made).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub np: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64, np: u64) -> Self {
        Counts { tp, fp, fn_, tn, np }
    }

    /// Number of positive predictions.
    pub fn positive_predictions(&self) -> u64 {
        self.tp + self.fp
    }

    /// Counts the outcome of one inference prediction against its truth.
    /// `None` is an abstention.
    pub fn record_inference(&mut self, correct: Option<bool>) {
        match correct {
            Some(true) => self.tp += 1,
            Some(false) => self.fp += 1,
            None => self.np += 1,
        }
    }
}

/// `(tp + tn) / (tp + fp + fn + tn)`.
pub fn accuracy<T: Measure>(c: &Counts) -> Result<T> {
    let total = c.tp + c.fp + c.fn_ + c.tn;
    if total == 0 {
        return Err(MetricError::ZeroDenominator("accuracy"));
    }
    Ok(T::from_count(c.tp + c.tn) / T::from_count(total))
}

/// True positive predictions over all positive predictions.
pub fn precision<T: Measure>(c: &Counts) -> Result<T> {
    let pp = c.positive_predictions();
    if pp == 0 {
        return Err(MetricError::UndefinedPrecision);
    }
    Ok(T::from_count(c.tp) / T::from_count(pp))
}

/// `tp / (tp + fn)`.
pub fn recall<T: Measure>(c: &Counts) -> Result<T> {
    let pos = c.tp + c.fn_;
    if pos == 0 {
        return Err(MetricError::NoActualPositives);
    }
    Ok(T::from_count(c.tp) / T::from_count(pos))
}

/// `tp / (tp + fp + np)`: true positives over all possible predictions,
/// abstentions included.
pub fn prediction_rate<T: Measure>(c: &Counts) -> Result<T> {
    let all = c.tp + c.fp + c.np;
    if all == 0 {
        return Err(MetricError::ZeroDenominator("prediction rate"));
    }
    Ok(T::from_count(c.tp) / T::from_count(all))
}

/// Recall of `value` after casting a multi-valued inference to the binary
/// question "is it `value`?". Any other prediction, abstentions included
/// (`None`), counts as negative.
pub fn binary_recall_per_value<T: Measure, L: PartialEq + std::fmt::Debug>(
    predictions: &[Option<L>],
    truths: &[L],
    value: &L,
) -> Result<T> {
    if predictions.len() != truths.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), truths.len()));
    }
    if truths.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts = Counts::default();
    for (p, t) in predictions.iter().zip(truths) {
        let predicted_positive = p.as_ref() == Some(value);
        match (predicted_positive, t == value) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    if counts.tp + counts.fn_ == 0 {
        return Err(MetricError::ValueAbsent(format!("{value:?}")));
    }
    recall(&counts)
}

/// A continuous prediction is correct when its relative error is at most
/// `epsilon`. At `truth == 0` only an exact match counts.
pub fn correct_continuous<T: Measure>(pred: T, truth: T, epsilon: T) -> bool {
    if truth == T::zero() {
        return pred == T::zero();
    }
    (pred - truth).abs_val() <= epsilon * truth.abs_val()
}

/// Fraction of the best possible improvement over the baseline that the
/// attack achieves: `(p_atk - p_base) / (1 - p_base)`.
pub fn precision_improvement<T: Measure>(p_atk: T, p_base: T) -> Result<T> {
    let headroom = T::one() - p_base;
    if headroom <= T::zero() {
        return Err(MetricError::BaselinePerfect);
    }
    Ok((p_atk - p_base) / headroom)
}

/// Observational skew: `m` members for every `n` non-members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewScenario<T = f64> {
    pub m: T,
    pub n: T,
}

impl<T: Measure> SkewScenario<T> {
    pub fn new(m: T, n: T) -> Result<Self> {
        if m <= T::zero() {
            return Err(MetricError::InvalidArgument("skew needs m > 0".into()));
        }
        if n < T::zero() {
            return Err(MetricError::InvalidArgument("skew needs n >= 0".into()));
        }
        Ok(SkewScenario { m, n })
    }
}

impl SkewScenario<f64> {
    /// Parses `"m:n"`, e.g. `"1:240"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || MetricError::InvalidArgument(format!("skew {s:?} is not of the form m:n"));
        let (m, n) = s.split_once(':').ok_or_else(bad)?;
        let m: f64 = m.trim().parse().map_err(|_| bad())?;
        let n: f64 = n.trim().parse().map_err(|_| bad())?;
        if !m.is_finite() || !n.is_finite() {
            return Err(bad());
        }
        Self::new(m, n)
    }
}

impl std::fmt::Display for SkewScenario<f64> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.m, self.n)
    }
}

/// One point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T = f64> {
    pub fpr: T,
    pub tpr: T,
}

impl<T: Measure> RocPoint<T> {
    pub fn new(fpr: T, tpr: T) -> Result<Self> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(fpr) || !unit(tpr) {
            return Err(MetricError::InvalidArgument(format!(
                "ROC point ({fpr:?}, {tpr:?}) outside [0,1]"
            )));
        }
        Ok(RocPoint { fpr, tpr })
    }
}

/// Converts a ROC point to `(precision, recall)` under an observational
/// skew. Recall is the TPR; precision is `tpr*m / (tpr*m + fpr*n)`.
pub fn roc_to_pr<T: Measure>(pt: &RocPoint<T>, skew: &SkewScenario<T>) -> Result<(T, T)> {
    let true_pos = pt.tpr * skew.m;
    let false_pos = pt.fpr * skew.n;
    let denom = true_pos + false_pos;
    if denom <= T::zero() {
        return Err(MetricError::UndefinedPrecision);
    }
    Ok((true_pos / denom, pt.tpr))
}
