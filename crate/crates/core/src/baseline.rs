//! Allowed-inference baselines via the non-member framework.
//!
//! Non-members are removed from the original dataset, an analysis is fit
//! on what remains (the baseline dataset) and used to predict each
//! non-member's secret from its known attributes. Because the released
//! data says nothing specific about individuals it does not contain, the
//! precision of these predictions is a privacy-neutral baseline that an
//! attack has to beat.
//!
//! Two removal granularities exist: [`Mode::Complete`] refits once per
//! non-member (leave-one-out), [`Mode::Relaxed`] removes all non-members
//! together and fits once.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, ColumnKind, Dataset, Encoder, RowId, Targets, Value};
use crate::learners::{
    self, fit_lasso, fit_logistic_l1, fit_majority, CategoricalModel, ContinuousModel, FitError,
    NearestNeighbor, NeighborTargets, OptimizerSettings, PredictedValue, Prediction,
};
use crate::metrics::{self, Counts, MetricError};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// Seed streams derived from a run seed.
const VALIDATION_STREAM: u64 = 0x5641_4c49;
const REPLICATION_STREAM: u64 = 0x5245_504c;
const LOO_SAMPLE_STREAM: u64 = 0x4c4f_4f53;

/// The conditions of one analysis: what the attacker knows, what is
/// secret, and optionally a specific secret value or a tolerance for
/// continuous secrets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionKey {
    pub known: BTreeSet<String>,
    pub secret: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_value: Option<String>,
    /// Relative tolerance for continuous secrets, stored as `f64` bits so the
    /// key stays hashable.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "epsilon_bits")]
    pub epsilon: Option<u64>,
}

mod epsilon_bits {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(f64::from_bits).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(f64::to_bits))
    }
}

impl ConditionKey {
    pub fn new<I, S>(known: I, secret: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ConditionKey {
            known: known.into_iter().map(Into::into).collect(),
            secret: secret.to_string(),
            secret_value: None,
            epsilon: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon.to_bits());
        self
    }

    pub fn with_secret_value(mut self, value: &str) -> Self {
        self.secret_value = Some(value.to_string());
        self
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon.map(f64::from_bits)
    }

    /// Checks the key against a dataset and returns the secret's kind.
    pub fn validate(&self, d: &Dataset) -> Result<ColumnKind> {
        if self.known.is_empty() {
            return Err(data::DataError::EmptyKnown.into());
        }
        if self.known.contains(&self.secret) {
            return Err(data::DataError::SecretIsKnown(self.secret.clone()).into());
        }
        for k in &self.known {
            d.column(k)?;
        }
        let kind = d.column(&self.secret)?.kind;
        match (kind, self.epsilon()) {
            (ColumnKind::Continuous, None) => {
                return Err(Error::Condition(format!(
                    "continuous secret {:?} needs an epsilon",
                    self.secret
                )))
            }
            (ColumnKind::Continuous, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                return Err(Error::Condition(format!("epsilon {e} must be positive")))
            }
            (ColumnKind::Categorical, Some(_)) => {
                return Err(Error::Condition(format!(
                    "categorical secret {:?} takes no epsilon",
                    self.secret
                )))
            }
            _ => {}
        }
        if self.secret_value.is_some() && kind == ColumnKind::Continuous {
            return Err(Error::Condition("secret_value only applies to categorical secrets".into()));
        }
        Ok(kind)
    }

    /// Short human label, e.g. `Gender | Customer_Age,Education_Level`.
    pub fn label(&self) -> String {
        let known: Vec<&str> = self.known.iter().map(String::as_str).collect();
        match &self.secret_value {
            Some(v) => format!("{}={} | {}", self.secret, v, known.join(",")),
            None => format!("{} | {}", self.secret, known.join(",")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Categorical secrets: the better of majority and L1 logistic
    /// regression on a validation split. Continuous secrets: lasso.
    #[default]
    Auto,
    Logistic,
    Majority,
    Lasso,
    NearestNeighbor,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Auto => "auto",
            LearnerKind::Logistic => "logistic_l1",
            LearnerKind::Majority => "majority",
            LearnerKind::Lasso => "lasso",
            LearnerKind::NearestNeighbor => "nearest_neighbor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Inverse L1 strength of the logistic model.
    pub c: f64,
    /// L1 strength of the lasso.
    pub alpha: f64,
    /// Share of the fitting set held out to choose between candidates.
    pub validation_fraction: f64,
    /// Flag targets whose normalised distance to some fitting row is below
    /// this value.
    pub near_duplicate_tau: Option<f64>,
    pub optimizer: OptimizerSettings,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            kind: LearnerKind::Auto,
            c: 0.01,
            alpha: 0.1,
            validation_fraction: 0.2,
            near_duplicate_tau: None,
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl LearnerConfig {
    pub fn with_kind(kind: LearnerKind) -> Self {
        LearnerConfig {
            kind,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Relaxed,
    Complete,
}

/// Which recall-like measure a coverage number is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageKind {
    Recall,
    PredictionRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDescriptor {
    pub learner: LearnerConfig,
    pub mode: Mode,
    /// Number of fits that ended up using each model.
    pub chosen: BTreeMap<String, usize>,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub condition: ConditionKey,
    pub p_base: f64,
    pub coverage_base: f64,
    pub coverage_kind: CoverageKind,
    pub analysis: AnalysisDescriptor,
    pub n_targets: usize,
    pub counts: Counts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near_duplicates: Option<Vec<RowId>>,
}

/// The fitted analysis for one condition, together with the encoding it
/// was fit under.
pub struct Analysis {
    encoder: Encoder,
    model: FittedModel,
    pub chosen: &'static str,
    pub converged: bool,
}

enum FittedModel {
    Categorical(CategoricalModel<f64>),
    Continuous(ContinuousModel<f64>),
    Neighbor(NearestNeighbor<f64>),
}

/// Whether an analysis is used for plain baselines or for threshold
/// sweeps (which need graded class probabilities).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Baseline,
    Sweep,
}

impl Analysis {
    /// Fits the configured analysis on `set`. `seed` drives the validation
    /// split used to choose between candidate models.
    pub fn fit(set: &Dataset, condition: &ConditionKey, cfg: &LearnerConfig, seed: u64) -> Result<Self> {
        Self::fit_for(set, condition, cfg, seed, Purpose::Baseline)
    }

    fn fit_for(set: &Dataset, condition: &ConditionKey, cfg: &LearnerConfig, seed: u64, purpose: Purpose) -> Result<Self> {
        let kind = condition.validate(set)?;
        if set.is_empty() {
            return Err(Error::fit(condition.label(), FitError::Empty));
        }
        let encoder = Encoder::fit(set, &condition.known, &condition.secret)?;
        let ctx = || format!("{} for {}", cfg.kind.name(), condition.label());
        let model = match (kind, cfg.kind) {
            (ColumnKind::Categorical, LearnerKind::Auto) => match purpose {
                Purpose::Baseline => return fit_best_of(set, condition, cfg, seed, encoder),
                Purpose::Sweep => match fit_logistic(set, &encoder, cfg) {
                    Err(FitError::SingleClass) => FittedModel::Categorical(fit_majority_on(set, condition)?),
                    other => FittedModel::Categorical(other.map_err(|e| Error::fit(ctx(), e))?),
                },
            },
            (ColumnKind::Categorical, LearnerKind::Logistic) => {
                FittedModel::Categorical(fit_logistic(set, &encoder, cfg).map_err(|e| Error::fit(ctx(), e))?)
            }
            (ColumnKind::Categorical, LearnerKind::Majority) => FittedModel::Categorical(fit_majority_on(set, condition)?),
            (ColumnKind::Continuous, LearnerKind::Auto | LearnerKind::Lasso) => {
                let x = encoder.features::<f64>(set)?;
                let Targets::Real(y) = encoder.targets::<f64>(set)? else {
                    unreachable!("continuous secret encodes to reals")
                };
                FittedModel::Continuous(
                    fit_lasso(x.design.view(), &y, cfg.alpha, &cfg.optimizer).map_err(|e| Error::fit(ctx(), e))?,
                )
            }
            (_, LearnerKind::NearestNeighbor) => {
                let x = encoder.features::<f64>(set)?;
                let s = set.column_index(&condition.secret).expect("validated");
                let targets = match kind {
                    ColumnKind::Categorical => {
                        NeighborTargets::Labels(set.rows().iter().map(|r| r.values[s].to_string()).collect())
                    }
                    ColumnKind::Continuous => NeighborTargets::Real(
                        set.rows().iter().map(|r| r.values[s].as_num().unwrap_or(f64::NAN)).collect(),
                    ),
                };
                FittedModel::Neighbor(
                    NearestNeighbor::fit(x.design.view(), set.row_ids(), targets).map_err(|e| Error::fit(ctx(), e))?,
                )
            }
            (k, l) => {
                return Err(Error::Condition(format!(
                    "learner {} cannot predict a {k:?} secret",
                    l.name()
                )))
            }
        };
        Ok(Self::wrap(encoder, model))
    }

    fn wrap(encoder: Encoder, model: FittedModel) -> Self {
        let (chosen, converged) = match &model {
            FittedModel::Categorical(m) => (m.name, m.converged),
            FittedModel::Continuous(m) => ("lasso", m.converged),
            FittedModel::Neighbor(_) => ("nearest_neighbor", true),
        };
        Analysis {
            encoder,
            model,
            chosen,
            converged,
        }
    }

    /// Predicts the secret of every row of `targets`. Categorical models
    /// abstain when their top probability is below `p_thresh`.
    pub fn predict(&self, targets: &Dataset, p_thresh: f64) -> Result<Vec<Prediction>> {
        let x = self.encoder.features::<f64>(targets)?;
        let ids = targets.row_ids();
        let wrap = |e| Error::fit(format!("predicting with {}", self.chosen), e);
        match &self.model {
            FittedModel::Categorical(m) => {
                let probs = m.predict_proba_batch(x.design.view()).map_err(wrap)?;
                Ok(ids
                    .iter()
                    .zip(probs.rows())
                    .map(|(&id, p)| m.decide(id, p, p_thresh))
                    .collect())
            }
            FittedModel::Continuous(m) => {
                let y = m.predict_batch(x.design.view()).map_err(wrap)?;
                Ok(ids
                    .iter()
                    .zip(y.iter())
                    .map(|(&id, &v)| Prediction {
                        target_row_id: id,
                        value: PredictedValue::Real(v),
                        confidence: None,
                    })
                    .collect())
            }
            FittedModel::Neighbor(m) => ids
                .iter()
                .zip(x.design.rows())
                .map(|(&id, row)| m.predict(id, row).map_err(wrap))
                .collect(),
        }
    }

    pub fn categorical_model(&self) -> Option<&CategoricalModel<f64>> {
        match &self.model {
            FittedModel::Categorical(m) => Some(m),
            _ => None,
        }
    }

    pub fn continuous_model(&self) -> Option<&ContinuousModel<f64>> {
        match &self.model {
            FittedModel::Continuous(m) => Some(m),
            _ => None,
        }
    }
}

fn fit_logistic(set: &Dataset, encoder: &Encoder, cfg: &LearnerConfig) -> std::result::Result<CategoricalModel<f64>, FitError> {
    let labels = match encoder.target_encoding() {
        data::TargetEncoding::Classes { labels } => labels.clone(),
        data::TargetEncoding::Identity => return Err(FitError::InvalidSetting("logistic needs a categorical secret".into())),
    };
    let x = encoder
        .features::<f64>(set)
        .map_err(|e| FitError::InvalidSetting(e.to_string()))?;
    let y: Vec<usize> = match encoder.targets::<f64>(set) {
        Ok(Targets::Classes(y)) => y.into_iter().map(|v| v.expect("fit-set labels are in the alphabet")).collect(),
        _ => unreachable!("categorical secret encodes to classes"),
    };
    fit_logistic_l1(x.design.view(), &y, labels, cfg.c, &cfg.optimizer)
}

fn secret_labels<'d>(set: &'d Dataset, secret: &str) -> Vec<&'d str> {
    let s = set.column_index(secret).expect("validated secret");
    set.rows().iter().map(|r| r.values[s].as_cat().unwrap_or("")).collect()
}

fn fit_majority_on(set: &Dataset, condition: &ConditionKey) -> Result<CategoricalModel<f64>> {
    fit_majority(&secret_labels(set, &condition.secret)).map_err(|e| Error::fit(format!("majority for {}", condition.label()), e))
}

/// Chooses between the majority predictor and L1 logistic regression by
/// their precision on a seeded validation split of `set`, then refits the
/// winner on all of `set`.
fn fit_best_of(set: &Dataset, condition: &ConditionKey, cfg: &LearnerConfig, seed: u64, encoder: Encoder) -> Result<Analysis> {
    let n_val = (set.len() as f64 * cfg.validation_fraction).round() as usize;
    let use_logistic = if n_val >= 1 && n_val < set.len() {
        let (train, val) = data::split_members(set, n_val, derive_seed(seed, VALIDATION_STREAM))?;
        let train_enc = Encoder::fit(&train, &condition.known, &condition.secret)?;
        let mut candidates = vec![fit_majority_on(&train, condition)?];
        match fit_logistic(&train, &train_enc, cfg) {
            Ok(m) => candidates.push(m),
            Err(FitError::SingleClass) => {}
            Err(e) => return Err(Error::fit(format!("logistic_l1 for {}", condition.label()), e)),
        }
        let xv = train_enc.features::<f64>(&val)?;
        let truths = secret_labels(&val, &condition.secret);
        let pick = learners::best_of(&candidates, xv.design.view(), &truths)
            .map_err(|e| Error::fit("validating candidates", e))?;
        pick.name == "logistic_l1"
    } else {
        false
    };
    let model = if use_logistic {
        match fit_logistic(set, &encoder, cfg) {
            Ok(m) => m,
            Err(FitError::SingleClass) => fit_majority_on(set, condition)?,
            Err(e) => return Err(Error::fit(format!("logistic_l1 for {}", condition.label()), e)),
        }
    } else {
        fit_majority_on(set, condition)?
    };
    Ok(Analysis::wrap(encoder, FittedModel::Categorical(model)))
}

fn truth_of<'d>(targets: &'d Dataset, secret: &str) -> Vec<&'d Value> {
    let s = targets.column_index(secret).expect("validated secret");
    targets.rows().iter().map(|r| &r.values[s]).collect()
}

/// Whether `pred` is a correct prediction of `truth`; `None` for
/// abstentions.
pub fn is_correct(pred: &PredictedValue, truth: &Value, epsilon: Option<f64>) -> Option<bool> {
    match (pred, truth) {
        (PredictedValue::Abstain, _) => None,
        (PredictedValue::Label(l), Value::Cat(t)) => Some(l.as_str() == &**t),
        (PredictedValue::Real(p), Value::Num(t)) => Some(metrics::correct_continuous(*p, *t, epsilon.unwrap_or(0.0))),
        _ => Some(false),
    }
}

/// Tallies predictions against truths. General conditions report
/// prediction rate; conditions on one secret value report recall of that
/// value, with predictions of any other value counted as negatives.
pub fn score(predictions: &[Prediction], truths: &[&Value], condition: &ConditionKey) -> (Counts, CoverageKind) {
    let eps = condition.epsilon();
    let mut c = Counts::default();
    match &condition.secret_value {
        None => {
            for (p, t) in predictions.iter().zip(truths) {
                c.record_inference(is_correct(&p.value, t, eps));
            }
            (c, CoverageKind::PredictionRate)
        }
        Some(v) => {
            for (p, t) in predictions.iter().zip(truths) {
                let predicted_v = matches!(&p.value, PredictedValue::Label(l) if l == v);
                let truth_v = t.as_cat() == Some(v.as_str());
                if p.is_abstain() {
                    c.np += 1;
                }
                match (predicted_v, truth_v) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
            (c, CoverageKind::Recall)
        }
    }
}

fn measures(c: &Counts, kind: CoverageKind) -> Result<(f64, f64)> {
    let p = metrics::precision::<f64>(c)?;
    let cov = match kind {
        CoverageKind::PredictionRate => metrics::prediction_rate::<f64>(c)?,
        CoverageKind::Recall => metrics::recall::<f64>(c)?,
    };
    Ok((p, cov))
}

fn result_from(
    condition: &ConditionKey,
    cfg: &LearnerConfig,
    mode: Mode,
    predictions: &[Prediction],
    truths: &[&Value],
    fits: &[(&'static str, bool)],
    near_duplicates: Option<Vec<RowId>>,
) -> Result<BaselineResult> {
    let (counts, coverage_kind) = score(predictions, truths, condition);
    let (p_base, coverage_base) = measures(&counts, coverage_kind)?;
    let mut chosen = BTreeMap::new();
    for (name, _) in fits {
        *chosen.entry(name.to_string()).or_insert(0) += 1;
    }
    Ok(BaselineResult {
        condition: condition.clone(),
        p_base,
        coverage_base,
        coverage_kind,
        analysis: AnalysisDescriptor {
            learner: *cfg,
            mode,
            chosen,
            all_converged: fits.iter().all(|f| f.1),
        },
        n_targets: predictions.len(),
        counts,
        near_duplicates,
    })
}

/// Fits on `analysis_set` and scores predictions for every row of
/// `targets`. With `analysis_set` the members of a split and `targets` its
/// non-members this is the relaxed baseline; with an anonymized or
/// synthetic `analysis_set` it is the prior-framework baseline.
pub fn baseline_against(
    analysis_set: &Dataset,
    targets: &Dataset,
    condition: &ConditionKey,
    cfg: &LearnerConfig,
    seed: u64,
) -> Result<BaselineResult> {
    condition.validate(targets)?;
    let analysis = Analysis::fit(analysis_set, condition, cfg, seed)?;
    let predictions = analysis.predict(targets, 0.0)?;
    let truths = truth_of(targets, &condition.secret);
    let flagged = match cfg.near_duplicate_tau {
        Some(tau) => Some(near_duplicates(analysis_set, targets, &condition.known, tau)?),
        None => None,
    };
    result_from(
        condition,
        cfg,
        Mode::Relaxed,
        &predictions,
        &truths,
        &[(analysis.chosen, analysis.converged)],
        flagged,
    )
}

/// Settings for [`compute_baseline`] beyond the condition and learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub mode: Mode,
    pub non_member_count: Option<usize>,
    /// Used when `non_member_count` is absent.
    pub non_member_fraction: f64,
    /// Most leave-one-out fits a complete-mode run performs.
    pub complete_budget: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            mode: Mode::Relaxed,
            non_member_count: None,
            non_member_fraction: 0.3,
            complete_budget: 500,
        }
    }
}

impl RunSettings {
    pub fn resolve_count(&self, rows: usize) -> usize {
        self.non_member_count
            .unwrap_or_else(|| (rows as f64 * self.non_member_fraction).round() as usize)
    }
}

/// Computes the baseline for one condition on `original`.
///
/// Relaxed mode draws `non_member_count` non-members with `seed`, fits once
/// on the rest and predicts them all. Complete mode draws the same number
/// of individuals (capped at the budget) and, for each, refits on the
/// original minus that individual alone.
pub fn compute_baseline(
    original: &Dataset,
    condition: &ConditionKey,
    cfg: &LearnerConfig,
    run: &RunSettings,
    seed: u64,
) -> Result<BaselineResult> {
    condition.validate(original)?;
    let count = run.resolve_count(original.len());
    match run.mode {
        Mode::Relaxed => {
            let (members, non_members) = data::split_members(original, count, seed)?;
            baseline_against(&members, &non_members, condition, cfg, seed)
        }
        Mode::Complete => {
            if count == 0 || count >= original.len() {
                return Err(data::DataError::CountOutOfRange {
                    count,
                    rows: original.len(),
                }
                .into());
            }
            let budget = count.min(run.complete_budget.max(1));
            let mut picked = index::sample(&mut rng::seeded(derive_seed(seed, LOO_SAMPLE_STREAM)), original.len(), budget).into_vec();
            picked.sort_unstable();
            let ids: Vec<RowId> = picked.iter().map(|&i| original.rows()[i].id).collect();
            complete_over(original, &ids, condition, cfg, seed)
        }
    }
}

/// [`compute_baseline`] for several conditions in parallel. Results keep
/// the order of `conditions`.
pub fn compute_baselines(
    original: &Dataset,
    conditions: &[ConditionKey],
    cfg: &LearnerConfig,
    run: &RunSettings,
    seed: u64,
) -> Vec<Result<BaselineResult>> {
    conditions
        .par_iter()
        .map(|c| compute_baseline(original, c, cfg, run, seed))
        .collect()
}

/// Leave-one-out baseline over the given individuals of `original`.
pub fn complete_over(
    original: &Dataset,
    ids: &[RowId],
    condition: &ConditionKey,
    cfg: &LearnerConfig,
    seed: u64,
) -> Result<BaselineResult> {
    type Outcome = (Prediction, &'static str, bool, Option<RowId>);
    let outcomes: Vec<Outcome> = ids
        .par_iter()
        .enumerate()
        .map(|(i, &id)| -> Result<Outcome> {
            let one: BTreeSet<RowId> = std::iter::once(id).collect();
            let (rest, target) = data::split_by_ids(original, &one)?;
            let analysis = Analysis::fit(&rest, condition, cfg, derive_seed(seed, i as u64))?;
            let pred = analysis.predict(&target, 0.0)?.pop().expect("one target");
            let flagged = match cfg.near_duplicate_tau {
                Some(tau) => near_duplicates(&rest, &target, &condition.known, tau)?.pop(),
                None => None,
            };
            Ok((pred, analysis.chosen, analysis.converged, flagged))
        })
        .collect::<Result<_>>()?;
    let targets = data::split_by_ids(original, &ids.iter().copied().collect())?.1;
    let truths = truth_of(&targets, &condition.secret);
    // split_by_ids keeps dataset order; align predictions with it
    let by_id: BTreeMap<RowId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let predictions: Vec<Prediction> = targets
        .row_ids()
        .iter()
        .map(|id| outcomes[by_id[id]].0.clone())
        .collect();
    let fits: Vec<(&'static str, bool)> = outcomes.iter().map(|o| (o.1, o.2)).collect();
    let flagged = cfg
        .near_duplicate_tau
        .map(|_| outcomes.iter().filter_map(|o| o.3).collect::<Vec<_>>());
    result_from(condition, cfg, Mode::Complete, &predictions, &truths, &fits, flagged)
}

/// Targets whose known-attribute encoding lies within normalised
/// Euclidean distance `tau` (distance divided by the square root of the
/// feature count) of some row of `analysis_set`. Flags only; nothing is
/// removed.
pub fn near_duplicates(analysis_set: &Dataset, targets: &Dataset, known: &BTreeSet<String>, tau: f64) -> Result<Vec<RowId>> {
    let mut any_secret = None;
    for c in analysis_set.columns() {
        if !known.contains(&c.name) {
            any_secret = Some(c.name.clone());
            break;
        }
    }
    let Some(other) = any_secret else {
        return Err(Error::Condition("no column outside the known set".into()));
    };
    let enc = Encoder::fit(analysis_set, known, &other)?;
    let a = enc.features::<f64>(analysis_set)?.design;
    let t = enc.features::<f64>(targets)?.design;
    let scale = (a.ncols().max(1) as f64).sqrt();
    Ok(targets
        .row_ids()
        .into_iter()
        .zip(t.rows())
        .filter(|(_, q)| {
            a.rows().into_iter().any(|r| {
                let d2: f64 = r.iter().zip(q.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                d2.sqrt() / scale < tau
            })
        })
        .map(|(id, _)| id)
        .collect())
}

/// One point of a precision / prediction-rate trade-off curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p_thresh: f64,
    /// `None` when every target abstained.
    pub p_base: Option<f64>,
    pub prediction_rate: f64,
    pub counts: Counts,
}

/// A fitted categorical analysis and its scored targets, shared by all
/// thresholds of a sweep.
pub struct SweepContext {
    pub condition: ConditionKey,
    probabilities: Array2<f64>,
    model: CategoricalModel<f64>,
    target_ids: Vec<RowId>,
    truths: Vec<Value>,
}

impl SweepContext {
    /// Relaxed split of `original`; the model is L1 logistic regression
    /// for [`LearnerKind::Auto`], otherwise the configured categorical
    /// learner.
    pub fn relaxed(original: &Dataset, condition: &ConditionKey, cfg: &LearnerConfig, non_member_count: usize, seed: u64) -> Result<Self> {
        let (members, non_members) = data::split_members(original, non_member_count, seed)?;
        Self::against(&members, &non_members, condition, cfg, seed)
    }

    pub fn against(analysis_set: &Dataset, targets: &Dataset, condition: &ConditionKey, cfg: &LearnerConfig, seed: u64) -> Result<Self> {
        if condition.validate(analysis_set)? != ColumnKind::Categorical {
            return Err(Error::Condition(format!(
                "threshold sweeps need a categorical secret, {:?} is continuous",
                condition.secret
            )));
        }
        if condition.secret_value.is_some() {
            return Err(Error::Condition("threshold sweeps take no secret_value".into()));
        }
        if cfg.kind == LearnerKind::NearestNeighbor {
            return Err(Error::Condition("nearest_neighbor gives no class probabilities to threshold".into()));
        }
        let analysis = Analysis::fit_for(analysis_set, condition, cfg, seed, Purpose::Sweep)?;
        let model = analysis.categorical_model().cloned().expect("categorical analysis");
        let x = analysis.encoder.features::<f64>(targets)?;
        let probabilities = model
            .predict_proba_batch(x.design.view())
            .map_err(|e| Error::fit("sweep probabilities", e))?;
        Ok(SweepContext {
            condition: condition.clone(),
            probabilities,
            model,
            target_ids: targets.row_ids(),
            truths: truth_of(targets, &condition.secret).into_iter().cloned().collect(),
        })
    }

    pub fn model(&self) -> &CategoricalModel<f64> {
        &self.model
    }

    pub fn probabilities(&self) -> ArrayView2<'_, f64> {
        self.probabilities.view()
    }

    pub fn predictions(&self, p_thresh: f64) -> Vec<Prediction> {
        self.target_ids
            .iter()
            .zip(self.probabilities.rows())
            .map(|(&id, p)| self.model.decide(id, p, p_thresh))
            .collect()
    }
}

/// Scores the shared model at each threshold. Abstentions count as `np`.
pub fn threshold_sweep(ctx: &SweepContext, thresholds: &[f64]) -> Result<Vec<SweepPoint>> {
    let truths: Vec<&Value> = ctx.truths.iter().collect();
    thresholds
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Condition(format!("threshold {t} outside [0, 1]")));
            }
            let (counts, _) = score(&ctx.predictions(t), &truths, &ctx.condition);
            let p_base = match metrics::precision::<f64>(&counts) {
                Ok(p) => Some(p),
                Err(MetricError::UndefinedPrecision) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(SweepPoint {
                p_thresh: t,
                p_base,
                prediction_rate: metrics::prediction_rate(&counts)?,
                counts,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub fraction: f64,
    pub condition: ConditionKey,
    pub learner: LearnerKind,
    pub p_base: f64,
    pub coverage_base: f64,
    pub n_analysis_rows: usize,
    /// `p_base` minus the same condition's `p_base` without replication.
    pub delta: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub flag_threshold: f64,
    pub non_member_ids: Vec<RowId>,
    pub rows: Vec<ReplicationRow>,
}

/// Shift in `p_base` above which a replication row is flagged.
pub const REPLICATION_FLAG: f64 = 0.05;

/// Measures how record replication (dependent individuals) moves the
/// baseline. Non-members are drawn once from `original`; for each
/// fraction the dataset is replicated and every row except the
/// non-members themselves forms the baseline dataset, so a non-member's
/// duplicate stays among the members. Fraction 0 reproduces the relaxed
/// [`compute_baseline`].
pub fn replication_study(
    original: &Dataset,
    fractions: &[f64],
    conditions: &[ConditionKey],
    learners: &[LearnerConfig],
    non_member_count: usize,
    seed: u64,
) -> Result<ReplicationReport> {
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) {
            return Err(data::DataError::FractionOutOfRange(f).into());
        }
    }
    for c in conditions {
        c.validate(original)?;
    }
    let (_, non_members) = data::split_members(original, non_member_count, seed)?;
    let nm_ids: HashSet<RowId> = non_members.row_ids().into_iter().collect();

    let mut all_fractions = vec![0.0];
    all_fractions.extend(fractions.iter().copied().filter(|&f| f != 0.0));
    let analysis_sets: Vec<Dataset> = all_fractions
        .iter()
        .map(|&f| -> Result<Dataset> {
            let r = data::replicate(original, f, derive_seed(seed, REPLICATION_STREAM))?;
            let drop: BTreeSet<RowId> = r.row_ids().into_iter().filter(|id| nm_ids.contains(id)).collect();
            Ok(data::split_by_ids(&r, &drop)?.0)
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize, usize)> = (0..all_fractions.len())
        .flat_map(|f| (0..conditions.len()).flat_map(move |c| (0..learners.len()).map(move |l| (f, c, l))))
        .collect();
    let results: Vec<BaselineResult> = tasks
        .par_iter()
        .map(|&(f, c, l)| baseline_against(&analysis_sets[f], &non_members, &conditions[c], &learners[l], seed))
        .collect::<Result<_>>()?;

    let per_fraction = conditions.len() * learners.len();
    let mut rows = Vec::new();
    for &f in fractions {
        let fi = all_fractions.iter().position(|&x| x == f).expect("listed");
        for c in 0..conditions.len() {
            for l in 0..learners.len() {
                let r = &results[fi * per_fraction + c * learners.len() + l];
                let reference = &results[c * learners.len() + l];
                let delta = r.p_base - reference.p_base;
                rows.push(ReplicationRow {
                    fraction: f,
                    condition: conditions[c].clone(),
                    learner: learners[l].kind,
                    p_base: r.p_base,
                    coverage_base: r.coverage_base,
                    n_analysis_rows: analysis_sets[fi].len(),
                    delta,
                    flagged: delta.abs() > REPLICATION_FLAG,
                });
            }
        }
    }
    Ok(ReplicationReport {
        flag_threshold: REPLICATION_FLAG,
        non_member_ids: non_members.row_ids(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;

    fn tiny() -> Dataset {
        let cols = vec![
            ColumnSpec::new("a", ColumnKind::Categorical, false),
            ColumnSpec::new("b", ColumnKind::Continuous, false),
            ColumnSpec::new("s", ColumnKind::Categorical, false),
            ColumnSpec::new("v", ColumnKind::Continuous, false),
        ];
        let rows = (0..40)
            .map(|i| {
                vec![
                    Value::cat(if i % 2 == 0 { "x" } else { "y" }),
                    Value::Num(i as f64),
                    Value::cat("same"),
                    Value::Num(10.0 + i as f64),
                ]
            })
            .collect();
        Dataset::from_values(cols, rows).unwrap()
    }

    #[test]
    fn condition_validation() {
        let d = tiny();
        assert!(ConditionKey::new(["a"], "s").validate(&d).is_ok());
        assert!(ConditionKey::new(["a", "s"], "s").validate(&d).is_err());
        assert!(ConditionKey::new(Vec::<String>::new(), "s").validate(&d).is_err());
        assert!(ConditionKey::new(["a"], "v").validate(&d).is_err());
        assert!(ConditionKey::new(["a"], "v").with_epsilon(0.05).validate(&d).is_ok());
        assert!(ConditionKey::new(["a"], "s").with_epsilon(0.05).validate(&d).is_err());
        assert!(ConditionKey::new(["a"], "v").with_epsilon(0.05).with_secret_value("1").validate(&d).is_err());
        assert!(ConditionKey::new(["zz"], "s").validate(&d).is_err());
    }

    #[test]
    fn constant_secret_gives_perfect_majority_baseline() {
        let d = tiny();
        let r = compute_baseline(&d, &ConditionKey::new(["a", "b"], "s"), &LearnerConfig::default(), &RunSettings::default(), 1).unwrap();
        assert_eq!(r.p_base, 1.0);
        assert_eq!(r.coverage_base, 1.0);
        assert_eq!(r.analysis.chosen.get("majority"), Some(&1));
        assert_eq!(r.n_targets, 12);
    }

    #[test]
    fn learner_secret_kind_mismatch() {
        let d = tiny();
        let c = ConditionKey::new(["a"], "v").with_epsilon(0.05);
        let err = compute_baseline(&d, &c, &LearnerConfig::with_kind(LearnerKind::Majority), &RunSettings::default(), 1);
        assert!(matches!(err, Err(Error::Condition(_))));
        let c = ConditionKey::new(["a"], "s");
        let err = compute_baseline(&d, &c, &LearnerConfig::with_kind(LearnerKind::Lasso), &RunSettings::default(), 1);
        assert!(matches!(err, Err(Error::Condition(_))));
    }

    #[test]
    fn explicit_logistic_on_single_class_fails_with_context() {
        let d = tiny();
        let c = ConditionKey::new(["a"], "s");
        let err = compute_baseline(&d, &c, &LearnerConfig::with_kind(LearnerKind::Logistic), &RunSettings::default(), 1).unwrap_err();
        assert!(matches!(err, Error::Fit { source: FitError::SingleClass, .. }));
        assert!(err.to_string().contains("logistic_l1"));
    }

    #[test]
    fn continuous_secret_uses_lasso() {
        let d = tiny();
        let c = ConditionKey::new(["b"], "v").with_epsilon(0.05);
        let r = compute_baseline(&d, &c, &LearnerConfig::default(), &RunSettings::default(), 4).unwrap();
        assert_eq!(r.analysis.chosen.get("lasso"), Some(&1));
        assert_eq!(r.coverage_kind, CoverageKind::PredictionRate);
        // v = b + 10 exactly; lasso with alpha 0.1 shrinks the slope a little
        assert!(r.p_base > 0.5, "{}", r.p_base);
    }

    #[test]
    fn scoring_per_value() {
        let c = ConditionKey::new(["a"], "s").with_secret_value("A");
        let preds: Vec<Prediction> = ["A", "A", "B", "-"]
            .iter()
            .enumerate()
            .map(|(i, v)| Prediction {
                target_row_id: RowId(i as u64),
                value: if *v == "-" { PredictedValue::Abstain } else { PredictedValue::Label(v.to_string()) },
                confidence: Some(0.9),
            })
            .collect();
        let truths = [Value::cat("A"), Value::cat("B"), Value::cat("A"), Value::cat("A")];
        let refs: Vec<&Value> = truths.iter().collect();
        let (counts, kind) = score(&preds, &refs, &c);
        assert_eq!(kind, CoverageKind::Recall);
        assert_eq!((counts.tp, counts.fp, counts.fn_, counts.tn, counts.np), (1, 1, 2, 0, 1));
    }

    #[test]
    fn all_abstain_is_undefined_precision() {
        let c = ConditionKey::new(["a"], "s");
        let preds = vec![Prediction {
            target_row_id: RowId(0),
            value: PredictedValue::Abstain,
            confidence: Some(0.2),
        }];
        let t = Value::cat("x");
        let err = result_from(&c, &LearnerConfig::default(), Mode::Relaxed, &preds, &[&t], &[], None).unwrap_err();
        assert!(matches!(err, Error::Metric(MetricError::UndefinedPrecision)));
    }

    #[test]
    fn near_duplicates_flagged() {
        let d = tiny();
        let (members, non_members) = data::split_members(&d, 5, 2).unwrap();
        let known: BTreeSet<String> = ["a".to_string()].into_iter().collect();
        // every target shares its only known attribute with some member
        let flagged = near_duplicates(&members, &non_members, &known, 0.01).unwrap();
        assert_eq!(flagged, non_members.row_ids());
        let known: BTreeSet<String> = ["b".to_string()].into_iter().collect();
        assert!(near_duplicates(&members, &non_members, &known, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn sweep_rejects_continuous() {
        let d = tiny();
        let c = ConditionKey::new(["a"], "v").with_epsilon(0.05);
        assert!(SweepContext::relaxed(&d, &c, &LearnerConfig::default(), 10, 1).is_err());
    }
}
