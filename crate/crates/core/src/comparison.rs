//! Scoring externally produced attacks against coverage-matched
//! baselines.
//!
//! An attack names a set of targets 𝕋 and predicts the secret of a subset
//! ℙ of them (the rest are abstentions). Its coverage is `|ℙ| / |𝕋|`. The
//! baseline is measured on exactly the targets in ℙ, each treated as a
//! non-member, so both sides share the same coverage and their precisions
//! can be compared through [`precision_improvement`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, Analysis, BaselineResult, ConditionKey, CoverageKind, LearnerConfig, Mode, RunSettings};
use crate::data::{self, ColumnKind, DataError, Dataset, RowId, Value};
use crate::learners::{PredictedValue, Prediction};
use crate::metrics::{self, precision_improvement, Counts, MetricError};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSubmission {
    pub attack_name: String,
    pub condition: ConditionKey,
    pub target_ids: BTreeSet<RowId>,
    pub predictions: Vec<Prediction>,
}

impl AttackSubmission {
    /// Validates that predictions refer to targets, once each, and that
    /// target ids exist in `original`.
    pub fn new(
        attack_name: impl Into<String>,
        condition: ConditionKey,
        target_ids: BTreeSet<RowId>,
        predictions: Vec<Prediction>,
        original: &Dataset,
    ) -> Result<Self> {
        let kind = condition.validate(original)?;
        for id in &target_ids {
            if original.row_by_id(*id).is_none() {
                return Err(Error::Submission(format!("unknown target id {id}")));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &predictions {
            if !target_ids.contains(&p.target_row_id) {
                return Err(Error::Submission(format!("prediction for non-target {}", p.target_row_id)));
            }
            if !seen.insert(p.target_row_id) {
                return Err(Error::Submission(format!("duplicate prediction for {}", p.target_row_id)));
            }
            let ok = matches!(
                (&p.value, kind),
                (PredictedValue::Abstain, _)
                    | (PredictedValue::Label(_), ColumnKind::Categorical)
                    | (PredictedValue::Real(_), ColumnKind::Continuous)
            );
            if !ok {
                return Err(Error::Submission(format!(
                    "prediction for {} does not match the {kind:?} secret {:?}",
                    p.target_row_id, condition.secret
                )));
            }
        }
        Ok(AttackSubmission {
            attack_name: attack_name.into(),
            condition,
            target_ids,
            predictions,
        })
    }

    /// ℙ: the targets the attack made a prediction for.
    pub fn predicted_ids(&self) -> BTreeSet<RowId> {
        self.predictions
            .iter()
            .filter(|p| !p.is_abstain())
            .map(|p| p.target_row_id)
            .collect()
    }
}

/// Reads an attack file with header `target_id,prediction`. Every listed
/// id is a target; an empty prediction is an abstention.
pub fn ingest_attack(path: impl AsRef<Path>, original: &Dataset, condition: &ConditionKey) -> Result<AttackSubmission> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "attack".into());
    parse_attack(file, name, original, condition)
}

pub fn parse_attack<R: Read>(reader: R, attack_name: impl Into<String>, original: &Dataset, condition: &ConditionKey) -> Result<AttackSubmission> {
    let kind = condition.validate(original)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(DataError::from)?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["target_id", "prediction"] {
        return Err(Error::Submission(format!("expected header target_id,prediction, found {}", header.join(","))));
    }
    let mut targets = BTreeSet::new();
    let mut predictions = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(DataError::from)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Submission(format!("line {line}: bad target id {:?}", &rec[0])))?;
        let id = RowId(id);
        if !targets.insert(id) {
            return Err(Error::Submission(format!("line {line}: duplicate target id {id}")));
        }
        let raw = rec[1].trim();
        let value = if raw.is_empty() {
            PredictedValue::Abstain
        } else {
            match kind {
                ColumnKind::Categorical => PredictedValue::Label(raw.to_string()),
                ColumnKind::Continuous => PredictedValue::Real(
                    raw.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Submission(format!("line {line}: {raw:?} is not a number")))?,
                ),
            }
        };
        predictions.push(Prediction {
            target_row_id: id,
            value,
            confidence: None,
        });
    }
    AttackSubmission::new(attack_name, condition.clone(), targets, predictions, original)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Scored,
    /// The baseline already predicts every target in ℙ correctly, so no
    /// improvement is possible and PI is undefined.
    BaselinePerfect,
    /// The attack abstained on every target.
    NoPredictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub attack_name: String,
    pub condition: ConditionKey,
    pub outcome: Outcome,
    pub p_atk: Option<f64>,
    pub c_atk: f64,
    pub p_base: Option<f64>,
    pub pi: Option<f64>,
    pub coverage_kind: CoverageKind,
    pub n_targets: usize,
    pub n_predicted: usize,
    pub attack_counts: Counts,
    /// ℙ; the baseline was scored on exactly these targets.
    pub scored_ids: Vec<RowId>,
    pub baseline: Option<BaselineResult>,
}

/// Result of one submission in a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub attack_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub entries: Vec<BatchEntry>,
    /// Number of baseline fits performed.
    pub fits: usize,
}

impl BatchOutcome {
    pub fn any_errors(&self) -> bool {
        self.entries.iter().any(|e| e.error.is_some())
    }
}

fn attack_counts(sub: &AttackSubmission, original: &Dataset) -> Counts {
    let s = original.column_index(&sub.condition.secret).expect("validated");
    let eps = sub.condition.epsilon();
    let mut c = Counts::default();
    let predicted: BTreeMap<RowId, &PredictedValue> = sub.predictions.iter().map(|p| (p.target_row_id, &p.value)).collect();
    for id in &sub.target_ids {
        let truth = &original.row_by_id(*id).expect("validated").values[s];
        let outcome = predicted
            .get(id)
            .and_then(|v| baseline::is_correct(v, truth, eps));
        c.record_inference(outcome);
    }
    c
}

/// Compares one attack against its coverage-matched baseline.
pub fn compare(sub: &AttackSubmission, original: &Dataset, cfg: &LearnerConfig, run: &RunSettings, seed: u64) -> Result<ComparisonReport> {
    let mut out = batch_compare_results(std::slice::from_ref(sub), original, cfg, run, seed);
    out.0.pop().expect("one entry")
}

/// Compares many submissions. Submissions sharing a condition share one
/// baseline fit, made after removing the union of their predicted
/// targets. Errors are kept per entry and output order follows the input.
pub fn batch_compare(subs: &[AttackSubmission], original: &Dataset, cfg: &LearnerConfig, run: &RunSettings, seed: u64) -> BatchOutcome {
    let (results, fits) = batch_compare_results(subs, original, cfg, run, seed);
    BatchOutcome {
        entries: subs
            .iter()
            .zip(results)
            .map(|(s, r)| match r {
                Ok(report) => BatchEntry {
                    attack_name: s.attack_name.clone(),
                    report: Some(report),
                    error: None,
                },
                Err(e) => BatchEntry {
                    attack_name: s.attack_name.clone(),
                    report: None,
                    error: Some(e.to_string()),
                },
            })
            .collect(),
        fits,
    }
}

fn batch_compare_results(
    subs: &[AttackSubmission],
    original: &Dataset,
    cfg: &LearnerConfig,
    run: &RunSettings,
    seed: u64,
) -> (Vec<Result<ComparisonReport>>, usize) {
    let mut results: Vec<Option<Result<ComparisonReport>>> = (0..subs.len()).map(|_| None).collect();
    let mut groups: BTreeMap<&ConditionKey, Vec<usize>> = BTreeMap::new();
    for (i, s) in subs.iter().enumerate() {
        let check = s.condition.validate(original).and_then(|_| {
            if s.condition.secret_value.is_some() {
                Err(Error::Condition("comparisons take no secret_value".into()))
            } else {
                Ok(())
            }
        });
        match check {
            Ok(()) => groups.entry(&s.condition).or_default().push(i),
            Err(e) => results[i] = Some(Err(e)),
        }
    }
    let fits = AtomicUsize::new(0);
    let grouped: Vec<(Vec<usize>, Vec<Result<ComparisonReport>>)> = groups
        .into_par_iter()
        .map(|(condition, idx)| {
            let members: Vec<&AttackSubmission> = idx.iter().map(|&i| &subs[i]).collect();
            let reports = compare_group(condition, &members, original, cfg, run, seed, &fits);
            (idx, reports)
        })
        .collect();
    for (idx, reports) in grouped {
        for (i, r) in idx.into_iter().zip(reports) {
            results[i] = Some(r);
        }
    }
    (
        results.into_iter().map(|r| r.expect("every entry filled")).collect(),
        fits.into_inner(),
    )
}

/// Baseline predictions for the targets in `union`, by the configured
/// removal granularity.
fn group_predictions(
    condition: &ConditionKey,
    union: &BTreeSet<RowId>,
    original: &Dataset,
    cfg: &LearnerConfig,
    run: &RunSettings,
    seed: u64,
    fits: &AtomicUsize,
) -> Result<(BTreeMap<RowId, Prediction>, Vec<(&'static str, bool)>)> {
    match run.mode {
        Mode::Relaxed => {
            let (rest, targets) = data::split_by_ids(original, union)?;
            let analysis = Analysis::fit(&rest, condition, cfg, seed)?;
            fits.fetch_add(1, Ordering::Relaxed);
            let preds = analysis.predict(&targets, 0.0)?;
            Ok((
                preds.into_iter().map(|p| (p.target_row_id, p)).collect(),
                vec![(analysis.chosen, analysis.converged)],
            ))
        }
        Mode::Complete => {
            let ids: Vec<RowId> = union.iter().copied().collect();
            let out: Vec<(Prediction, &'static str, bool)> = ids
                .par_iter()
                .enumerate()
                .map(|(i, &id)| -> Result<_> {
                    let one = std::iter::once(id).collect();
                    let (rest, target) = data::split_by_ids(original, &one)?;
                    let analysis = Analysis::fit(&rest, condition, cfg, derive_seed(seed, i as u64))?;
                    fits.fetch_add(1, Ordering::Relaxed);
                    let p = analysis.predict(&target, 0.0)?.pop().expect("one target");
                    Ok((p, analysis.chosen, analysis.converged))
                })
                .collect::<Result<_>>()?;
            let chosen = out.iter().map(|o| (o.1, o.2)).collect();
            Ok((out.into_iter().map(|o| (o.0.target_row_id, o.0)).collect(), chosen))
        }
    }
}

fn compare_group(
    condition: &ConditionKey,
    subs: &[&AttackSubmission],
    original: &Dataset,
    cfg: &LearnerConfig,
    run: &RunSettings,
    seed: u64,
    fits: &AtomicUsize,
) -> Vec<Result<ComparisonReport>> {
    let union: BTreeSet<RowId> = subs.iter().flat_map(|s| s.predicted_ids()).collect();
    let shared = if union.is_empty() {
        Ok((BTreeMap::new(), Vec::new()))
    } else {
        group_predictions(condition, &union, original, cfg, run, seed, fits)
    };
    let shared = match shared {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return subs.iter().map(|_| Err(Error::Condition(msg.clone()))).collect();
        }
    };
    subs.iter()
        .map(|s| score_submission(s, original, cfg, run.mode, &shared.0, &shared.1))
        .collect()
}

fn score_submission(
    sub: &AttackSubmission,
    original: &Dataset,
    cfg: &LearnerConfig,
    mode: Mode,
    base_preds: &BTreeMap<RowId, Prediction>,
    fits: &[(&'static str, bool)],
) -> Result<ComparisonReport> {
    let counts = attack_counts(sub, original);
    let scored: Vec<RowId> = sub.predicted_ids().into_iter().collect();
    let n_targets = sub.target_ids.len();
    if n_targets == 0 {
        return Err(Error::Submission("submission has no targets".into()));
    }
    let c_atk = scored.len() as f64 / n_targets as f64;
    let mut report = ComparisonReport {
        attack_name: sub.attack_name.clone(),
        condition: sub.condition.clone(),
        outcome: Outcome::NoPredictions,
        p_atk: None,
        c_atk,
        p_base: None,
        pi: None,
        coverage_kind: CoverageKind::PredictionRate,
        n_targets,
        n_predicted: scored.len(),
        attack_counts: counts,
        scored_ids: scored.clone(),
        baseline: None,
    };
    if scored.is_empty() {
        return Ok(report);
    }
    let p_atk = metrics::precision::<f64>(&counts)?;

    let s = original.column_index(&sub.condition.secret).expect("validated");
    let preds: Vec<Prediction> = scored.iter().map(|id| base_preds[id].clone()).collect();
    let truths: Vec<&Value> = scored.iter().map(|id| &original.row_by_id(*id).expect("validated").values[s]).collect();
    let (base_counts, _) = baseline::score(&preds, &truths, &sub.condition);
    let p_base = metrics::precision::<f64>(&base_counts)?;
    let mut chosen = BTreeMap::new();
    for (name, _) in fits {
        *chosen.entry(name.to_string()).or_insert(0) += 1;
    }
    report.baseline = Some(BaselineResult {
        condition: sub.condition.clone(),
        p_base,
        // the baseline predicts every target in ℙ, so it shares c_atk
        coverage_base: c_atk,
        coverage_kind: CoverageKind::PredictionRate,
        analysis: baseline::AnalysisDescriptor {
            learner: *cfg,
            mode,
            chosen,
            all_converged: fits.iter().all(|f| f.1),
        },
        n_targets: scored.len(),
        counts: base_counts,
        near_duplicates: None,
    });
    report.p_atk = Some(p_atk);
    report.p_base = Some(p_base);
    match precision_improvement(p_atk, p_base) {
        Ok(pi) => {
            report.outcome = Outcome::Scored;
            report.pi = Some(pi);
        }
        Err(MetricError::BaselinePerfect) => report.outcome = Outcome::BaselinePerfect,
        Err(e) => return Err(e.into()),
    }
    Ok(report)
}

/// Attacks used as test fixtures.
pub mod fixtures {
    use super::*;

    fn truths<'d>(original: &'d Dataset, condition: &ConditionKey, targets: &BTreeSet<RowId>) -> Result<Vec<(RowId, &'d Value)>> {
        let s = original.column(&condition.secret).map(|_| original.column_index(&condition.secret).expect("exists"))?;
        targets
            .iter()
            .map(|id| {
                original
                    .row_by_id(*id)
                    .map(|r| (*id, &r.values[s]))
                    .ok_or_else(|| Error::Submission(format!("unknown target id {id}")))
            })
            .collect()
    }

    fn as_prediction(id: RowId, v: &Value) -> Prediction {
        Prediction {
            target_row_id: id,
            value: match v {
                Value::Cat(s) => PredictedValue::Label(s.to_string()),
                Value::Num(x) => PredictedValue::Real(*x),
            },
            confidence: None,
        }
    }

    /// Predicts every target's true secret.
    pub fn oracle_attack(original: &Dataset, condition: &ConditionKey, targets: &BTreeSet<RowId>) -> Result<AttackSubmission> {
        let preds = truths(original, condition, targets)?
            .into_iter()
            .map(|(id, v)| as_prediction(id, v))
            .collect();
        AttackSubmission::new("oracle", condition.clone(), targets.clone(), preds, original)
    }

    /// Predicts a value drawn uniformly from the secret's observed values.
    pub fn random_guess_attack(original: &Dataset, condition: &ConditionKey, targets: &BTreeSet<RowId>, seed: u64) -> Result<AttackSubmission> {
        let s = original.column_index(&condition.secret).ok_or_else(|| DataError::UnknownColumn(condition.secret.clone()))?;
        let mut pool: Vec<&Value> = Vec::new();
        for r in original.rows() {
            if !pool.iter().any(|v| v.same(&r.values[s])) {
                pool.push(&r.values[s]);
            }
        }
        let mut rng = rng::seeded(seed);
        let preds = targets
            .iter()
            .map(|&id| as_prediction(id, pool.choose(&mut rng).expect("non-empty dataset")))
            .collect();
        AttackSubmission::new("random_guess", condition.clone(), targets.clone(), preds, original)
    }

    /// Predicts exactly what the relaxed baseline for `targets` predicts:
    /// the configured analysis fit on `original` minus `targets`.
    pub fn baseline_mimic_attack(
        original: &Dataset,
        condition: &ConditionKey,
        targets: &BTreeSet<RowId>,
        cfg: &LearnerConfig,
        seed: u64,
    ) -> Result<AttackSubmission> {
        let (rest, target_rows) = data::split_by_ids(original, targets)?;
        let analysis = Analysis::fit(&rest, condition, cfg, seed)?;
        let preds = analysis.predict(&target_rows, 0.0)?;
        AttackSubmission::new("baseline_mimic", condition.clone(), targets.clone(), preds, original)
    }

    /// Abstains on every target.
    pub fn abstain_attack(original: &Dataset, condition: &ConditionKey, targets: &BTreeSet<RowId>) -> Result<AttackSubmission> {
        let preds = targets
            .iter()
            .map(|&id| Prediction {
                target_row_id: id,
                value: PredictedValue::Abstain,
                confidence: None,
            })
            .collect();
        AttackSubmission::new("abstain", condition.clone(), targets.clone(), preds, original)
    }

    /// A seeded random subset of `count` row ids of `original`.
    pub fn random_targets(original: &Dataset, count: usize, seed: u64) -> BTreeSet<RowId> {
        let mut ids = original.row_ids();
        ids.shuffle(&mut rng::seeded(seed));
        ids.truncate(count);
        ids.into_iter().collect()
    }
}
