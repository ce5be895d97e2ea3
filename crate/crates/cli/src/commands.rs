use std::collections::BTreeSet;

use inferbase::baseline::{
    compute_baselines, replication_study, threshold_sweep, BaselineResult, LearnerConfig, LearnerKind, ReplicationRow, SweepContext,
    SweepPoint,
};
use inferbase::comparison::{batch_compare, ingest_attack, AttackSubmission, BatchEntry};
use inferbase::data::{load_csv, ColumnKind, Dataset, LoadReport, Schema};
use inferbase::membership::{self, bundled_fixture, default_skews, load_roc, pr_tables, PrTable};
use inferbase::metrics::SkewScenario;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, ResolvedCondition, RunConfig};
use crate::CliError;

/// Files a command produces, plus which of them go to stdout.
pub struct Output {
    pub json: Vec<u8>,
    pub csv: Vec<u8>,
    pub csv_name: &'static str,
    /// Some entries failed; the report is still written.
    pub partial_failure: bool,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_sha256: Option<String>,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    load: Option<&'a LoadReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    skipped: Vec<Skipped>,
    results: T,
}

#[derive(Serialize)]
struct Skipped {
    secret: String,
    knowledge: String,
    reason: String,
}

struct Loaded {
    data: Dataset,
    report: LoadReport,
    sha256: String,
}

fn runtime(e: inferbase::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let path = cfg.dataset_path()?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    let schema = match &cfg.schema {
        Some(p) => Some(Schema::load(p).map_err(|e| CliError::Validation(e.to_string()))?),
        None => None,
    };
    let (data, report) = load_csv(path, schema.as_ref()).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(Loaded {
        data,
        report,
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

fn check_count(cfg: &RunConfig, d: &Dataset) -> Result<usize, CliError> {
    let n = cfg.run_settings().resolve_count(d.len());
    if n == 0 || n >= d.len() {
        return Err(CliError::Validation(format!(
            "non-member count {n} must lie strictly between 0 and the {} rows",
            d.len()
        )));
    }
    Ok(n)
}

fn compatible(learner: LearnerKind, kind: ColumnKind) -> bool {
    match learner {
        LearnerKind::Auto | LearnerKind::NearestNeighbor => true,
        LearnerKind::Logistic | LearnerKind::Majority => kind == ColumnKind::Categorical,
        LearnerKind::Lasso => kind == ColumnKind::Continuous,
    }
}

fn secret_kind(d: &Dataset, c: &ResolvedCondition) -> ColumnKind {
    d.column(&c.key.secret).expect("resolved against this dataset").kind
}

fn skip(c: &ResolvedCondition, reason: impl Into<String>) -> Skipped {
    Skipped {
        secret: c.key.secret.clone(),
        knowledge: c.knowledge.clone(),
        reason: reason.into(),
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serializes");
    out.push(b'\n');
    out
}

fn to_csv<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn chosen_label(r: &BaselineResult) -> String {
    r.analysis.chosen.keys().cloned().collect::<Vec<_>>().join("+")
}

#[derive(Serialize)]
struct BaselineEntry<'a> {
    knowledge: &'a str,
    #[serde(flatten)]
    result: &'a BaselineResult,
}

#[derive(Serialize)]
struct BaselineRow<'a> {
    secret: &'a str,
    knowledge: &'a str,
    secret_value: &'a str,
    learner: String,
    p_base: f64,
    coverage_base: f64,
    coverage_kind: &'static str,
    n_targets: usize,
}

pub fn baseline(cfg: &RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let loaded = load(cfg)?;
    let d = &loaded.data;
    check_count(cfg, d)?;
    let mut conds = Vec::new();
    let mut skipped = Vec::new();
    for c in cfg.resolve_conditions(d)? {
        if compatible(cfg.learner.kind, secret_kind(d, &c)) {
            conds.push(c);
        } else {
            skipped.push(skip(&c, format!("{} cannot predict this secret", cfg.learner.kind.name())));
        }
    }
    let keys: Vec<_> = conds.iter().map(|c| c.key.clone()).collect();
    let results: Vec<BaselineResult> = compute_baselines(d, &keys, &cfg.learner, &cfg.run_settings(), seed)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(runtime)?;

    let rows: Vec<BaselineRow> = conds
        .iter()
        .zip(&results)
        .map(|(c, r)| BaselineRow {
            secret: &c.key.secret,
            knowledge: &c.knowledge,
            secret_value: c.key.secret_value.as_deref().unwrap_or(""),
            learner: chosen_label(r),
            p_base: r.p_base,
            coverage_base: r.coverage_base,
            coverage_kind: match r.coverage_kind {
                inferbase::baseline::CoverageKind::Recall => "recall",
                inferbase::baseline::CoverageKind::PredictionRate => "prediction_rate",
            },
            n_targets: r.n_targets,
        })
        .collect();
    let entries: Vec<BaselineEntry> = conds
        .iter()
        .zip(&results)
        .map(|(c, r)| BaselineEntry {
            knowledge: &c.knowledge,
            result: r,
        })
        .collect();
    Ok(Output {
        json: to_json(&Envelope {
            command: "baseline",
            config_hash: cfg.hash(),
            dataset_sha256: Some(loaded.sha256.clone()),
            config: cfg,
            load: Some(&loaded.report),
            skipped,
            results: entries,
        }),
        csv: to_csv(&rows)?,
        csv_name: "summary.csv",
        partial_failure: false,
    })
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    secret: &'a str,
    knowledge: &'a str,
    model: &'static str,
    points: Vec<SweepPoint>,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    secret: &'a str,
    knowledge: &'a str,
    p_thresh: f64,
    precision: Option<f64>,
    prediction_rate: f64,
}

pub fn sweep(cfg: &RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let loaded = load(cfg)?;
    let d = &loaded.data;
    let count = check_count(cfg, d)?;
    if cfg.thresholds.is_empty() {
        return Err(CliError::Validation("no thresholds configured".into()));
    }
    if let Some(t) = cfg.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Validation(format!("threshold {t} outside [0, 1]")));
    }
    let conds = cfg.resolve_conditions(d)?;
    let mut skipped = Vec::new();
    let mut entries = Vec::new();
    for c in &conds {
        if secret_kind(d, c) != ColumnKind::Categorical {
            skipped.push(skip(c, "continuous secret"));
            continue;
        }
        if c.key.secret_value.is_some() {
            skipped.push(skip(c, "sweeps take no secret_value"));
            continue;
        }
        if matches!(cfg.learner.kind, LearnerKind::Lasso | LearnerKind::NearestNeighbor) {
            skipped.push(skip(c, format!("{} gives no class probabilities", cfg.learner.kind.name())));
            continue;
        }
        let ctx = SweepContext::relaxed(d, &c.key, &cfg.learner, count, seed).map_err(runtime)?;
        let points = threshold_sweep(&ctx, &cfg.thresholds).map_err(runtime)?;
        entries.push(SweepEntry {
            secret: &c.key.secret,
            knowledge: &c.knowledge,
            model: ctx.model().name,
            points,
        });
    }
    let rows: Vec<SweepRow> = entries
        .iter()
        .flat_map(|e| {
            e.points.iter().map(|p| SweepRow {
                secret: e.secret,
                knowledge: e.knowledge,
                p_thresh: p.p_thresh,
                precision: p.p_base,
                prediction_rate: p.prediction_rate,
            })
        })
        .collect();
    Ok(Output {
        json: to_json(&Envelope {
            command: "sweep",
            config_hash: cfg.hash(),
            dataset_sha256: Some(loaded.sha256.clone()),
            config: cfg,
            load: Some(&loaded.report),
            skipped,
            results: entries,
        }),
        csv: to_csv(&rows)?,
        csv_name: "sweep.csv",
        partial_failure: false,
    })
}

#[derive(Serialize)]
struct CompareRow<'a> {
    attack: &'a str,
    secret: &'a str,
    outcome: &'a str,
    p_atk: Option<f64>,
    c_atk: Option<f64>,
    p_base: Option<f64>,
    pi: Option<f64>,
    n_targets: Option<usize>,
    n_predicted: Option<usize>,
    error: &'a str,
}

pub fn compare(cfg: &RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let loaded = load(cfg)?;
    let d = &loaded.data;
    if cfg.attacks.is_empty() {
        return Err(CliError::Validation("no attacks configured".into()));
    }
    let mut slots: Vec<Result<AttackSubmission, BatchEntry>> = Vec::new();
    for a in &cfg.attacks {
        let cond = cfg.resolve_attack(d, a)?;
        let name = a
            .file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        slots.push(ingest_attack(&a.file, d, &cond.key).map_err(|e| BatchEntry {
            attack_name: name,
            report: None,
            error: Some(e.to_string()),
        }));
    }
    let valid: Vec<AttackSubmission> = slots.iter().filter_map(|s| s.as_ref().ok().cloned()).collect();
    let batch = batch_compare(&valid, d, &cfg.learner, &cfg.run_settings(), seed);
    let mut scored = batch.entries.into_iter();
    let entries: Vec<BatchEntry> = slots
        .into_iter()
        .map(|s| match s {
            Ok(_) => scored.next().expect("one entry per valid submission"),
            Err(e) => e,
        })
        .collect();
    let failed = entries.iter().any(|e| e.error.is_some());
    let rows: Vec<CompareRow> = entries
        .iter()
        .zip(&cfg.attacks)
        .map(|(e, a)| {
            let r = e.report.as_ref();
            CompareRow {
                attack: &e.attack_name,
                secret: &a.secret,
                outcome: match r.map(|r| r.outcome) {
                    Some(inferbase::comparison::Outcome::Scored) => "scored",
                    Some(inferbase::comparison::Outcome::BaselinePerfect) => "baseline_perfect",
                    Some(inferbase::comparison::Outcome::NoPredictions) => "no_predictions",
                    None => "error",
                },
                p_atk: r.and_then(|r| r.p_atk),
                c_atk: r.map(|r| r.c_atk),
                p_base: r.and_then(|r| r.p_base),
                pi: r.and_then(|r| r.pi),
                n_targets: r.map(|r| r.n_targets),
                n_predicted: r.map(|r| r.n_predicted),
                error: e.error.as_deref().unwrap_or(""),
            }
        })
        .collect();
    Ok(Output {
        json: to_json(&Envelope {
            command: "compare",
            config_hash: cfg.hash(),
            dataset_sha256: Some(loaded.sha256.clone()),
            config: cfg,
            load: Some(&loaded.report),
            skipped: Vec::new(),
            results: &entries,
        }),
        csv: to_csv(&rows)?,
        csv_name: "comparison.csv",
        partial_failure: failed,
    })
}

#[derive(Serialize)]
struct ReplicationEntry<'a> {
    knowledge: &'a str,
    #[serde(flatten)]
    row: &'a ReplicationRow,
}

#[derive(Serialize)]
struct ReplicationCsvRow<'a> {
    fraction: f64,
    secret: &'a str,
    knowledge: &'a str,
    learner: &'static str,
    p_base: f64,
    coverage_base: f64,
    delta: f64,
    flagged: bool,
}

pub fn replicate(cfg: &RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let loaded = load(cfg)?;
    let d = &loaded.data;
    let count = check_count(cfg, d)?;
    if cfg.fractions.is_empty() {
        return Err(CliError::Validation("no fractions configured".into()));
    }
    if let Some(f) = cfg.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(CliError::Validation(format!("fraction {f} outside [0, 1]")));
    }
    let mut seen = BTreeSet::new();
    if let Some(f) = cfg.fractions.iter().find(|f| !seen.insert(f.to_bits())) {
        return Err(CliError::Validation(format!("fraction {f} listed twice")));
    }
    let learners = cfg.learners();
    let conds = cfg.resolve_conditions(d)?;
    let mut skipped = Vec::new();
    let mut rows: Vec<(&str, ReplicationRow)> = Vec::new();
    let mut non_member_ids = None;
    for c in &conds {
        let kind = secret_kind(d, c);
        let usable: Vec<LearnerConfig> = learners.iter().copied().filter(|l| compatible(l.kind, kind)).collect();
        for l in learners.iter().filter(|l| !compatible(l.kind, kind)) {
            skipped.push(skip(c, format!("{} cannot predict this secret", l.kind.name())));
        }
        if usable.is_empty() {
            continue;
        }
        let report = replication_study(d, &cfg.fractions, std::slice::from_ref(&c.key), &usable, count, seed).map_err(runtime)?;
        non_member_ids.get_or_insert(report.non_member_ids);
        rows.extend(report.rows.into_iter().map(|r| (c.knowledge.as_str(), r)));
    }
    // group by fraction, keeping condition and learner order within each
    let mut ordered: Vec<&(&str, ReplicationRow)> = rows.iter().collect();
    ordered.sort_by(|a, b| a.1.fraction.total_cmp(&b.1.fraction));
    let csv_rows: Vec<ReplicationCsvRow> = ordered
        .iter()
        .map(|(k, r)| ReplicationCsvRow {
            fraction: r.fraction,
            secret: &r.condition.secret,
            knowledge: k,
            learner: r.learner.name(),
            p_base: r.p_base,
            coverage_base: r.coverage_base,
            delta: r.delta,
            flagged: r.flagged,
        })
        .collect();
    let entries: Vec<ReplicationEntry> = ordered
        .iter()
        .map(|(k, r)| ReplicationEntry { knowledge: k, row: r })
        .collect();
    #[derive(Serialize)]
    struct Results<'a> {
        flag_threshold: f64,
        non_member_count: usize,
        rows: Vec<ReplicationEntry<'a>>,
    }
    Ok(Output {
        json: to_json(&Envelope {
            command: "replicate",
            config_hash: cfg.hash(),
            dataset_sha256: Some(loaded.sha256.clone()),
            config: cfg,
            load: Some(&loaded.report),
            skipped,
            results: Results {
                flag_threshold: inferbase::baseline::REPLICATION_FLAG,
                non_member_count: non_member_ids.map(|v| v.len()).unwrap_or(count),
                rows: entries,
            },
        }),
        csv: to_csv(&csv_rows)?,
        csv_name: "replication.csv",
        partial_failure: false,
    })
}

pub fn roc2pr(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut curves = Vec::new();
    if cfg.bundled {
        let (s, c) = bundled_fixture();
        curves.push(s);
        curves.push(c);
    }
    for p in &cfg.roc {
        curves.push(load_roc(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?);
    }
    if curves.is_empty() {
        return Err(CliError::Validation("no ROC curves: pass --roc files or --bundled".into()));
    }
    let skews: Vec<SkewScenario> = if cfg.skews.is_empty() {
        default_skews()
    } else {
        cfg.skews
            .iter()
            .map(|s| SkewScenario::parse(s).map_err(|e| CliError::Validation(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let tables: Vec<PrTable> = pr_tables(&curves, &skews).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut csv = Vec::new();
    membership::write_csv(&tables, &mut csv).map_err(runtime)?;
    Ok(Output {
        json: to_json(&Envelope {
            command: "roc2pr",
            config_hash: cfg.hash(),
            dataset_sha256: None,
            config: cfg,
            load: None,
            skipped: Vec::new(),
            results: &tables,
        }),
        csv,
        csv_name: "pr.csv",
        partial_failure: false,
    })
}
