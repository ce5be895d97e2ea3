//! Property checks for baselines on the BankChurners credit-card table, and
//! a synthetic table with the same columns for exercising them without the
//! real file. The acceptance suite lives in `tests/acceptance.rs`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use inferbase::baseline::{compute_baselines, threshold_sweep, ConditionKey, LearnerConfig, RunSettings, SweepContext};
use inferbase::data::{load_csv, split_members, ColumnKind, ColumnSpec, Dataset, Schema, Value};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

pub const NON_MEMBERS: usize = 3039;
pub const SEED: u64 = 20240101;
pub const THRESHOLDS: [f64; 10] = [0.0, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999];
/// How far all-features knowledge may fall below PII-only knowledge.
pub const KNOWLEDGE_SLACK: f64 = 0.05;

pub fn workspace_root() -> PathBuf {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    manifest.ancestors().nth(2).unwrap_or(manifest).to_path_buf()
}

/// `BANKCHURNERS_CSV`, else `data/BankChurners.csv` in the workspace.
pub fn csv_path() -> PathBuf {
    std::env::var_os("BANKCHURNERS_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/BankChurners.csv"))
}

pub fn load() -> Result<Dataset, String> {
    let path = csv_path();
    if !path.is_file() {
        return Err(format!("{} not found (set BANKCHURNERS_CSV)", path.display()));
    }
    let schema = Schema::load(workspace_root().join("data/bankchurners.schema.toml")).map_err(|e| e.to_string())?;
    let (d, _) = load_csv(&path, Some(&schema)).map_err(|e| e.to_string())?;
    Ok(d)
}

pub fn learner() -> LearnerConfig {
    LearnerConfig {
        c: 0.01,
        alpha: 0.1,
        ..LearnerConfig::default()
    }
}

#[derive(Debug, Default)]
pub struct Findings {
    pub conditions: usize,
    pub violations: Vec<String>,
    /// Categorical secrets whose sweep reached precision 1 with a
    /// non-zero prediction rate.
    pub perfect: Vec<String>,
}

fn modal_frequency(values: &[&Value]) -> f64 {
    let mut counts = BTreeMap::new();
    for v in values {
        *counts.entry(v.to_string()).or_insert(0usize) += 1;
    }
    *counts.values().max().unwrap_or(&0) as f64 / values.len() as f64
}

/// Runs every secret under all-features and PII-only knowledge and
/// collects violations of the three properties.
pub fn check(d: &Dataset, non_members: usize, seed: u64) -> Result<Findings, String> {
    let cfg = learner();
    let run = RunSettings {
        non_member_count: Some(non_members),
        ..RunSettings::default()
    };
    let names: Vec<String> = d.columns().iter().map(|c| c.name.clone()).collect();
    let pii: Vec<&str> = d.pii_columns();
    let mut conditions = Vec::new();
    for s in &names {
        let kind = d.column(s).unwrap().kind;
        let with_eps = |k: ConditionKey| if kind == ColumnKind::Continuous { k.with_epsilon(0.05) } else { k };
        conditions.push(with_eps(ConditionKey::new(names.iter().filter(|c| *c != s), s)));
        conditions.push(with_eps(ConditionKey::new(pii.iter().copied().filter(|c| c != s), s)));
    }
    let results: Vec<_> = compute_baselines(d, &conditions, &cfg, &run, seed)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let (_, targets) = split_members(d, non_members, seed).map_err(|e| e.to_string())?;
    let mut f = Findings {
        conditions: results.len(),
        ..Findings::default()
    };
    for pair in results.chunks(2) {
        let (all, pii_only) = (&pair[0], &pair[1]);
        let secret = &all.condition.secret;
        if d.column(secret).unwrap().kind == ColumnKind::Categorical {
            let modal = modal_frequency(&targets.column_values(secret).unwrap());
            for r in pair {
                if r.n_targets != targets.len() {
                    f.violations.push(format!("{}: scored {} of {} targets", r.condition.label(), r.n_targets, targets.len()));
                }
                if r.p_base < modal {
                    f.violations.push(format!("{}: precision {:.4} < modal {:.4}", r.condition.label(), r.p_base, modal));
                }
            }
            let ctx = SweepContext::relaxed(d, &all.condition, &cfg, non_members, seed).map_err(|e| e.to_string())?;
            let pts = threshold_sweep(&ctx, &THRESHOLDS).map_err(|e| e.to_string())?;
            if pts.iter().any(|p| p.p_base == Some(1.0) && p.prediction_rate > 0.0) {
                f.perfect.push(secret.clone());
            }
        }
        if all.p_base < pii_only.p_base - KNOWLEDGE_SLACK {
            f.violations.push(format!(
                "{secret}: all-features {:.4} < pii-only {:.4} - {KNOWLEDGE_SLACK}",
                all.p_base, pii_only.p_base
            ));
        }
    }
    if f.perfect.is_empty() {
        f.violations.push("no categorical secret reached precision 1 in the sweep".into());
    }
    Ok(f)
}

/// A table with the BankChurners columns, kinds and PII flags. Attrition
/// is a deterministic function of transaction count and balance; the other
/// columns are loosely coupled.
pub fn standin(rows: usize, seed: u64) -> Dataset {
    let mut rng = inferbase::rng::seeded(seed);
    let header: Vec<ColumnSpec> = BANK_COLUMNS
        .iter()
        .map(|&(name, kind, pii)| ColumnSpec::new(name, kind, pii))
        .collect();
    // category frequencies roughly follow the public table
    let pick = |rng: &mut inferbase::rng::Rng, xs: &[(&str, u32)]| {
        let w = WeightedIndex::new(xs.iter().map(|x| x.1)).unwrap();
        Value::cat(xs[w.sample(rng)].0)
    };
    let values = (0..rows)
        .map(|_| {
            let age: f64 = rng.gen_range(26..74) as f64;
            let months = (age - 20.0).min(56.0) - rng.gen_range(0..10) as f64;
            let trans_ct: f64 = rng.gen_range(10..140) as f64;
            let revolving: f64 = rng.gen_range(0..2600) as f64;
            let attrited = trans_ct < 45.0 && revolving < 1300.0;
            let gender = rng.gen_bool(0.53);
            let income = if gender {
                ["Less than $40K", "$40K - $60K", "Unknown"][rng.gen_range(0..3)]
            } else {
                ["$60K - $80K", "$80K - $120K", "$120K +", "$40K - $60K"][rng.gen_range(0..4)]
            };
            let card = if rng.gen_bool(0.93) { "Blue" } else { ["Silver", "Gold", "Platinum"][rng.gen_range(0..3)] };
            let limit: f64 = if card == "Blue" { rng.gen_range(1400.0..12000.0) } else { rng.gen_range(15000.0..34500.0) };
            let amt = trans_ct * rng.gen_range(40.0..90.0);
            vec![
                Value::cat(if attrited { "Attrited Customer" } else { "Existing Customer" }),
                Value::Num(age),
                Value::cat(if gender { "F" } else { "M" }),
                Value::Num(rng.gen_range(0..6) as f64),
                pick(
                    &mut rng,
                    &[
                        ("Graduate", 3128),
                        ("High School", 2013),
                        ("Unknown", 1519),
                        ("Uneducated", 1487),
                        ("College", 1013),
                        ("Post-Graduate", 516),
                        ("Doctorate", 451),
                    ],
                ),
                pick(&mut rng, &[("Married", 4687), ("Single", 3943), ("Unknown", 749), ("Divorced", 748)]),
                Value::cat(income),
                Value::cat(card),
                Value::Num(months.max(13.0)),
                Value::Num(rng.gen_range(1..7) as f64),
                Value::Num(rng.gen_range(0..7) as f64),
                Value::Num(rng.gen_range(0..7) as f64),
                Value::Num(limit),
                Value::Num(revolving),
                Value::Num((limit - revolving).max(3.0)),
                Value::Num(rng.gen_range(0.0..3.4)),
                Value::Num(amt),
                Value::Num(trans_ct),
                Value::Num(rng.gen_range(0.0..3.7)),
                Value::Num(revolving / limit),
            ]
        })
        .collect();
    Dataset::from_values(header, values).unwrap()
}

const BANK_COLUMNS: [(&str, ColumnKind, bool); 20] = [
    ("Attrition_Flag", ColumnKind::Categorical, false),
    ("Customer_Age", ColumnKind::Continuous, true),
    ("Gender", ColumnKind::Categorical, true),
    ("Dependent_count", ColumnKind::Continuous, true),
    ("Education_Level", ColumnKind::Categorical, true),
    ("Marital_Status", ColumnKind::Categorical, true),
    ("Income_Category", ColumnKind::Categorical, false),
    ("Card_Category", ColumnKind::Categorical, false),
    ("Months_on_book", ColumnKind::Continuous, false),
    ("Total_Relationship_Count", ColumnKind::Continuous, false),
    ("Months_Inactive_12_mon", ColumnKind::Continuous, false),
    ("Contacts_Count_12_mon", ColumnKind::Continuous, false),
    ("Credit_Limit", ColumnKind::Continuous, false),
    ("Total_Revolving_Bal", ColumnKind::Continuous, false),
    ("Avg_Open_To_Buy", ColumnKind::Continuous, false),
    ("Total_Amt_Chng_Q4_Q1", ColumnKind::Continuous, false),
    ("Total_Trans_Amt", ColumnKind::Continuous, false),
    ("Total_Trans_Ct", ColumnKind::Continuous, false),
    ("Total_Ct_Chng_Q4_Q1", ColumnKind::Continuous, false),
    ("Avg_Utilization_Ratio", ColumnKind::Continuous, false),
];
