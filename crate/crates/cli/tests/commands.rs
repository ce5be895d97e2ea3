mod common;

use std::collections::BTreeSet;

use common::*;
use inferbase::comparison::fixtures::random_targets;
use inferbase::data::{parse_csv, RowId};
use inferbase::synthetic;
use tempfile::TempDir;

fn parity_config(dir: &TempDir, extra: &str) -> std::path::PathBuf {
    let (csv, schema) = write_dataset(dir.path(), "parity", &synthetic::parity(600, 7));
    write(
        dir.path(),
        "parity.toml",
        &format!(
            "dataset = {:?}\nschema = {:?}\nseed = 11\nlearner = {{ c = 1.0 }}\n{extra}",
            csv.file_name().unwrap(),
            schema.file_name().unwrap()
        ),
    )
}

const ALL_CONDITIONS: &str = "[[conditions]]\nsecret = \"*\"\nknown = \"all-but-secret\"\n[[conditions]]\nsecret = \"*\"\nknown = \"pii-only\"\n";

#[test]
fn baseline_summary_has_one_row_per_secret_and_knowledge_set() {
    let dir = TempDir::new().unwrap();
    let cfg = parity_config(&dir, ALL_CONDITIONS);
    let out = run(dir.path(), &["baseline", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_records(&out.stdout);
    // 4 secrets x 2 knowledge sets
    assert_eq!(rows.len(), 8);
    let knowledge: BTreeSet<&str> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(knowledge, ["all-but-secret", "pii-only"].into_iter().collect());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir(&out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 11);
    assert_eq!(report["results"].as_array().unwrap().len(), 8);
    assert_eq!(report["dataset_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn validation_errors_exit_one_with_json() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = write_dataset(dir.path(), "p", &synthetic::parity(50, 1));
    let no_seed = write(
        dir.path(),
        "a.toml",
        &format!("dataset = {:?}\n[[conditions]]\nsecret = \"parity\"\nknown = \"all-but-secret\"\n", csv),
    );
    let out = run(dir.path(), &["baseline", "--config", no_seed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("seed"));
    // --seed satisfies it
    let out = run(dir.path(), &["baseline", "--config", no_seed.to_str().unwrap(), "--seed", "4"]);
    assert!(out.status.success());

    let empty = write(dir.path(), "b.toml", &format!("dataset = {:?}\nseed = 1\n", csv));
    let out = run(dir.path(), &["baseline", "--config", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("conditions"));

    let missing = write(dir.path(), "c.toml", "dataset = \"nope.csv\"\nseed = 1\n");
    assert_eq!(run(dir.path(), &["baseline", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["baseline", "--bogus"]).status.code(), Some(1));
}

#[test]
fn sweep_rows_and_perfect_precision() {
    let dir = TempDir::new().unwrap();
    let cfg = parity_config(
        &dir,
        "thresholds = [0.0, 0.5, 0.9, 0.99]\n[[conditions]]\nsecret = \"parity\"\nknown = \"all-but-secret\"\n[[conditions]]\nsecret = \"noise\"\nknown = \"all-but-secret\"\n",
    );
    let out = run(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_records(&out.stdout);
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .any(|r| r[3].parse::<f64>().ok() == Some(1.0) && r[4].parse::<f64>().unwrap() > 0.0));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir(&out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["skipped"][0]["secret"], "noise");

    let (csv, schema) = write_dataset(dir.path(), "constant", &synthetic::constant_secret(300, 2));
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!(
            "dataset = {csv:?}\nschema = {schema:?}\nseed = 1\nthresholds = [0.0, 0.5, 0.9, 0.99]\n[[conditions]]\nsecret = \"constant\"\nknown = \"all-but-secret\"\n"
        ),
    );
    let out = run(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    let rows = csv_records(&out.stdout);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[3] == "1.0"));
}

fn attack_file(dir: &TempDir, name: &str, lines: &[(u64, String)]) -> std::path::PathBuf {
    let mut text = String::from("target_id,prediction\n");
    for (id, v) in lines {
        text.push_str(&format!("{id},{v}\n"));
    }
    write(dir.path(), name, &text)
}

#[test]
fn compare_oracle_random_and_abstain() {
    let dir = TempDir::new().unwrap();
    let d = synthetic::parity(2000, 7);
    let targets = random_targets(&d, 600, 3);
    let truth = |id: RowId| d.row_by_id(id).unwrap().values[3].to_string();
    let oracle = attack_file(&dir, "oracle.csv", &targets.iter().map(|&id| (id.0, truth(id))).collect::<Vec<_>>());
    let abstain = attack_file(&dir, "abstain.csv", &targets.iter().map(|&id| (id.0, String::new())).collect::<Vec<_>>());
    let bad = write(dir.path(), "bad.csv", "target_id,prediction\n1,odd\n1,even\n");
    let (csv, schema) = write_dataset(dir.path(), "parity", &d);
    let cfg = write(
        dir.path(),
        "cmp.toml",
        &format!("dataset = {csv:?}\nschema = {schema:?}\nseed = 5\n[learner]\nc = 1.0\n[[conditions]]\nsecret = \"parity\"\nknown = \"all-but-secret\"\n"),
    );
    let out = run(
        dir.path(),
        &["compare", "--config", cfg.to_str().unwrap(), "--attack", oracle.to_str().unwrap(), "--attack", abstain.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    let results = report["results"].as_array().unwrap();
    assert_eq!(results[0]["report"]["pi"], 1.0);
    assert_eq!(results[1]["report"]["outcome"], "no_predictions");
    assert!(results[1]["report"]["pi"].is_null());

    // one invalid submission among three
    let out = run(
        dir.path(),
        &[
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--attack",
            oracle.to_str().unwrap(),
            "--attack",
            bad.to_str().unwrap(),
            "--attack",
            abstain.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let report = json(&out);
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    assert!(results[0]["report"].is_object());
    assert!(results[1]["error"].as_str().unwrap().contains("duplicate"));
    assert!(results[2]["report"].is_object());
}

#[test]
fn compare_random_guess_is_near_zero() {
    let dir = TempDir::new().unwrap();
    let d = synthetic::independent_uniform(2000, 3);
    let sub = inferbase::comparison::fixtures::random_guess_attack(
        &d,
        &inferbase::baseline::ConditionKey::new(["digit", "noise", "group"], "label"),
        &random_targets(&d, 600, 1),
        9,
    )
    .unwrap();
    let lines: Vec<(u64, String)> = sub
        .predictions
        .iter()
        .map(|p| match &p.value {
            inferbase::learners::PredictedValue::Label(l) => (p.target_row_id.0, l.clone()),
            _ => unreachable!(),
        })
        .collect();
    let guess = attack_file(&dir, "guess.csv", &lines);
    let (csv, schema) = write_dataset(dir.path(), "uniform", &d);
    let cfg = write(
        dir.path(),
        "cmp.toml",
        &format!(
            "dataset = {csv:?}\nschema = {schema:?}\nseed = 5\n[learner]\nc = 1.0\n[[attacks]]\nfile = {guess:?}\nsecret = \"label\"\nknown = \"all-but-secret\"\n"
        ),
    );
    let out = run(dir.path(), &["compare", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pi = json(&out)["results"][0]["report"]["pi"].as_f64().unwrap();
    assert!(pi.abs() <= 0.1, "{pi}");
}

#[test]
fn replication_rows_and_identity_with_baseline() {
    let dir = TempDir::new().unwrap();
    let (csv, schema) = write_dataset(dir.path(), "rows", &synthetic::distinct_rows(800, 4));
    let cfg = write(
        dir.path(),
        "r.toml",
        &format!(
            "dataset = {csv:?}\nschema = {schema:?}\nseed = 2\nfractions = [0.0, 0.1, 0.5, 1.0]\nlearners = [{{ kind = \"nearest_neighbor\" }}, {{ kind = \"majority\" }}]\n[[conditions]]\nsecret = \"label\"\nknown = \"all-but-secret\"\n"
        ),
    );
    let out = run(dir.path(), &["replicate", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_records(&out.stdout);
    assert_eq!(rows.len(), 8);
    let nn_full = rows.iter().find(|r| &r[0] == "1.0" && &r[3] == "nearest_neighbor").unwrap();
    assert_eq!(&nn_full[7], "true");

    let base_cfg = write(
        dir.path(),
        "b.toml",
        &format!(
            "dataset = {csv:?}\nschema = {schema:?}\nseed = 2\n[learner]\nkind = \"nearest_neighbor\"\n[[conditions]]\nsecret = \"label\"\nknown = \"all-but-secret\"\n"
        ),
    );
    let base = run(dir.path(), &["baseline", "--config", base_cfg.to_str().unwrap(), "--format", "csv"]);
    let base_rows = csv_records(&base.stdout);
    let nn_zero = rows.iter().find(|r| &r[0] == "0.0" && &r[3] == "nearest_neighbor").unwrap();
    assert_eq!(&nn_zero[4], &base_rows[0][4]);
}

#[test]
fn roc2pr_tables() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["roc2pr", "--bundled"]);
    assert!(out.status.success());
    let tables = json(&out)["results"].as_array().unwrap().clone();
    assert_eq!(tables.len(), 2);
    for t in &tables {
        assert_eq!(t["rows"].as_array().unwrap().len(), 49);
    }

    let one = write(dir.path(), "one.csv", "fpr,tpr\n0.2,0.6\n");
    let out = run(dir.path(), &["roc2pr", "--roc", one.to_str().unwrap(), "--skew", "1:1", "--format", "csv"]);
    let rows = csv_records(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "one");
    assert!((rows[0][5].parse::<f64>().unwrap() - 0.75).abs() < 1e-12);

    let bad = write(dir.path(), "bad.csv", "fpr,tpr\n0.1,0.5\n0.2,0.4\n");
    let out = run(dir.path(), &["roc2pr", "--roc", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
    let out = run(dir.path(), &["roc2pr", "--skew", "1-2", "--bundled"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical_and_never_overwrite() {
    let dir = TempDir::new().unwrap();
    let cfg = parity_config(&dir, "mode = \"complete\"\ncomplete_budget = 20\n[[conditions]]\nsecret = \"parity\"\nknown = \"all-but-secret\"\n");
    let a = run(dir.path(), &["baseline", "--config", cfg.to_str().unwrap()]);
    let b = run(dir.path(), &["baseline", "--config", cfg.to_str().unwrap()]);
    assert!(a.status.success() && b.status.success());
    let (da, db) = (run_dir(&a), run_dir(&b));
    assert_ne!(da, db);
    assert!(db.to_string_lossy().ends_with("-2"));
    for f in ["report.json", "summary.csv", "config.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f}");
    }
    // the embedded config reproduces the report
    let c = run(dir.path(), &["baseline", "--config", da.join("config.json").to_str().unwrap()]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    assert_eq!(std::fs::read(da.join("report.json")).unwrap(), std::fs::read(run_dir(&c).join("report.json")).unwrap());
}

#[test]
fn csv_outputs_are_rectangular() {
    let dir = TempDir::new().unwrap();
    let cfg = parity_config(&dir, ALL_CONDITIONS);
    for cmd in ["baseline", "sweep", "replicate"] {
        let out = run(dir.path(), &[cmd, "--config", cfg.to_str().unwrap(), "--format", "csv"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let mut r = csv::Reader::from_reader(out.stdout.as_slice());
        let width = r.headers().unwrap().len();
        let records: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert!(!records.is_empty(), "{cmd}");
        assert!(records.iter().all(|x| x.len() == width), "{cmd}");
    }
    let out = run(dir.path(), &["roc2pr", "--bundled", "--format", "csv"]);
    let (d, _) = parse_csv(out.stdout.as_slice(), None).unwrap();
    assert_eq!(d.len(), 98);
}
