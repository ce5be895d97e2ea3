use inferbase::baseline::{
    baseline_against, compute_baseline, replication_study, threshold_sweep, ConditionKey, LearnerConfig, LearnerKind, Mode,
    RunSettings, SweepContext,
};
use inferbase::data::split_members;
use inferbase::synthetic;

const ROWS: usize = 2000;

fn parity_condition() -> ConditionKey {
    ConditionKey::new(["digit", "noise", "group"], "parity")
}

fn uniform_condition() -> ConditionKey {
    ConditionKey::new(["digit", "noise", "group"], "label")
}

fn learner(kind: LearnerKind) -> LearnerConfig {
    LearnerConfig {
        kind,
        c: 1.0,
        ..LearnerConfig::default()
    }
}

#[test]
fn parity_relaxed_and_complete_agree() {
    let d = synthetic::parity(ROWS, 7);
    let cfg = learner(LearnerKind::Auto);
    let relaxed = compute_baseline(&d, &parity_condition(), &cfg, &RunSettings::default(), 11).unwrap();
    assert!(relaxed.p_base >= 0.95, "relaxed {}", relaxed.p_base);
    assert_eq!(relaxed.n_targets, 600);
    let complete = compute_baseline(
        &d,
        &parity_condition(),
        &cfg,
        &RunSettings {
            mode: Mode::Complete,
            complete_budget: 200,
            ..RunSettings::default()
        },
        11,
    )
    .unwrap();
    assert_eq!(complete.n_targets, 200);
    assert!((complete.p_base - relaxed.p_base).abs() <= 0.05, "{} vs {}", complete.p_base, relaxed.p_base);
}

/// Labels are drawn uniformly from four values independently of the known
/// attributes, so the modal frequency of the generating distribution is
/// exactly 1/4 and no analysis can do better in expectation.
#[test]
fn uniform_secret_matches_modal_frequency() {
    let d = synthetic::independent_uniform(ROWS, 3);
    for kind in [LearnerKind::Majority, LearnerKind::Auto] {
        let r = compute_baseline(&d, &uniform_condition(), &learner(kind), &RunSettings::default(), 5).unwrap();
        assert!((r.p_base - 0.25).abs() <= 0.03, "{kind:?}: {}", r.p_base);
    }
}

#[test]
fn relaxed_equals_baseline_against_the_same_split() {
    let d = synthetic::parity(500, 2);
    let cfg = learner(LearnerKind::Auto);
    let a = compute_baseline(&d, &parity_condition(), &cfg, &RunSettings::default(), 9).unwrap();
    let (m, n) = split_members(&d, 150, 9).unwrap();
    let b = baseline_against(&m, &n, &parity_condition(), &cfg, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn best_of_at_least_majority_on_targets_for_parity() {
    let d = synthetic::parity(ROWS, 8);
    let auto = compute_baseline(&d, &parity_condition(), &learner(LearnerKind::Auto), &RunSettings::default(), 1).unwrap();
    let maj = compute_baseline(&d, &parity_condition(), &learner(LearnerKind::Majority), &RunSettings::default(), 1).unwrap();
    assert!(auto.p_base >= maj.p_base);
}

#[test]
fn sweep_reaches_perfect_precision_on_parity() {
    let d = synthetic::parity(ROWS, 7);
    let ctx = SweepContext::relaxed(&d, &parity_condition(), &learner(LearnerKind::Auto), 600, 11).unwrap();
    let pts = threshold_sweep(&ctx, &[0.0, 0.5, 0.9, 0.99]).unwrap();
    assert_eq!(pts.len(), 4);
    assert!(pts.iter().any(|p| p.p_base == Some(1.0) && p.prediction_rate > 0.0), "{pts:?}");
    // prediction rate never increases with the threshold
    for w in pts.windows(2) {
        assert!(w[1].prediction_rate <= w[0].prediction_rate);
    }
}

#[test]
fn sweep_on_constant_secret_is_perfect_everywhere() {
    let d = synthetic::constant_secret(300, 1);
    let c = ConditionKey::new(["digit", "noise"], "constant");
    let ctx = SweepContext::relaxed(&d, &c, &LearnerConfig::default(), 90, 1).unwrap();
    for p in threshold_sweep(&ctx, &[0.0, 0.5, 0.9, 0.99]).unwrap() {
        assert_eq!(p.p_base, Some(1.0));
    }
}

#[test]
fn replication_nearest_neighbor_finds_duplicates() {
    let d = synthetic::distinct_rows(ROWS, 4);
    let c = ConditionKey::new(["x", "y"], "label");
    let report = replication_study(&d, &[0.0, 1.0], &[c], &[learner(LearnerKind::NearestNeighbor)], 600, 2).unwrap();
    assert_eq!(report.rows.len(), 2);
    let full = &report.rows[1];
    assert!(full.p_base >= 0.99, "{}", full.p_base);
    assert!(full.flagged);
    assert!(!report.rows[0].flagged);
    assert_eq!(report.rows[0].delta, 0.0);
}

#[test]
fn replication_barely_moves_regularised_logistic() {
    let d = synthetic::independent_uniform(ROWS, 3);
    let report = replication_study(
        &d,
        &[0.0, 0.1, 0.5, 1.0],
        &[uniform_condition()],
        &[learner(LearnerKind::Logistic)],
        600,
        5,
    )
    .unwrap();
    assert_eq!(report.rows.len(), 4);
    let last = report.rows.last().unwrap();
    assert!(last.delta.abs() <= 0.05, "{}", last.delta);
}

#[test]
fn replication_fraction_zero_is_the_relaxed_baseline() {
    let d = synthetic::parity(600, 3);
    let cfg = learner(LearnerKind::Auto);
    let report = replication_study(&d, &[0.0], &[parity_condition()], &[cfg], 180, 4).unwrap();
    let b = compute_baseline(
        &d,
        &parity_condition(),
        &cfg,
        &RunSettings {
            non_member_count: Some(180),
            ..RunSettings::default()
        },
        4,
    )
    .unwrap();
    assert_eq!(report.rows[0].p_base, b.p_base);
}

#[test]
fn runs_are_deterministic() {
    let d = synthetic::parity(800, 5);
    let cfg = learner(LearnerKind::Auto);
    let run = RunSettings {
        mode: Mode::Complete,
        complete_budget: 40,
        ..RunSettings::default()
    };
    let a = compute_baseline(&d, &parity_condition(), &cfg, &run, 3).unwrap();
    let b = compute_baseline(&d, &parity_condition(), &cfg, &run, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
