//! Seeded synthetic datasets with known inference structure, used to check
//! baselines against closed-form expectations.

use rand::Rng;

use crate::data::{ColumnKind, ColumnSpec, Dataset, Value};
use crate::rng;

/// Share of digit-9 rows whose parity label is flipped.
pub const PARITY_NOISE: f64 = 0.3;

/// Columns `digit` (categorical `0`..`9`), `noise` (continuous),
/// `group` (categorical `a`..`c`) and `parity` (`even` / `odd`).
///
/// `parity` is the parity of `digit`, except that rows with digit 9 have
/// it flipped with probability [`PARITY_NOISE`]; the best possible
/// precision is therefore about `1 - PARITY_NOISE / 10`, and perfect
/// precision is reachable by abstaining on digit 9.
pub fn parity(rows: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let cols = vec![
        ColumnSpec::new("digit", ColumnKind::Categorical, true),
        ColumnSpec::new("noise", ColumnKind::Continuous, false),
        ColumnSpec::new("group", ColumnKind::Categorical, true),
        ColumnSpec::new("parity", ColumnKind::Categorical, false),
    ];
    let values = (0..rows)
        .map(|_| {
            let d: u32 = rng.gen_range(0..10);
            let mut odd = d % 2 == 1;
            if d == 9 && rng.gen_bool(PARITY_NOISE) {
                odd = !odd;
            }
            vec![
                Value::cat(&d.to_string()),
                Value::Num(rng.gen_range(-1.0..1.0)),
                Value::cat(["a", "b", "c"][rng.gen_range(0..3)]),
                Value::cat(if odd { "odd" } else { "even" }),
            ]
        })
        .collect();
    Dataset::from_values(cols, values).expect("valid synthetic dataset")
}

/// Columns `digit`, `noise`, `group` as in [`parity`] and `label`, drawn
/// uniformly from `A`..`D` independently of everything else.
pub fn independent_uniform(rows: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let cols = vec![
        ColumnSpec::new("digit", ColumnKind::Categorical, true),
        ColumnSpec::new("noise", ColumnKind::Continuous, false),
        ColumnSpec::new("group", ColumnKind::Categorical, true),
        ColumnSpec::new("label", ColumnKind::Categorical, false),
    ];
    let values = (0..rows)
        .map(|_| {
            vec![
                Value::cat(&rng.gen_range(0..10u32).to_string()),
                Value::Num(rng.gen_range(-1.0..1.0)),
                Value::cat(["a", "b", "c"][rng.gen_range(0..3)]),
                Value::cat(["A", "B", "C", "D"][rng.gen_range(0..4)]),
            ]
        })
        .collect();
    Dataset::from_values(cols, values).expect("valid synthetic dataset")
}

/// Continuous `x`, `y` drawn so that no two rows coincide, and a
/// categorical `label` among 20 values independent of them. Only a model
/// that can look up an exact copy of a row predicts `label` well.
pub fn distinct_rows(rows: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let cols = vec![
        ColumnSpec::new("x", ColumnKind::Continuous, false),
        ColumnSpec::new("y", ColumnKind::Continuous, false),
        ColumnSpec::new("label", ColumnKind::Categorical, false),
    ];
    let values = (0..rows)
        .map(|i| {
            vec![
                Value::Num(i as f64 + rng.gen_range(0.0..0.5)),
                Value::Num(rng.gen_range(-100.0..100.0)),
                Value::cat(&format!("L{:02}", rng.gen_range(0..20))),
            ]
        })
        .collect();
    Dataset::from_values(cols, values).expect("valid synthetic dataset")
}

/// A column whose every value is the same label, next to a few informative
/// ones.
pub fn constant_secret(rows: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let cols = vec![
        ColumnSpec::new("digit", ColumnKind::Categorical, false),
        ColumnSpec::new("noise", ColumnKind::Continuous, false),
        ColumnSpec::new("constant", ColumnKind::Categorical, false),
    ];
    let values = (0..rows)
        .map(|_| {
            vec![
                Value::cat(&rng.gen_range(0..10u32).to_string()),
                Value::Num(rng.gen_range(-1.0..1.0)),
                Value::cat("same"),
            ]
        })
        .collect();
    Dataset::from_values(cols, values).expect("valid synthetic dataset")
}
