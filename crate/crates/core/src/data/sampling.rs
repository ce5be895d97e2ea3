use std::collections::{BTreeSet, HashSet};

use rand::seq::index;

use super::dataset::{Dataset, Row, RowId};
use super::{DataError, Result};
use crate::rng;

/// Splits `d` into `(members, non_members)` by drawing `non_member_count`
/// rows uniformly without replacement. Both halves keep the original row
/// order and ids.
pub fn split_members(d: &Dataset, non_member_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = d.len();
    if non_member_count == 0 || non_member_count >= n {
        return Err(DataError::CountOutOfRange {
            count: non_member_count,
            rows: n,
        });
    }
    let mut rng = rng::seeded(seed);
    let picked: HashSet<usize> = index::sample(&mut rng, n, non_member_count).into_iter().collect();
    let (mut members, mut non_members) = (Vec::with_capacity(n - non_member_count), Vec::with_capacity(non_member_count));
    for (i, row) in d.rows().iter().enumerate() {
        if picked.contains(&i) {
            non_members.push(row.clone());
        } else {
            members.push(row.clone());
        }
    }
    Ok((d.with_rows(members), d.with_rows(non_members)))
}

/// Splits `d` into rows whose id is not in `ids` and rows whose id is.
/// Unknown ids are reported as an error.
pub fn split_by_ids(d: &Dataset, ids: &BTreeSet<RowId>) -> Result<(Dataset, Dataset)> {
    let mut found = 0;
    let (mut rest, mut taken) = (Vec::new(), Vec::new());
    for row in d.rows() {
        if ids.contains(&row.id) {
            found += 1;
            taken.push(row.clone());
        } else {
            rest.push(row.clone());
        }
    }
    if found != ids.len() {
        let present: HashSet<RowId> = d.rows().iter().map(|r| r.id).collect();
        let missing = ids.iter().find(|id| !present.contains(id)).copied().unwrap_or(RowId(0));
        return Err(DataError::Invalid(format!("row id {missing} not in dataset")));
    }
    Ok((d.with_rows(rest), d.with_rows(taken)))
}

/// Appends one duplicate of each of `floor(fraction * n)` distinct rows
/// chosen uniformly. Duplicates get fresh ids above the current maximum
/// and remember their source in `duplicate_of`.
pub fn replicate(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DataError::FractionOutOfRange(fraction));
    }
    let n = d.len();
    let k = ((fraction * n as f64).floor() as usize).min(n);
    if k == 0 {
        return Ok(d.clone());
    }
    let mut rng = rng::seeded(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut next_id = d.rows().iter().map(|r| r.id.0).max().map_or(0, |m| m + 1);
    let mut rows = d.rows().to_vec();
    rows.reserve(k);
    for i in chosen {
        let src = &d.rows()[i];
        rows.push(Row {
            id: RowId(next_id),
            duplicate_of: Some(src.duplicate_of.unwrap_or(src.id)),
            values: src.values.clone(),
        });
        next_id += 1;
    }
    Ok(d.with_rows(rows))
}

/// Removes replicas: keeps the first row for every (lineage root id,
/// values) pair. Inverts [`replicate`].
pub fn deduplicate(d: &Dataset) -> Dataset {
    let mut kept: Vec<Row> = Vec::with_capacity(d.len());
    let mut roots: std::collections::HashMap<RowId, Vec<usize>> = Default::default();
    for row in d.rows() {
        let root = row.duplicate_of.unwrap_or(row.id);
        let slot = roots.entry(root).or_default();
        if slot.iter().any(|&k| {
            kept[k].values.len() == row.values.len()
                && kept[k].values.iter().zip(&row.values).all(|(a, b)| a.same(b))
        }) {
            continue;
        }
        slot.push(kept.len());
        kept.push(row.clone());
    }
    d.with_rows(kept)
}
