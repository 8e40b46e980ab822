//! Stratified holdout split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mix_seed;

use super::{CohortError, CohortTable, PatientRecord};

/// Splits into (train, test) with `fraction` of rows in train, stratified on
/// the given positive-label selector. Deterministic per seed; per-stratum
/// train counts are apportioned by largest remainder, so each differs from
/// exact proportionality by less than one row.
pub fn split_holdout(
    table: &CohortTable,
    fraction: f64,
    seed: u64,
    positive: impl Fn(&PatientRecord) -> bool,
) -> Result<(CohortTable, CohortTable), CohortError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CohortError::Config(format!(
            "holdout fraction must be strictly between 0 and 1, got {fraction}"
        )));
    }
    let n = table.len();
    let total_train = (n as f64 * fraction).round() as usize;
    if total_train == 0 || total_train == n {
        return Err(CohortError::Stratification(format!(
            "a {fraction} split of {n} rows would leave one partition empty"
        )));
    }

    let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, row) in table.rows.iter().enumerate() {
        strata[if positive(row) { 0 } else { 1 }].push(i);
    }

    // Hamilton apportionment of the train quota across strata.
    let shares: Vec<f64> = strata
        .iter()
        .map(|s| total_train as f64 * s.len() as f64 / n as f64)
        .collect();
    let mut quotas: Vec<usize> = shares.iter().map(|&s| s.floor() as usize).collect();
    let mut leftover = total_train - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        if quotas[i] < strata[i].len() {
            quotas[i] += 1;
            leftover -= 1;
        }
    }

    let mut train_idx = Vec::with_capacity(total_train);
    let mut test_idx = Vec::with_capacity(n - total_train);
    for (s, stratum) in strata.iter().enumerate() {
        let mut shuffled = stratum.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[2, s as u64]));
        shuffled.shuffle(&mut rng);
        train_idx.extend_from_slice(&shuffled[..quotas[s]]);
        test_idx.extend_from_slice(&shuffled[quotas[s]..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((table.select(&train_idx), table.select(&test_idx)))
}
