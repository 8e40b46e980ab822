//! Stratified k-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cohort::{CohortTable, PatientRecord};
use crate::mix_seed;

use super::EvalError;

/// Splits into k (train, validation) pairs. Each stratum is shuffled once
/// and dealt round-robin, so per-fold positive counts stay within one of
/// proportional. Validation folds are disjoint and cover the table.
pub fn stratified_kfold(
    table: &CohortTable,
    k: usize,
    seed: u64,
    positive: impl Fn(&PatientRecord) -> bool,
) -> Result<Vec<(CohortTable, CohortTable)>, EvalError> {
    let n = table.len();
    if k < 2 {
        return Err(EvalError::Fold(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(EvalError::Fold(format!("cannot make {k} folds from {n} rows")));
    }

    let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, row) in table.rows.iter().enumerate() {
        strata[if positive(row) { 0 } else { 1 }].push(i);
    }
    let mut assignment = vec![0usize; n];
    // The deal cursor carries over between strata so overall fold sizes
    // stay balanced even when a stratum is smaller than k.
    let mut cursor = 0usize;
    for (s, stratum) in strata.iter().enumerate() {
        let mut shuffled = stratum.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[4, s as u64]));
        shuffled.shuffle(&mut rng);
        for &row in &shuffled {
            assignment[row] = cursor % k;
            cursor += 1;
        }
    }

    let folds = (0..k)
        .map(|fold| {
            let mut train = Vec::new();
            let mut validation = Vec::new();
            for (row, &assigned) in assignment.iter().enumerate() {
                if assigned == fold {
                    validation.push(row);
                } else {
                    train.push(row);
                }
            }
            (table.select(&train), table.select(&validation))
        })
        .collect();
    Ok(folds)
}
