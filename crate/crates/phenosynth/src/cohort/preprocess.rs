//! Feature cleanup before any modeling: median imputation, then removal of
//! near-constant and near-empty columns.
//!
//! Imputation happens first and the variance/sparsity filters run on the
//! imputed values, which makes the operation idempotent: a second pass sees
//! no missing cells and identical column statistics.

use serde::{Deserialize, Serialize};

use super::{CohortError, CohortTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Columns with population variance below this are dropped.
    pub variance_threshold: f64,
    /// Columns with a nonzero fraction below this are dropped.
    pub nonzero_fraction_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { variance_threshold: 0.05, nonzero_fraction_threshold: 0.05 }
    }
}

pub fn preprocess(table: &CohortTable, cfg: &PreprocessConfig) -> Result<CohortTable, CohortError> {
    if table.is_empty() {
        return Err(CohortError::Schema("cannot preprocess an empty table".into()));
    }
    let n = table.len() as f64;
    let mut out = table.clone();

    for col in 0..out.schema.len() {
        let mut present: Vec<f64> = out.rows.iter().filter_map(|r| r.values[col]).collect();
        if present.is_empty() {
            // A fully missing column has no median; it is removed below
            // (zero nonzero fraction) regardless of the fill value.
            for row in &mut out.rows {
                row.values[col] = Some(0.0);
            }
            continue;
        }
        present.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if present.len() % 2 == 1 {
            present[present.len() / 2]
        } else {
            let hi = present.len() / 2;
            (present[hi - 1] + present[hi]) / 2.0
        };
        for row in &mut out.rows {
            if row.values[col].is_none() {
                row.values[col] = Some(median);
            }
        }
    }

    let keep: Vec<usize> = (0..out.schema.len())
        .filter(|&col| {
            let values: Vec<f64> = out.rows.iter().map(|r| r.values[col].unwrap()).collect();
            let mean = values.iter().sum::<f64>() / n;
            let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let nonzero = values.iter().filter(|&&v| v != 0.0).count() as f64 / n;
            variance >= cfg.variance_threshold && nonzero >= cfg.nonzero_fraction_threshold
        })
        .collect();
    if keep.is_empty() {
        return Err(CohortError::DegenerateTable);
    }
    Ok(out.project_features(&keep))
}
