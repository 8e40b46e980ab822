//! Per-subpopulation metric breakdown over race and sex.

use serde::{Deserialize, Serialize};

use crate::cohort::{Race, Sex};

use super::{auprc, auroc, EvalError};

/// Cases below this count are flagged as too small to read much into.
pub const LOW_N_CASES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCell {
    pub race: Race,
    pub sex: Sex,
    pub n: usize,
    pub cases: usize,
    pub prevalence: f64,
    /// None when the metric is undefined for the cell (e.g. no cases).
    pub auprc: Option<f64>,
    pub auroc: Option<f64>,
    pub low_n: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub cells: Vec<SubgroupCell>,
}

const RACES: [Race; 3] = [Race::Black, Race::White, Race::Other];
const SEXES: [Sex; 2] = [Sex::F, Sex::M];

/// Computes metrics for every race-by-sex cell. Cells where a metric cannot
/// be defined carry `None` instead of failing the whole report.
pub fn subgroup_report(
    scores: &[f64],
    labels: &[bool],
    demographics: &[(Race, Sex)],
) -> Result<SubgroupReport, EvalError> {
    if scores.len() != labels.len() || scores.len() != demographics.len() {
        return Err(EvalError::Input("scores, labels, and demographics differ in length".into()));
    }
    let mut cells = Vec::with_capacity(6);
    for race in RACES {
        for sex in SEXES {
            let idx: Vec<usize> = (0..scores.len())
                .filter(|&i| demographics[i] == (race, sex))
                .collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            let n = idx.len();
            let cases = l.iter().filter(|&&x| x).count();
            cells.push(SubgroupCell {
                race,
                sex,
                n,
                cases,
                prevalence: if n == 0 { 0.0 } else { cases as f64 / n as f64 },
                auprc: auprc(&s, &l).ok(),
                auroc: auroc(&s, &l).ok(),
                low_n: cases < LOW_N_CASES,
            });
        }
    }
    Ok(SubgroupReport { cells })
}
