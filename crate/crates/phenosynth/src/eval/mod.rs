//! Scoring and statistics for candidate phenotype programs.
//!
//! Ranking metrics ([`auprc`], [`auroc`]) treat scores as a continuous
//! risk ordering; [`confusion_rates`] thresholds them. Uncertainty comes
//! from percentile [`bootstrap_ci`], cross-validation splits come from
//! [`stratified_kfold`], and group comparisons use Mann-Whitney tests with
//! Holm correction ([`mwu_holm`]). [`subgroup_report`] slices performance
//! by race and sex cells.

mod bootstrap;
mod folds;
mod rank;
mod stats;
mod subgroup;

pub use bootstrap::{bootstrap_ci, BootstrapCi};
pub use folds::stratified_kfold;
pub use rank::{auprc, auroc, confusion_rates};
pub use stats::{holm_adjust, mann_whitney_p, mwu_holm, Comparison, SignificanceTier};
pub use subgroup::{subgroup_report, SubgroupCell, SubgroupReport, LOW_N_CASES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    /// The requested metric has no defined value on this sample.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("invalid fold request: {0}")]
    Fold(String),
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Point metrics for one scored sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auprc: f64,
    pub auroc: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub n: usize,
    pub n_positive: usize,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport, EvalError> {
        let auprc = auprc(scores, labels)?;
        let auroc = auroc(scores, labels)?;
        let (fp_rate, fn_rate) = confusion_rates(scores, labels, threshold)?;
        Ok(MetricsReport {
            auprc,
            auroc,
            fp_rate,
            fn_rate,
            n: labels.len(),
            n_positive: labels.iter().filter(|&&l| l).count(),
        })
    }
}

/// Shared evaluation settings: how to split, how often to repeat, and how
/// to report uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub folds: usize,
    pub seeds: usize,
    pub train_fraction: f64,
    pub stratified: bool,
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
}

impl Default for EvalProtocol {
    fn default() -> EvalProtocol {
        EvalProtocol {
            folds: 5,
            seeds: 10,
            train_fraction: 0.75,
            stratified: true,
            ci_level: 0.90,
            bootstrap_resamples: 1000,
        }
    }
}
