//! Gradient-free tuning of a program's numeric constants.
//!
//! A (1+1) evolution strategy maximizes training AUPRC over the vector of
//! numeric literals. The objective is piecewise constant (thresholded
//! counts), so a step-tolerant direct search fits: candidates tying the
//! incumbent are accepted, letting the search drift across plateaus, and
//! the mutation scale adapts by the 1/5th-success rule.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::CohortTable;
use crate::dsl::{apply_params, evaluate, extract_params, Program};
use crate::eval::auprc;
use crate::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    /// Total objective evaluations, including the starting point.
    pub budget: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> TuneConfig {
        TuneConfig { budget: 1000, seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid tuning config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub values: Vec<f64>,
    pub score: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub original_values: Vec<f64>,
    pub tuned_values: Vec<f64>,
    pub original_score: f64,
    pub tuned_score: f64,
    pub evaluations_used: usize,
    pub trace: Vec<TraceEntry>,
    pub note: Option<String>,
}

/// Elitist (1+1)-ES: Gaussian mutation per coordinate, initial scale
/// max(0.5 * |x0_i|, 0.1), acceptance on ties, multiplicative step
/// adaptation. Objective failures should be encoded as -inf (NaN is
/// treated as a rejection). Never returns a point scoring below x0.
pub fn optimize(
    mut objective: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    cfg: &TuneConfig,
) -> Result<TuneResult, TuneError> {
    if cfg.budget < 1 {
        return Err(TuneError::Config("budget must be at least 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(TuneError::Input("starting point contains non-finite values".into()));
    }

    let mut sigma: Vec<f64> = x0.iter().map(|v| (0.5 * v.abs()).max(0.1)).collect();
    let mut x = x0.to_vec();
    let mut fx = objective(&x);
    let original_score = fx;
    let mut evaluations = 1usize;
    let mut trace = vec![TraceEntry {
        evaluation: 1,
        values: x.clone(),
        score: fx,
        accepted: true,
    }];

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[7]));
    while evaluations < cfg.budget {
        let candidate: Vec<f64> = x
            .iter()
            .zip(&sigma)
            .map(|(xi, si)| {
                let z: f64 = rng.sample(StandardNormal);
                xi + si * z
            })
            .collect();
        let fc = objective(&candidate);
        evaluations += 1;
        let accepted = fc >= fx;
        let factor = if accepted {
            (1.0f64 / 3.0).exp()
        } else {
            (-1.0f64 / 12.0).exp()
        };
        for s in &mut sigma {
            *s *= factor;
        }
        trace.push(TraceEntry {
            evaluation: evaluations,
            values: candidate.clone(),
            score: fc,
            accepted,
        });
        if accepted {
            x = candidate;
            fx = fc;
        }
    }

    Ok(TuneResult {
        original_values: x0.to_vec(),
        tuned_values: x,
        original_score,
        tuned_score: fx,
        evaluations_used: evaluations,
        trace,
        note: None,
    })
}

/// Tunes the numeric literals of `program` to maximize AUPRC on the
/// training table. Structure and size are untouched; candidate vectors
/// whose programs fail at runtime score -inf.
pub fn tune_program(
    program: &Program,
    train: &CohortTable,
    labels: &[bool],
    cfg: &TuneConfig,
) -> Result<(Program, TuneResult), TuneError> {
    if labels.len() != train.len() {
        return Err(TuneError::Input(format!(
            "{} labels for {} rows",
            labels.len(),
            train.len()
        )));
    }
    let slots = extract_params(program);
    let x0 = slots.values();
    if x0.is_empty() {
        let score = score_program(program, train, labels);
        return Ok((
            program.clone(),
            TuneResult {
                original_values: Vec::new(),
                tuned_values: Vec::new(),
                original_score: score,
                tuned_score: score,
                evaluations_used: 1,
                trace: Vec::new(),
                note: Some("program has no numeric literals to tune".into()),
            },
        ));
    }

    let objective = |values: &[f64]| -> f64 {
        match apply_params(program, values) {
            Ok(candidate) => score_program(&candidate, train, labels),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let result = optimize(objective, &x0, cfg)?;
    let tuned = apply_params(program, &result.tuned_values)
        .map_err(|e| TuneError::Input(e.to_string()))?;
    Ok((tuned, result))
}

fn score_program(program: &Program, train: &CohortTable, labels: &[bool]) -> f64 {
    let Ok(probs) = evaluate(program, train) else {
        return f64::NEG_INFINITY;
    };
    auprc(&probs, labels).unwrap_or(f64::NEG_INFINITY)
}

/// Full search trace as CSV: evaluation index, score, accepted flag, and
/// the candidate vector (semicolon-separated).
pub fn save_trace_csv(result: &TuneResult, path: &Path) -> std::io::Result<()> {
    let mut out = String::from("evaluation,score,accepted,values\n");
    for t in &result.trace {
        let values: Vec<String> = t.values.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            t.evaluation,
            t.score,
            t.accepted,
            values.join(";")
        ));
    }
    fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, GeneratorParams, LabelSource, Phenotype};
    use crate::dsl::{parse, render, size};

    #[test]
    fn sphere_objective_reaches_the_optimum() {
        let objective = |x: &[f64]| -> f64 { -x.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>() };
        let cfg = TuneConfig { budget: 1000, seed: 4 };
        let r = optimize(objective, &[0.0, 0.0, 0.0], &cfg).unwrap();
        let dist: f64 = r
            .tuned_values
            .iter()
            .map(|v| (v - 3.0).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 0.05, "distance {dist}, values {:?}", r.tuned_values);
        assert!(r.tuned_score >= r.original_score);
        assert_eq!(r.evaluations_used, 1000);
    }

    #[test]
    fn budget_one_returns_the_start_unchanged() {
        let cfg = TuneConfig { budget: 1, seed: 0 };
        let r = optimize(|x| -x[0].abs(), &[5.0], &cfg).unwrap();
        assert_eq!(r.tuned_values, vec![5.0]);
        assert_eq!(r.tuned_score, r.original_score);
        assert_eq!(r.evaluations_used, 1);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn plateau_objective_is_escaped_on_every_seed() {
        // Piecewise-constant step: 1 on [2, 8], else 0. The start sits on
        // the zero plateau; tie acceptance lets the walk drift until it
        // finds the step. The optimum value 1.0 is known exhaustively.
        let objective = |x: &[f64]| -> f64 {
            if x[0] >= 2.0 && x[0] <= 8.0 {
                1.0
            } else {
                0.0
            }
        };
        for seed in 0..10 {
            let cfg = TuneConfig { budget: 1000, seed };
            let r = optimize(objective, &[0.0], &cfg).unwrap();
            assert_eq!(r.tuned_score, 1.0, "seed {seed} stuck at {:?}", r.tuned_values);
        }
    }

    #[test]
    fn optimization_is_seed_deterministic() {
        let objective = |x: &[f64]| -> f64 { -(x[0] - 1.0).powi(2) };
        let cfg = TuneConfig { budget: 200, seed: 9 };
        let a = optimize(objective, &[4.0], &cfg).unwrap();
        let b = optimize(objective, &[4.0], &cfg).unwrap();
        assert_eq!(a, b);
        let c = optimize(objective, &[4.0], &TuneConfig { budget: 200, seed: 10 }).unwrap();
        assert_ne!(a.tuned_values, c.tuned_values);
    }

    #[test]
    fn nan_candidates_are_rejected() {
        let objective = |x: &[f64]| -> f64 {
            if x[0] > 0.5 {
                f64::NAN
            } else {
                x[0]
            }
        };
        let cfg = TuneConfig { budget: 300, seed: 2 };
        let r = optimize(objective, &[0.0], &cfg).unwrap();
        assert!(r.tuned_score <= 0.5 && r.tuned_score.is_finite());
    }

    fn atrh_fixture() -> (CohortTable, Vec<bool>) {
        let params = GeneratorParams { n: 400, seed: 21, ..GeneratorParams::default() };
        let table = generate_cohort(&params).unwrap();
        let labels = table.labels(Phenotype::Atrh, LabelSource::Heuristic);
        (table, labels)
    }

    #[test]
    fn misparameterized_heuristic_recovers_performance() {
        let (table, labels) = atrh_fixture();
        let source = "phenotype predict_hypertension {\n    let p = 0.0;\n    if (high_BP_during_htn_meds_3 >= 5) {\n        p = 1.0;\n    }\n    if (sum_enc_during_htn_meds_4_plus >= 5) {\n        p = 1.0;\n    }\n    return p;\n}";
        let program = parse(source, &table.schema).unwrap();
        let cfg = TuneConfig { budget: 1000, seed: 3 };
        let (tuned, result) = tune_program(&program, &table, &labels, &cfg).unwrap();

        assert!(
            result.tuned_score >= result.original_score + 0.1,
            "no recovery: {} -> {}",
            result.original_score,
            result.tuned_score
        );
        assert_eq!(size(&tuned), size(&program), "tuning must not change size");
        // Only numeric literals may differ in the rendering.
        let strip_numbers = |s: &str| -> String {
            s.chars()
                .filter(|c| !c.is_ascii_digit() && *c != '.' && *c != '-')
                .collect()
        };
        assert_eq!(strip_numbers(&render(&tuned)), strip_numbers(&render(&program)));
    }

    #[test]
    fn already_perfect_program_stays_perfect() {
        let (table, labels) = atrh_fixture();
        let source = "phenotype predict_hypertension {\n    let p = 0.0;\n    if (high_BP_during_htn_meds_3 >= 2) {\n        p = 1.0;\n    }\n    if (sum_enc_during_htn_meds_4_plus >= 2) {\n        p = 1.0;\n    }\n    return p;\n}";
        let program = parse(source, &table.schema).unwrap();
        let cfg = TuneConfig { budget: 200, seed: 6 };
        let (_, result) = tune_program(&program, &table, &labels, &cfg).unwrap();
        assert_eq!(result.original_score, 1.0);
        assert_eq!(result.tuned_score, 1.0);
    }

    #[test]
    fn literal_free_program_is_identity() {
        let (table, labels) = atrh_fixture();
        let program = parse("phenotype p { return high_bp_n; }", &table.schema).unwrap();
        let cfg = TuneConfig::default();
        let (tuned, result) = tune_program(&program, &table, &labels, &cfg).unwrap();
        assert_eq!(tuned, program);
        assert!(result.note.is_some());
        assert_eq!(result.evaluations_used, 1);
        assert_eq!(result.tuned_score, result.original_score);
    }

    #[test]
    fn trace_csv_round_trip() {
        let cfg = TuneConfig { budget: 5, seed: 1 };
        let r = optimize(|x| -x[0] * x[0], &[1.0], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        save_trace_csv(&r, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("evaluation,score,accepted,values\n"));
    }
}
