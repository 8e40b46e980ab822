//! Zero-shot synthesis and the synthesize-execute-debug-instruct loop.
//!
//! A run makes one synthesis call and, in SEDI mode, up to
//! `max_iterations` refinement calls. Each response is extracted, parsed,
//! and executed on the training split. A failed candidate triggers a
//! debug prompt with the error message; a successful one triggers an
//! instruct prompt with training metrics and sampled false-positive and
//! false-negative patients. Every candidate is retained, and the best by
//! training AUPRC is selected at the end. A run always yields a usable
//! predictor: if no candidate survives, the fallback is a constant equal
//! to the training prevalence.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::CohortTable;
use crate::dsl::{evaluate, run_source, size, stats, EvalOutcome, Program};
use crate::eval::{EvalError, MetricsReport};
use crate::llm::{extract_program, ChatClient, ChatTranscript, LlmError};
use crate::prompt::{
    build_debug, build_initial, build_instruct, format_patient_example, FeedbackBundle,
    PromptError, PromptSpec,
};
use crate::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    Sedi,
}

impl Strategy {
    pub fn key(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero_shot",
            Strategy::Sedi => "sedi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SediConfig {
    /// Refinement rounds after the initial synthesis call.
    pub max_iterations: usize,
    pub fp_sample_count: usize,
    pub fn_sample_count: usize,
    /// Hard cap on examples shown across the whole run.
    pub example_budget: usize,
    pub seed: u64,
    /// Probability cutoff separating predicted positives from negatives.
    pub threshold: f64,
    /// Extra randomly chosen features added to example context.
    pub context_feature_count: usize,
}

impl Default for SediConfig {
    fn default() -> SediConfig {
        SediConfig {
            max_iterations: 10,
            fp_sample_count: 10,
            fn_sample_count: 10,
            example_budget: 200,
            seed: 0,
            threshold: 0.5,
            context_feature_count: 5,
        }
    }
}

impl SediConfig {
    pub fn validate(&self) -> Result<(), SediError> {
        if self.fp_sample_count > 10 || self.fn_sample_count > 10 {
            return Err(SediError::Config(format!(
                "at most 10 FP and 10 FN examples per iteration, got {} and {}",
                self.fp_sample_count, self.fn_sample_count
            )));
        }
        if self.max_iterations * (self.fp_sample_count + self.fn_sample_count) > self.example_budget
        {
            return Err(SediError::Config(format!(
                "{} iterations x {} examples exceeds the example budget of {}",
                self.max_iterations,
                self.fp_sample_count + self.fn_sample_count,
                self.example_budget
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SediError::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SediError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("labels do not match the table: {0}")]
    LabelMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What one model call produced after extraction, parsing, and execution.
#[derive(Clone, Debug, PartialEq)]
pub enum IterationOutcome {
    Failure {
        message: String,
    },
    Success {
        program: Program,
        metrics: MetricsReport,
        fp_sampled: Vec<String>,
        fn_sampled: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based position in the call sequence.
    pub index: usize,
    /// The user prompt that elicited this response.
    pub prompt: String,
    pub response: String,
    pub outcome: IterationOutcome,
}

impl IterationRecord {
    pub fn success(&self) -> Option<(&Program, &MetricsReport)> {
        match &self.outcome {
            IterationOutcome::Success { program, metrics, .. } => Some((program, metrics)),
            IterationOutcome::Failure { .. } => None,
        }
    }
}

/// A runnable model: either a synthesized program or a constant score.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictor {
    Program(Program),
    Constant(f64),
}

impl Predictor {
    pub fn predict(&self, table: &CohortTable) -> Result<Vec<f64>, String> {
        match self {
            Predictor::Program(p) => evaluate(p, table).map_err(|e| e.to_string()),
            Predictor::Constant(c) => Ok(vec![*c; table.len()]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SediRun {
    pub strategy: Strategy,
    pub config: SediConfig,
    pub transcript: ChatTranscript,
    pub records: Vec<IterationRecord>,
    /// 1-based index of the selected record, or None when every call
    /// failed and the fallback constant stands in.
    pub selected_best: Option<usize>,
    /// Training prevalence, used as the constant fallback score.
    pub fallback: f64,
    pub diagnostic: Option<String>,
    /// Examples shown across all instruct prompts.
    pub examples_shown: usize,
}

impl SediRun {
    pub fn selected_program(&self) -> Option<&Program> {
        let idx = self.selected_best?;
        self.records[idx - 1].success().map(|(p, _)| p)
    }

    pub fn selected_metrics(&self) -> Option<&MetricsReport> {
        let idx = self.selected_best?;
        self.records[idx - 1].success().map(|(_, m)| m)
    }

    pub fn predictor(&self) -> Predictor {
        match self.selected_program() {
            Some(p) => Predictor::Program(p.clone()),
            None => Predictor::Constant(self.fallback),
        }
    }
}

/// Picks the record with the best training AUPRC. Ties go to the earlier
/// iteration, then to the smaller program; records are scanned in
/// iteration order, so keeping the incumbent on a tie realizes both.
pub fn select_best(records: &[IterationRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in records {
        let Some((_, metrics)) = r.success() else { continue };
        let better = match best {
            None => true,
            Some((_, b_auprc)) => metrics.auprc > b_auprc,
        };
        if better {
            best = Some((r.index, metrics.auprc));
        }
    }
    best.map(|(idx, _)| idx)
}

/// Uniformly samples up to `k` false-positive and `k` false-negative row
/// indices (ascending) at the given threshold.
pub fn sample_misclassified(
    probs: &[f64],
    labels: &[bool],
    threshold: f64,
    k: usize,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let fp: Vec<usize> = (0..probs.len())
        .filter(|&i| probs[i] >= threshold && !labels[i])
        .collect();
    let fn_: Vec<usize> = (0..probs.len())
        .filter(|&i| probs[i] < threshold && labels[i])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |pool: &[usize], k: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut chosen: Vec<usize> = pool.choose_multiple(rng, k).copied().collect();
        chosen.sort_unstable();
        chosen
    };
    let fp_sample = pick(&fp, k, &mut rng);
    let fn_sample = pick(&fn_, k, &mut rng);
    (fp_sample, fn_sample)
}

fn prevalence(labels: &[bool]) -> f64 {
    labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64
}

/// One synthesis call, no feedback of any kind.
pub fn run_zero_shot(
    spec: &PromptSpec,
    train: &CohortTable,
    labels: &[bool],
    client: &mut dyn ChatClient,
    cfg: &SediConfig,
) -> Result<SediRun, SediError> {
    run_loop(Strategy::ZeroShot, spec, train, labels, client, cfg)
}

/// The full refinement loop: up to `max_iterations` feedback rounds after
/// the initial call.
pub fn run_sedi(
    spec: &PromptSpec,
    train: &CohortTable,
    labels: &[bool],
    client: &mut dyn ChatClient,
    cfg: &SediConfig,
) -> Result<SediRun, SediError> {
    run_loop(Strategy::Sedi, spec, train, labels, client, cfg)
}

pub fn run_strategy(
    strategy: Strategy,
    spec: &PromptSpec,
    train: &CohortTable,
    labels: &[bool],
    client: &mut dyn ChatClient,
    cfg: &SediConfig,
) -> Result<SediRun, SediError> {
    run_loop(strategy, spec, train, labels, client, cfg)
}

fn run_loop(
    strategy: Strategy,
    spec: &PromptSpec,
    train: &CohortTable,
    labels: &[bool],
    client: &mut dyn ChatClient,
    cfg: &SediConfig,
) -> Result<SediRun, SediError> {
    cfg.validate()?;
    if labels.len() != train.len() {
        return Err(SediError::LabelMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            train.len()
        )));
    }
    if train.len() == 0 {
        return Err(SediError::Config("training table is empty".into()));
    }

    let fallback = prevalence(labels);
    let calls = match strategy {
        Strategy::ZeroShot => 1,
        Strategy::Sedi => cfg.max_iterations + 1,
    };

    let (system, initial_user) = build_initial(spec)?;
    let mut transcript = ChatTranscript::new(system)?;
    let mut next_prompt = initial_user;
    let mut records = Vec::new();
    let mut prev_valid_auprc: Option<f64> = None;
    let mut examples_shown = 0usize;

    for index in 1..=calls {
        transcript.push_user(next_prompt.clone())?;
        let reply = client.complete(&transcript)?;
        transcript.push_assistant(reply.content.clone())?;

        let outcome = execute_candidate(&reply.content, train, labels, cfg.threshold)?;
        let mut record = IterationRecord {
            index,
            prompt: std::mem::take(&mut next_prompt),
            response: reply.content,
            outcome,
        };

        if index < calls {
            next_prompt = match &mut record.outcome {
                IterationOutcome::Failure { message } => build_debug(message)?,
                IterationOutcome::Success { program, metrics, fp_sampled, fn_sampled } => {
                    let probs = evaluate(program, train)
                        .expect("program already executed on this table");
                    let remaining = cfg.example_budget.saturating_sub(examples_shown);
                    let per_kind = cfg.fp_sample_count.max(cfg.fn_sample_count);
                    let (fp_rows, fn_rows) = sample_misclassified(
                        &probs,
                        labels,
                        cfg.threshold,
                        per_kind,
                        mix_seed(cfg.seed, &[5, index as u64]),
                    );
                    let mut fp_rows = fp_rows;
                    let mut fn_rows = fn_rows;
                    fp_rows.truncate(cfg.fp_sample_count.min(remaining));
                    fn_rows.truncate(cfg.fn_sample_count.min(remaining - fp_rows.len()));
                    examples_shown += fp_rows.len() + fn_rows.len();

                    let context = example_context(program, train, cfg, index);
                    let render = |rows: &[usize]| -> Vec<String> {
                        rows.iter()
                            .map(|&r| format_patient_example(&train.rows[r], &train.schema, &context))
                            .collect()
                    };
                    let improved = prev_valid_auprc.map(|p| metrics.auprc > p);
                    prev_valid_auprc = Some(metrics.auprc);
                    let feedback = FeedbackBundle {
                        auroc: metrics.auroc,
                        auprc: metrics.auprc,
                        fp_rate: metrics.fp_rate,
                        fn_rate: metrics.fn_rate,
                        fp_total: count_misclassified(&probs, labels, cfg.threshold).0,
                        fn_total: count_misclassified(&probs, labels, cfg.threshold).1,
                        fp_examples: render(&fp_rows),
                        fn_examples: render(&fn_rows),
                        improved,
                    };
                    *fp_sampled = fp_rows.iter().map(|&r| train.rows[r].id.clone()).collect();
                    *fn_sampled = fn_rows.iter().map(|&r| train.rows[r].id.clone()).collect();
                    build_instruct(&feedback, spec, train.len())?
                }
            };
        } else if let IterationOutcome::Success { metrics, .. } = &record.outcome {
            // Final call: no further prompt, but keep the improvement
            // bookkeeping coherent for the audit trail.
            prev_valid_auprc = Some(metrics.auprc);
        }

        records.push(record);
    }

    let selected_best = select_best(&records);
    let diagnostic = if selected_best.is_none() {
        Some(format!(
            "no valid candidate in {} call(s); falling back to the constant {fallback}",
            records.len()
        ))
    } else {
        None
    };
    Ok(SediRun {
        strategy,
        config: *cfg,
        transcript,
        records,
        selected_best,
        fallback,
        diagnostic,
        examples_shown,
    })
}

/// Extraction, parsing, and execution folded into a recordable outcome.
fn execute_candidate(
    response: &str,
    train: &CohortTable,
    labels: &[bool],
    threshold: f64,
) -> Result<IterationOutcome, SediError> {
    let source = match extract_program(response) {
        Ok(s) => s,
        Err(e) => return Ok(IterationOutcome::Failure { message: e.to_string() }),
    };
    match run_source(&source, train) {
        (Some(program), EvalOutcome::Success(probs)) => {
            let metrics = MetricsReport::compute(&probs, labels, threshold)?;
            Ok(IterationOutcome::Success {
                program,
                metrics,
                fp_sampled: Vec::new(),
                fn_sampled: Vec::new(),
            })
        }
        (_, EvalOutcome::Failure(failure)) => {
            Ok(IterationOutcome::Failure { message: failure.to_string() })
        }
        (None, EvalOutcome::Success(_)) => {
            unreachable!("successful execution always carries a parsed program")
        }
    }
}

/// Feature names shown with each example: the program's own features plus
/// a few randomly drawn extras.
fn example_context(
    program: &Program,
    train: &CohortTable,
    cfg: &SediConfig,
    index: usize,
) -> BTreeSet<String> {
    let mut context: BTreeSet<String> = stats(program).features_used;
    let pool: Vec<&str> = train
        .schema
        .names()
        .filter(|n| !context.contains(*n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[6, index as u64]));
    for name in pool.choose_multiple(&mut rng, cfg.context_feature_count) {
        context.insert((*name).to_string());
    }
    context
}

fn count_misclassified(probs: &[f64], labels: &[bool], threshold: f64) -> (usize, usize) {
    let fp = probs
        .iter()
        .zip(labels)
        .filter(|(p, &l)| **p >= threshold && !l)
        .count();
    let fn_ = probs
        .iter()
        .zip(labels)
        .filter(|(p, &l)| **p < threshold && l)
        .count();
    (fp, fn_)
}

/// Writes the run artifacts: the transcript as JSON lines, every valid
/// candidate as a `.phen` file, a per-iteration metrics CSV, the selected
/// program, and a small summary.
pub fn save_run_artifacts(run: &SediRun, dir: &Path) -> Result<(), SediError> {
    fs::create_dir_all(dir)?;

    let mut transcript = fs::File::create(dir.join("transcript.jsonl"))?;
    for msg in run.transcript.messages() {
        writeln!(transcript, "{}", serde_json::to_string(msg).expect("message serializes"))?;
    }

    let mut csv = csv::Writer::from_path(dir.join("iterations.csv"))
        .map_err(|e| SediError::Config(e.to_string()))?;
    csv.write_record([
        "iteration", "status", "auprc", "auroc", "fp_rate", "fn_rate", "size", "fp_sampled",
        "fn_sampled", "error",
    ])
    .map_err(|e| SediError::Config(e.to_string()))?;
    for r in &run.records {
        match &r.outcome {
            IterationOutcome::Success { program, metrics, fp_sampled, fn_sampled } => {
                fs::write(dir.join(format!("candidate_{:02}.phen", r.index)), &program.source_text)?;
                csv.write_record([
                    r.index.to_string(),
                    "ok".into(),
                    metrics.auprc.to_string(),
                    metrics.auroc.to_string(),
                    metrics.fp_rate.to_string(),
                    metrics.fn_rate.to_string(),
                    size(program).to_string(),
                    fp_sampled.len().to_string(),
                    fn_sampled.len().to_string(),
                    String::new(),
                ])
                .map_err(|e| SediError::Config(e.to_string()))?;
            }
            IterationOutcome::Failure { message } => {
                csv.write_record([
                    r.index.to_string(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    message.clone(),
                ])
                .map_err(|e| SediError::Config(e.to_string()))?;
            }
        }
    }
    csv.flush().map_err(SediError::Io)?;

    match run.selected_program() {
        Some(p) => fs::write(dir.join("selected.phen"), &p.source_text)?,
        None => fs::write(dir.join("selected.phen"), format!("phenotype fallback {{\n    return {};\n}}\n", run.fallback))?,
    }

    let summary = serde_json::json!({
        "strategy": run.strategy.key(),
        "selected_best": run.selected_best,
        "fallback": run.fallback,
        "examples_shown": run.examples_shown,
        "calls": run.records.len(),
        "diagnostic": run.diagnostic,
    });
    fs::write(dir.join("summary.json"), format!("{:#}\n", summary))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::default_schema;
    use crate::dsl::parse;

    #[test]
    fn config_invariants_are_enforced() {
        SediConfig::default().validate().unwrap();
        let mut c = SediConfig::default();
        c.fp_sample_count = 11;
        assert!(c.validate().is_err());
        let mut c = SediConfig::default();
        c.max_iterations = 11;
        assert!(c.validate().is_err(), "11 iterations x 20 examples exceeds 200");
        let mut c = SediConfig::default();
        c.threshold = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn misclassified_sampling_is_partitioned_and_seeded() {
        let probs = [0.9, 0.9, 0.1, 0.2, 0.6];
        let labels = [true, false, true, false, false];
        let (fp, fn_) = sample_misclassified(&probs, &labels, 0.5, 10, 42);
        assert_eq!(fp, vec![1, 4]);
        assert_eq!(fn_, vec![2]);

        let (fp1, fn1) = sample_misclassified(&probs, &labels, 0.5, 1, 42);
        assert_eq!(fp1.len(), 1);
        assert_eq!(fn1, vec![2]);
        assert_eq!(sample_misclassified(&probs, &labels, 0.5, 1, 42), (fp1, fn1));

        let perfect = [0.9, 0.1, 0.8, 0.2, 0.3];
        let (fp, fn_) = sample_misclassified(&perfect, &labels, 0.5, 10, 0);
        assert!(fp.is_empty() && fn_.is_empty());
    }

    fn success_record(index: usize, auprc: f64, source: &str) -> IterationRecord {
        let schema = default_schema();
        let program = parse(source, &schema).unwrap();
        IterationRecord {
            index,
            prompt: String::new(),
            response: String::new(),
            outcome: IterationOutcome::Success {
                program,
                metrics: MetricsReport {
                    auprc,
                    auroc: 0.5,
                    fp_rate: 0.0,
                    fn_rate: 0.0,
                    n: 10,
                    n_positive: 5,
                },
                fp_sampled: Vec::new(),
                fn_sampled: Vec::new(),
            },
        }
    }

    #[test]
    fn selection_prefers_auprc_then_earlier_iteration() {
        let failure = IterationRecord {
            index: 1,
            prompt: String::new(),
            response: String::new(),
            outcome: IterationOutcome::Failure { message: "nope".into() },
        };
        let records = vec![
            failure,
            success_record(2, 0.6, "phenotype p { return 0.1; }"),
            success_record(3, 0.8, "phenotype p { return 0.2; }"),
            success_record(4, 0.7, "phenotype p { return 0.3; }"),
        ];
        assert_eq!(select_best(&records), Some(3));

        // Equal AUPRC: the earlier record wins even against a smaller
        // later program.
        let records = vec![
            success_record(1, 0.8, "phenotype p { let a = 1.0; return a + 0.2; }"),
            success_record(2, 0.8, "phenotype p { return 0.2; }"),
        ];
        assert_eq!(select_best(&records), Some(1));
        assert_eq!(select_best(&[]), None);
    }
}
