//! Config-driven experiment grid.
//!
//! One experiment walks the full prompting grid (phenotype x label source x
//! prompt richness x feature set x strategy). Each cell runs the synthesis
//! loop on every cross-validation fold under every seed, persists each run as
//! it completes so an interrupted grid resumes where it stopped, then picks
//! the cell's final model as the candidate with the highest validation AUPRC
//! across all folds, seeds, and iterations. Final models are scored on a
//! held-out partition that no synthesis, sampling, or tuning step ever sees.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    generate_cohort, load_cohort, preprocess, split_holdout, CohortError, CohortTable,
    GeneratorParams, LabelSource, PatientRecord, Phenotype, PreprocessConfig, Race, Sex,
};
use crate::dsl::{evaluate, parse, render, stats, Program, ProgramStats};
use crate::eval::{
    auprc, auroc, bootstrap_ci, stratified_kfold, subgroup_report, BootstrapCi, EvalError,
    EvalProtocol, MetricsReport, SubgroupReport,
};
use crate::llm::{ChatClient, ExhaustionPolicy, HttpClient, LlmConfig, LlmError, ScriptedClient};
use crate::mix_seed;
use crate::prompt::{FeatureSet, PromptError, PromptSpec, Richness};
use crate::sedi::{run_strategy, save_run_artifacts, SediConfig, SediError, Strategy};
use crate::tuner::{tune_program, TuneConfig, TuneError, TuneResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum CohortSource {
    /// Synthesize a cohort from generator parameters.
    Generate {
        #[serde(default)]
        params: GeneratorParams,
    },
    /// Load a previously saved cohort CSV.
    File { path: PathBuf },
}

impl Default for CohortSource {
    fn default() -> CohortSource {
        CohortSource::Generate { params: GeneratorParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LlmMode {
    /// Live chat-completions endpoint.
    Http {
        #[serde(default)]
        config: LlmConfig,
    },
    /// Canned responses. `path` may point at a shared JSON file used by every
    /// run, or at a directory holding one `<cell key>.json` file per cell.
    Scripted {
        path: PathBuf,
        #[serde(default)]
        policy: ExhaustionPolicy,
    },
}

impl Default for LlmMode {
    fn default() -> LlmMode {
        LlmMode::Http { config: LlmConfig::default() }
    }
}

/// The prompting grid. Every combination of the five axes becomes one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub phenotypes: Vec<Phenotype>,
    pub label_sources: Vec<LabelSource>,
    pub richness: Vec<Richness>,
    pub feature_sets: Vec<FeatureSet>,
    pub strategies: Vec<Strategy>,
}

impl Default for GridAxes {
    fn default() -> GridAxes {
        GridAxes {
            phenotypes: vec![Phenotype::Atrh],
            label_sources: vec![LabelSource::Heuristic],
            richness: vec![Richness::Simple, Richness::Rich],
            feature_sets: vec![FeatureSet::All, FeatureSet::Expert],
            strategies: vec![Strategy::ZeroShot, Strategy::Sedi],
        }
    }
}

impl GridAxes {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &phenotype in &self.phenotypes {
            for &label_source in &self.label_sources {
                for &richness in &self.richness {
                    for &feature_set in &self.feature_sets {
                        for &strategy in &self.strategies {
                            out.push(Cell {
                                phenotype,
                                label_source,
                                richness,
                                feature_set,
                                strategy,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let empty = [
            ("phenotypes", self.phenotypes.is_empty()),
            ("label_sources", self.label_sources.is_empty()),
            ("richness", self.richness.is_empty()),
            ("feature_sets", self.feature_sets.is_empty()),
            ("strategies", self.strategies.is_empty()),
        ];
        for (name, is_empty) in empty {
            if is_empty {
                return Err(ExperimentError::Config(format!("grid axis `{name}` is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cohort: CohortSource,
    /// Median imputation plus low-variance/sparse column removal, applied to
    /// the whole cohort before splitting.
    pub preprocess: bool,
    pub preprocess_config: PreprocessConfig,
    /// Seed for the train/held-out split, bootstrap draws, and tuning.
    pub split_seed: u64,
    pub protocol: EvalProtocol,
    pub grid: GridAxes,
    pub llm: LlmMode,
    pub sedi: SediConfig,
    /// Tune the final model's numeric constants on the training partition and
    /// re-evaluate on the held-out partition.
    pub tune: bool,
    pub tuner: TuneConfig,
    /// Save full chat transcripts and candidate programs per run.
    pub save_transcripts: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            cohort: CohortSource::default(),
            preprocess: true,
            preprocess_config: PreprocessConfig::default(),
            split_seed: 1,
            protocol: EvalProtocol::default(),
            grid: GridAxes::default(),
            llm: LlmMode::default(),
            sedi: SediConfig::default(),
            tune: false,
            tuner: TuneConfig::default(),
            save_transcripts: false,
            output_dir: PathBuf::from("experiment-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.grid.validate()?;
        if self.protocol.folds < 2 {
            return Err(ExperimentError::Config("protocol.folds must be at least 2".into()));
        }
        if self.protocol.seeds == 0 {
            return Err(ExperimentError::Config("protocol.seeds must be at least 1".into()));
        }
        if !(self.protocol.ci_level > 0.0 && self.protocol.ci_level < 1.0) {
            return Err(ExperimentError::Config("protocol.ci_level must be in (0, 1)".into()));
        }
        self.sedi.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.tuner.budget < 1 {
            return Err(ExperimentError::Config("tuner.budget must be at least 1".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(ExperimentError::Config("output_dir must be set".into()));
        }
        if let CohortSource::Generate { params } = &self.cohort {
            params.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One point of the prompting grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub phenotype: Phenotype,
    pub label_source: LabelSource,
    pub richness: Richness,
    pub feature_set: FeatureSet,
    pub strategy: Strategy,
}

impl Cell {
    /// Stable directory/file-name key, e.g. `atrh-heuristic-rich-expert-sedi`.
    pub fn key(&self) -> String {
        format!(
            "{}-{}-{}-{}-{}",
            self.phenotype.key(),
            self.label_source.key(),
            self.richness.key(),
            self.feature_set.key(),
            self.strategy.key()
        )
    }
}

/// A program produced in some iteration, scored on its fold's validation
/// split. These are the candidates the final-model selection ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub iteration: usize,
    pub source: String,
    pub size: usize,
    pub val_auprc: f64,
}

/// Outcome of one (cell, seed, fold) run, persisted as JSON for resumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub cell: Cell,
    pub seed: u64,
    pub fold: usize,
    /// Iteration index the loop itself selected (best training AUPRC).
    pub sedi_selected: Option<usize>,
    /// Constant score used when no iteration produced a valid program.
    pub fallback: f64,
    /// Validation metrics of the run's selected predictor.
    pub validation: Option<MetricsReport>,
    pub stats: Option<ProgramStats>,
    pub candidates: Vec<CandidateRecord>,
    pub examples_shown: usize,
    pub calls: usize,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub cell: Cell,
    pub seed: Option<u64>,
    pub fold: Option<usize>,
    /// "run" for a synthesis run, "summary" for final-model evaluation.
    pub stage: String,
    pub error: String,
}

/// Where a cell's final model came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOrigin {
    pub seed: u64,
    pub fold: usize,
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutEval {
    pub metrics: MetricsReport,
    pub auprc_ci: BootstrapCi,
    pub auroc_ci: BootstrapCi,
    pub subgroups: SubgroupReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedEval {
    pub source: String,
    pub tune: TuneResult,
    pub holdout: HoldoutEval,
}

/// Per-cell final model and its held-out evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    /// None when every run fell back to the constant predictor.
    pub final_source: Option<String>,
    pub origin: Option<RunOrigin>,
    pub stats: Option<ProgramStats>,
    pub validation_auprc: Option<f64>,
    /// Constant used in place of a program when `final_source` is None.
    pub fallback: f64,
    pub holdout: HoldoutEval,
    pub tuned: Option<TunedEval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    /// Model identifier used in reports ("scripted" for canned runs).
    pub model: String,
    pub runs: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<RunFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub cohort_rows: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sedi(#[from] SediError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error("stored program failed to parse: {0}")]
    StoredProgram(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Serde(String),
}

/// Builds one chat client per executed run. Runs restored from disk never
/// request a client, which is what makes resumption observable in tests.
pub type ClientFactory<'a> =
    dyn FnMut(&Cell, u64, usize) -> Result<Box<dyn ChatClient>, ExperimentError> + 'a;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    match &cfg.llm {
        LlmMode::Http { config } => {
            // Fail fast on a missing credential instead of logging one
            // failure per run.
            if std::env::var(&config.api_key_env).is_err() {
                return Err(ExperimentError::Llm(LlmError::MissingCredential(
                    config.api_key_env.clone(),
                )));
            }
            let config = config.clone();
            let mut factory = move |_: &Cell, _: u64, _: usize| {
                Ok(Box::new(HttpClient::new(config.clone())?) as Box<dyn ChatClient>)
            };
            run_experiment_with(cfg, &mut factory)
        }
        LlmMode::Scripted { path, policy } => {
            let path = path.clone();
            let policy = *policy;
            let mut factory = move |cell: &Cell, _: u64, _: usize| {
                let file = if path.is_dir() {
                    path.join(format!("{}.json", cell.key()))
                } else {
                    path.clone()
                };
                Ok(Box::new(ScriptedClient::from_file(&file, policy)?) as Box<dyn ChatClient>)
            };
            run_experiment_with(cfg, &mut factory)
        }
    }
}

/// Grid runner with an injected client factory; `run_experiment` wraps this
/// with the configured HTTP or scripted client.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    factory: &mut ClientFactory,
) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let model = match &cfg.llm {
        LlmMode::Http { config } => config.model.clone(),
        LlmMode::Scripted { .. } => "scripted".to_string(),
    };

    let cohort = load_source(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let manifest = Manifest { model: model.clone(), cohort_rows: cohort.len(), config: cfg.clone() };
    write_atomic(
        &cfg.output_dir.join("manifest.json"),
        to_pretty(&manifest)?.as_bytes(),
    )?;

    // Train/held-out partitions per (phenotype, label source); cells that
    // share a target share the same split.
    let mut partitions: BTreeMap<(Phenotype, LabelSource), (CohortTable, CohortTable)> =
        BTreeMap::new();
    for cell in cfg.grid.cells() {
        let key = (cell.phenotype, cell.label_source);
        if !partitions.contains_key(&key) {
            let split = split_holdout(
                &cohort,
                cfg.protocol.train_fraction,
                cfg.split_seed,
                select(cfg.protocol.stratified, cell.phenotype, cell.label_source),
            )?;
            partitions.insert(key, split);
        }
    }

    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut failures = Vec::new();

    for (cell_idx, cell) in cfg.grid.cells().into_iter().enumerate() {
        let (train_part, holdout) = &partitions[&(cell.phenotype, cell.label_source)];
        let mut cell_runs = Vec::new();

        match run_cell(cfg, &cell, train_part, factory, &mut cell_runs, &mut failures) {
            Ok(()) => {}
            Err(e) => {
                failures.push(RunFailure {
                    cell,
                    seed: None,
                    fold: None,
                    stage: "cell".into(),
                    error: e.to_string(),
                });
                continue;
            }
        }

        match summarize_cell(cfg, &cell, cell_idx, &cell_runs, train_part, holdout) {
            Ok(summary) => cells.push(summary),
            Err(e) => failures.push(RunFailure {
                cell,
                seed: None,
                fold: None,
                stage: "summary".into(),
                error: e.to_string(),
            }),
        }
        runs.extend(cell_runs);
    }

    let outcome = ExperimentOutcome { model, runs, cells, failures };
    write_atomic(
        &cfg.output_dir.join("cells.json"),
        to_pretty(&outcome.cells)?.as_bytes(),
    )?;
    write_atomic(
        &cfg.output_dir.join("failures.json"),
        to_pretty(&outcome.failures)?.as_bytes(),
    )?;
    write_reports(&outcome, &cfg.output_dir, None)?;
    Ok(outcome)
}

fn load_source(cfg: &ExperimentConfig) -> Result<CohortTable, ExperimentError> {
    let raw = match &cfg.cohort {
        CohortSource::Generate { params } => generate_cohort(params)?,
        CohortSource::File { path } => load_cohort(path)?,
    };
    if cfg.preprocess {
        Ok(preprocess(&raw, &cfg.preprocess_config)?)
    } else {
        Ok(raw)
    }
}

fn select(
    stratified: bool,
    ph: Phenotype,
    source: LabelSource,
) -> impl Fn(&PatientRecord) -> bool {
    move |r: &PatientRecord| stratified && r.label(ph, source)
}

fn run_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    train_part: &CohortTable,
    factory: &mut ClientFactory,
    cell_runs: &mut Vec<RunResult>,
    failures: &mut Vec<RunFailure>,
) -> Result<(), ExperimentError> {
    let spec = PromptSpec::new(cell.phenotype, cell.richness, cell.feature_set, &train_part.schema)?;
    let run_dir = cfg.output_dir.join("runs").join(cell.key());
    fs::create_dir_all(&run_dir)?;

    for seed in 0..cfg.protocol.seeds as u64 {
        let folds = stratified_kfold(
            train_part,
            cfg.protocol.folds,
            seed,
            select(cfg.protocol.stratified, cell.phenotype, cell.label_source),
        )?;
        for (fold, (fold_train, fold_val)) in folds.iter().enumerate() {
            let path = run_dir.join(format!("s{seed:02}_f{fold}.json"));
            if let Some(existing) = load_run(&path, cell, seed, fold) {
                cell_runs.push(existing);
                continue;
            }
            match execute_run(cfg, cell, &spec, fold_train, fold_val, seed, fold, factory) {
                Ok(run) => {
                    write_atomic(&path, to_pretty(&run)?.as_bytes())?;
                    cell_runs.push(run);
                }
                Err(e) => failures.push(RunFailure {
                    cell: *cell,
                    seed: Some(seed),
                    fold: Some(fold),
                    stage: "run".into(),
                    error: e.to_string(),
                }),
            }
        }
    }
    Ok(())
}

fn load_run(path: &Path, cell: &Cell, seed: u64, fold: usize) -> Option<RunResult> {
    let text = fs::read_to_string(path).ok()?;
    let run: RunResult = serde_json::from_str(&text).ok()?;
    (run.cell == *cell && run.seed == seed && run.fold == fold).then_some(run)
}

#[allow(clippy::too_many_arguments)]
fn execute_run(
    cfg: &ExperimentConfig,
    cell: &Cell,
    spec: &PromptSpec,
    fold_train: &CohortTable,
    fold_val: &CohortTable,
    seed: u64,
    fold: usize,
    factory: &mut ClientFactory,
) -> Result<RunResult, ExperimentError> {
    let train_labels = fold_train.labels(cell.phenotype, cell.label_source);
    let sedi_cfg = SediConfig {
        seed: mix_seed(cfg.sedi.seed, &[8, seed, fold as u64]),
        ..cfg.sedi
    };
    let mut client = factory(cell, seed, fold)?;
    let run = run_strategy(
        cell.strategy,
        spec,
        fold_train,
        &train_labels,
        client.as_mut(),
        &sedi_cfg,
    )?;
    if cfg.save_transcripts {
        let dir = cfg
            .output_dir
            .join("artifacts")
            .join(cell.key())
            .join(format!("s{seed:02}_f{fold}"));
        save_run_artifacts(&run, &dir)?;
    }

    let val_labels = fold_val.labels(cell.phenotype, cell.label_source);
    let validation = run
        .predictor()
        .predict(fold_val)
        .ok()
        .and_then(|probs| MetricsReport::compute(&probs, &val_labels, cfg.sedi.threshold).ok());

    let mut candidates = Vec::new();
    for record in &run.records {
        if let Some((program, _)) = record.success() {
            if let Ok(probs) = evaluate(program, fold_val) {
                if let Ok(v) = auprc(&probs, &val_labels) {
                    candidates.push(CandidateRecord {
                        iteration: record.index,
                        source: render(program),
                        size: stats(program).size,
                        val_auprc: v,
                    });
                }
            }
        }
    }

    Ok(RunResult {
        cell: *cell,
        seed,
        fold,
        sedi_selected: run.selected_best,
        fallback: run.fallback,
        validation,
        stats: run.selected_program().map(stats),
        candidates,
        examples_shown: run.examples_shown,
        calls: run.records.len(),
        diagnostic: run.diagnostic.clone(),
    })
}

fn summarize_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    cell_idx: usize,
    cell_runs: &[RunResult],
    train_part: &CohortTable,
    holdout: &CohortTable,
) -> Result<CellSummary, ExperimentError> {
    if cell_runs.is_empty() {
        return Err(ExperimentError::Config("no completed runs in cell".into()));
    }
    // Highest validation AUPRC across every fold, seed, and iteration; the
    // first candidate in scan order wins ties.
    let mut best: Option<(RunOrigin, &CandidateRecord)> = None;
    for run in cell_runs {
        for cand in &run.candidates {
            if best.is_none() || cand.val_auprc > best.unwrap().1.val_auprc {
                best = Some((
                    RunOrigin { seed: run.seed, fold: run.fold, iteration: cand.iteration },
                    cand,
                ));
            }
        }
    }

    let train_labels = train_part.labels(cell.phenotype, cell.label_source);
    let prevalence =
        train_labels.iter().filter(|&&l| l).count() as f64 / train_labels.len() as f64;
    let holdout_labels = holdout.labels(cell.phenotype, cell.label_source);

    let final_program: Option<Program> = match &best {
        Some((_, cand)) => Some(
            parse(&cand.source, &train_part.schema)
                .map_err(|e| ExperimentError::StoredProgram(e.to_string()))?,
        ),
        None => None,
    };
    let holdout_probs = match &final_program {
        Some(p) => evaluate(p, holdout).map_err(|e| ExperimentError::StoredProgram(e.to_string()))?,
        None => vec![prevalence; holdout.len()],
    };
    let eval = holdout_eval(cfg, cell_idx, 0, &holdout_probs, &holdout_labels, holdout)?;

    let tuned = match (&final_program, cfg.tune) {
        (Some(program), true) => {
            let tune_cfg = TuneConfig {
                seed: mix_seed(cfg.tuner.seed, &[9, cell_idx as u64]),
                ..cfg.tuner
            };
            let (tuned_program, tune) =
                tune_program(program, train_part, &train_labels, &tune_cfg)?;
            let probs = evaluate(&tuned_program, holdout)
                .map_err(|e| ExperimentError::StoredProgram(e.to_string()))?;
            let holdout_eval = holdout_eval(cfg, cell_idx, 1, &probs, &holdout_labels, holdout)?;
            Some(TunedEval { source: render(&tuned_program), tune, holdout: holdout_eval })
        }
        _ => None,
    };

    Ok(CellSummary {
        cell: *cell,
        final_source: best.as_ref().map(|(_, c)| c.source.clone()),
        origin: best.as_ref().map(|(o, _)| *o),
        stats: final_program.as_ref().map(stats),
        validation_auprc: best.as_ref().map(|(_, c)| c.val_auprc),
        fallback: prevalence,
        holdout: eval,
        tuned,
    })
}

fn holdout_eval(
    cfg: &ExperimentConfig,
    cell_idx: usize,
    variant: u64,
    probs: &[f64],
    labels: &[bool],
    holdout: &CohortTable,
) -> Result<HoldoutEval, ExperimentError> {
    let metrics = MetricsReport::compute(probs, labels, cfg.sedi.threshold)?;
    let auprc_ci = bootstrap_ci(
        probs,
        labels,
        auprc,
        cfg.protocol.ci_level,
        cfg.protocol.bootstrap_resamples,
        mix_seed(cfg.split_seed, &[3, cell_idx as u64, variant, 0]),
    )?;
    let auroc_ci = bootstrap_ci(
        probs,
        labels,
        auroc,
        cfg.protocol.ci_level,
        cfg.protocol.bootstrap_resamples,
        mix_seed(cfg.split_seed, &[3, cell_idx as u64, variant, 1]),
    )?;
    let demographics: Vec<(Race, Sex)> = holdout.rows.iter().map(|r| (r.race, r.sex)).collect();
    let subgroups = subgroup_report(probs, labels, &demographics)?;
    Ok(HoldoutEval { metrics, auprc_ci, auroc_ci, subgroups })
}

/// Reloads a finished (or interrupted) experiment directory.
pub fn load_outcome(dir: &Path) -> Result<ExperimentOutcome, ExperimentError> {
    let manifest: Manifest = from_file(&dir.join("manifest.json"))?;
    let mut runs = Vec::new();
    for cell in manifest.config.grid.cells() {
        for seed in 0..manifest.config.protocol.seeds as u64 {
            for fold in 0..manifest.config.protocol.folds {
                let path = dir.join("runs").join(cell.key()).join(format!("s{seed:02}_f{fold}.json"));
                if let Some(run) = load_run(&path, &cell, seed, fold) {
                    runs.push(run);
                }
            }
        }
    }
    let cells: Vec<CellSummary> = match fs::read_to_string(dir.join("cells.json")) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| ExperimentError::Serde(e.to_string()))?,
        Err(_) => Vec::new(),
    };
    let failures: Vec<RunFailure> = match fs::read_to_string(dir.join("failures.json")) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| ExperimentError::Serde(e.to_string()))?,
        Err(_) => Vec::new(),
    };
    Ok(ExperimentOutcome { model: manifest.model, runs, cells, failures })
}

/// Point estimate with its interval, e.g. `0.85 (0.78 - 0.91)`.
pub fn format_ci(point: f64, lo: f64, hi: f64) -> String {
    format!("{point:.2} ({lo:.2} - {hi:.2})")
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

/// Emits the three report files into `dir`: `summary.csv` (one row per cell,
/// Table-style CI strings), `runs.csv` (one row per run for plotting), and
/// `subgroups.csv` (per race-by-sex metrics of each final model). When a
/// baselines CSV is given, its rows are appended to the summary so
/// externally reported reference models sit alongside computed ones.
pub fn write_reports(
    outcome: &ExperimentOutcome,
    dir: &Path,
    baselines: Option<&Path>,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;

    let mut runs = String::from(
        "phenotype,label_source,richness,feature_set,strategy,seed,fold,auprc,auroc,fp_rate,fn_rate,size\n",
    );
    for r in &outcome.runs {
        let (auprc, auroc, fpr, fnr) = match &r.validation {
            Some(m) => (
                m.auprc.to_string(),
                m.auroc.to_string(),
                m.fp_rate.to_string(),
                m.fn_rate.to_string(),
            ),
            None => Default::default(),
        };
        runs.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.cell.phenotype.key(),
            r.cell.label_source.key(),
            r.cell.richness.key(),
            r.cell.feature_set.key(),
            r.cell.strategy.key(),
            r.seed,
            r.fold,
            auprc,
            auroc,
            fpr,
            fnr,
            fmt_opt(&r.stats.as_ref().map(|s| s.size)),
        ));
    }
    write_atomic(&dir.join("runs.csv"), runs.as_bytes())?;

    let mut summary = String::from(
        "model,phenotype,label_source,strategy,rich_prompt,expert_features,tuned,size,auroc,auprc,source\n",
    );
    for cell in &outcome.cells {
        summary.push_str(&summary_row(&outcome.model, cell, false));
        if cell.tuned.is_some() {
            summary.push_str(&summary_row(&outcome.model, cell, true));
        }
    }
    if let Some(path) = baselines {
        let text = fs::read_to_string(path)?;
        for line in text.lines().skip(1) {
            if !line.trim().is_empty() {
                summary.push_str(line);
                summary.push('\n');
            }
        }
    }
    write_atomic(&dir.join("summary.csv"), summary.as_bytes())?;

    let mut subgroups = String::from(
        "phenotype,label_source,richness,feature_set,strategy,tuned,race,sex,n,cases,prevalence,auprc,auroc,low_n\n",
    );
    for cell in &outcome.cells {
        subgroup_rows(&mut subgroups, cell, &cell.holdout.subgroups, false);
        if let Some(tuned) = &cell.tuned {
            subgroup_rows(&mut subgroups, cell, &tuned.holdout.subgroups, true);
        }
    }
    write_atomic(&dir.join("subgroups.csv"), subgroups.as_bytes())?;

    let mut failures =
        String::from("phenotype,label_source,richness,feature_set,strategy,seed,fold,stage,error\n");
    for f in &outcome.failures {
        failures.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:?}\n",
            f.cell.phenotype.key(),
            f.cell.label_source.key(),
            f.cell.richness.key(),
            f.cell.feature_set.key(),
            f.cell.strategy.key(),
            fmt_opt(&f.seed),
            fmt_opt(&f.fold),
            f.stage,
            f.error,
        ));
    }
    write_atomic(&dir.join("failures.csv"), failures.as_bytes())?;
    Ok(())
}

fn summary_row(model: &str, cell: &CellSummary, tuned: bool) -> String {
    let eval = if tuned {
        &cell.tuned.as_ref().expect("tuned row requires tuned eval").holdout
    } else {
        &cell.holdout
    };
    let size = match (tuned, &cell.stats) {
        (_, Some(s)) => s.size.to_string(),
        (_, None) => "-".into(),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},computed\n",
        model,
        cell.cell.phenotype.key(),
        cell.cell.label_source.key(),
        cell.cell.strategy.key(),
        yes_no(cell.cell.richness == Richness::Rich),
        yes_no(cell.cell.feature_set == FeatureSet::Expert),
        yes_no(tuned),
        size,
        format_ci(eval.auroc_ci.point, eval.auroc_ci.lo, eval.auroc_ci.hi),
        format_ci(eval.auprc_ci.point, eval.auprc_ci.lo, eval.auprc_ci.hi),
    )
}

fn subgroup_rows(out: &mut String, cell: &CellSummary, report: &SubgroupReport, tuned: bool) {
    for g in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            cell.cell.phenotype.key(),
            cell.cell.label_source.key(),
            cell.cell.richness.key(),
            cell.cell.feature_set.key(),
            cell.cell.strategy.key(),
            yes_no(tuned),
            g.race,
            g.sex,
            g.n,
            g.cases,
            g.prevalence,
            fmt_opt(&g.auprc),
            fmt_opt(&g.auroc),
            g.low_n,
        ));
    }
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Serde(e.to_string()))
}

fn from_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Serde(e.to_string()))
}
