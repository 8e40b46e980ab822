//! Command-line front end: cohort generation, experiment runs, constant
//! tuning, and report emission.
//!
//! Exit codes: 0 on success, 1 on configuration or usage errors, 2 when an
//! experiment grid completed but some runs failed.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phenosynth::cohort::{
    generate_cohort, load_cohort, save_cohort, save_data_dictionary, GeneratorParams, LabelSource,
    Phenotype,
};
use phenosynth::dsl::{parse, render};
use phenosynth::experiment::{load_outcome, run_experiment, write_reports, ExperimentConfig};
use phenosynth::tuner::{save_trace_csv, tune_program, TuneConfig};

#[derive(Parser)]
#[command(name = "phenosynth", version, about = "Synthesize and evaluate computable phenotypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort: CSV, data dictionary, and manifest.
    GenerateCohort(GenerateArgs),
    /// Run the experiment grid described by a TOML config.
    Run(RunArgs),
    /// Tune a program's numeric constants against a cohort.
    Tune(TuneArgs),
    /// Re-emit report files from a finished experiment directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Cohort size.
    #[arg(long, default_value_t = 1199)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory receiving cohort.csv, dictionary.json, and manifest.json.
    #[arg(long, default_value = "cohort-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML). Unset keys fall back to protocol defaults.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// CSV of externally reported reference rows appended to summary.csv.
    #[arg(long)]
    baselines: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Program source file.
    #[arg(long)]
    program: PathBuf,
    /// Cohort CSV (see generate-cohort).
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long, value_parser = parse_phenotype)]
    phenotype: Phenotype,
    #[arg(long, default_value = "heuristic", value_parser = parse_label_source)]
    label_source: LabelSource,
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the tuned program (stdout when unset).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the full search trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    dir: PathBuf,
    /// CSV of externally reported reference rows appended to summary.csv.
    #[arg(long)]
    baselines: Option<PathBuf>,
}

fn parse_phenotype(s: &str) -> Result<Phenotype, String> {
    Phenotype::from_key(s)
        .ok_or_else(|| format!("unknown phenotype `{s}` (expected htn, htn_hypok, or atrh)"))
}

fn parse_label_source(s: &str) -> Result<LabelSource, String> {
    LabelSource::from_key(s)
        .ok_or_else(|| format!("unknown label source `{s}` (expected heuristic or dx)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::GenerateCohort(args) => generate(args),
        Command::Run(args) => run(args),
        Command::Tune(args) => tune(args),
        Command::Report(args) => report(args),
    }
}

fn generate(args: GenerateArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let params = GeneratorParams { n: args.n, seed: args.seed, ..GeneratorParams::default() };
    let table = generate_cohort(&params)?;
    fs::create_dir_all(&args.out)?;
    save_cohort(&table, &args.out.join("cohort.csv"))?;
    save_data_dictionary(&table.schema, &args.out.join("dictionary.json"))?;

    let prevalence = |ph: Phenotype| {
        let labels = table.labels(ph, LabelSource::Heuristic);
        labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64
    };
    let manifest = serde_json::json!({
        "params": params,
        "rows": table.len(),
        "heuristic_prevalence": {
            "htn": prevalence(Phenotype::Htn),
            "htn_hypok": prevalence(Phenotype::HtnHypoK),
            "atrh": prevalence(Phenotype::Atrh),
        },
    });
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("wrote {} rows to {}", table.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    let outcome = run_experiment(&cfg)?;
    if args.baselines.is_some() {
        write_reports(&outcome, &cfg.output_dir, args.baselines.as_deref())?;
    }
    println!(
        "{} runs, {} cells, {} failures -> {}",
        outcome.runs.len(),
        outcome.cells.len(),
        outcome.failures.len(),
        cfg.output_dir.display()
    );
    if outcome.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn tune(args: TuneArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let table = load_cohort(&args.cohort)?;
    let source = fs::read_to_string(&args.program)?;
    let program = parse(&source, &table.schema)?;
    let labels = table.labels(args.phenotype, args.label_source);
    let cfg = TuneConfig { budget: args.budget, seed: args.seed };
    let (tuned, result) = tune_program(&program, &table, &labels, &cfg)?;

    println!("original AUPRC {:.6}", result.original_score);
    println!("tuned    AUPRC {:.6}", result.tuned_score);
    println!("evaluations    {}", result.evaluations_used);
    if let Some(note) = &result.note {
        println!("note: {note}");
    }
    let rendered = render(&tuned);
    match &args.out {
        Some(path) => fs::write(path, &rendered)?,
        None => print!("{rendered}"),
    }
    if let Some(path) = &args.trace {
        save_trace_csv(&result, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let outcome = load_outcome(&args.dir)?;
    write_reports(&outcome, &args.dir, args.baselines.as_deref())?;
    println!(
        "reports for {} cells written to {}",
        outcome.cells.len(),
        args.dir.display()
    );
    Ok(ExitCode::SUCCESS)
}
