//! Black-box tests of the installed binary: exit codes and emitted files.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phenosynth"))
}

const ORACLE_ATRH: &str = "phenotype predict_hypertension {\n    return high_BP_during_htn_meds_3 >= 2 or sum_enc_during_htn_meds_4_plus >= 2;\n}";

fn generate(dir: &Path, n: usize, seed: u64) {
    let status = bin()
        .args(["generate-cohort", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out"])
        .arg(dir)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn generate_cohort_writes_consistent_files() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("cohort");
    generate(&out, 400, 7);
    for name in ["cohort.csv", "dictionary.json", "manifest.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    // Manifest prevalence matches a recount over the saved CSV.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rows"], 400);
    let table = phenosynth::cohort::load_cohort(&out.join("cohort.csv")).unwrap();
    let atrh = table
        .labels(phenosynth::cohort::Phenotype::Atrh, phenosynth::cohort::LabelSource::Heuristic)
        .iter()
        .filter(|&&l| l)
        .count() as f64
        / 400.0;
    assert_eq!(manifest["heuristic_prevalence"]["atrh"].as_f64().unwrap(), atrh);

    // Same seed twice -> identical bytes.
    let again = root.path().join("again");
    generate(&again, 400, 7);
    assert_eq!(
        fs::read(out.join("cohort.csv")).unwrap(),
        fs::read(again.join("cohort.csv")).unwrap()
    );
}

#[test]
fn generate_cohort_rejects_zero_rows() {
    let root = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["generate-cohort", "--n", "0", "--out"])
        .arg(root.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

fn write_scripts(dir: &Path, cells: &[&str]) {
    fs::create_dir_all(dir).unwrap();
    for cell in cells {
        fs::write(
            dir.join(format!("{cell}.json")),
            serde_json::to_string(&vec![ORACLE_ATRH]).unwrap(),
        )
        .unwrap();
    }
}

fn run_config(root: &Path, scripts: &Path) -> String {
    format!(
        r#"
            split_seed = 5
            output_dir = "{out}"

            [cohort]
            source = "generate"
            [cohort.params]
            n = 240
            seed = 11

            [llm]
            mode = "scripted"
            path = "{scripts}"

            [grid]
            phenotypes = ["atrh"]
            richness = ["rich"]
            feature_sets = ["all", "expert"]
            strategies = ["zero_shot"]

            [protocol]
            seeds = 1
        "#,
        out = root.join("out").display(),
        scripts = scripts.display(),
    )
}

#[test]
fn run_and_report_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let scripts = root.path().join("scripts");
    write_scripts(
        &scripts,
        &["atrh-heuristic-rich-all-zero_shot", "atrh-heuristic-rich-expert-zero_shot"],
    );
    let config = root.path().join("experiment.toml");
    fs::write(&config, run_config(root.path(), &scripts)).unwrap();

    let status = bin().args(["run", "--config"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let out = root.path().join("out");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("1.00 (1.00 - 1.00)"));

    // report re-emits the files, appending reference rows when asked.
    fs::remove_file(out.join("summary.csv")).unwrap();
    let baselines = root.path().join("baselines.csv");
    fs::write(
        &baselines,
        "model,phenotype,label_source,strategy,rich_prompt,expert_features,tuned,size,auroc,auprc,source\n\
         FEAT,atrh,-,-,-,no,yes,44,0.94 (0.91 - 0.96),0.80 (0.71 - 0.87),reported\n",
    )
    .unwrap();
    let status = bin()
        .args(["report", "--dir"])
        .arg(&out)
        .args(["--baselines"])
        .arg(&baselines)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("scripted,atrh"));
    assert!(summary.lines().last().unwrap().starts_with("FEAT"));
}

#[test]
fn missing_scripts_for_one_cell_exit_partial_failure() {
    let root = tempfile::tempdir().unwrap();
    let scripts = root.path().join("scripts");
    // Only one of the two grid cells has a script file.
    write_scripts(&scripts, &["atrh-heuristic-rich-all-zero_shot"]);
    let config = root.path().join("experiment.toml");
    fs::write(&config, run_config(root.path(), &scripts)).unwrap();

    let status = bin().args(["run", "--config"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(2), "partial grid failure must exit 2");
    let failures = fs::read_to_string(root.path().join("out/failures.csv")).unwrap();
    assert!(failures.lines().count() > 1);
}

#[test]
fn bad_config_exits_one() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("experiment.toml");
    fs::write(&config, "[grid]\nphenotypes = []\n").unwrap();
    let output = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("phenotypes"));
}

#[test]
fn tune_recovers_a_misparameterized_program() {
    let root = tempfile::tempdir().unwrap();
    let cohort = root.path().join("cohort");
    generate(&cohort, 400, 21);
    let program = root.path().join("weak.phen");
    fs::write(
        &program,
        "phenotype predict_hypertension {\n    return high_BP_during_htn_meds_3 >= 5 or sum_enc_during_htn_meds_4_plus >= 5;\n}",
    )
    .unwrap();

    let tuned_path = root.path().join("tuned.phen");
    let trace_path = root.path().join("trace.csv");
    let output = bin()
        .args(["tune", "--program"])
        .arg(&program)
        .args(["--cohort"])
        .arg(cohort.join("cohort.csv"))
        .args(["--phenotype", "atrh", "--budget", "600", "--seed", "3", "--out"])
        .arg(&tuned_path)
        .args(["--trace"])
        .arg(&trace_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("original AUPRC"), "{stdout}");
    assert!(stdout.contains("tuned    AUPRC"));

    // The tuned program parses against the cohort schema and kept its shape.
    let table = phenosynth::cohort::load_cohort(&cohort.join("cohort.csv")).unwrap();
    let tuned_src = fs::read_to_string(&tuned_path).unwrap();
    let tuned = phenosynth::dsl::parse(&tuned_src, &table.schema).unwrap();
    let original = phenosynth::dsl::parse(
        &fs::read_to_string(&program).unwrap(),
        &table.schema,
    )
    .unwrap();
    assert_eq!(phenosynth::dsl::size(&tuned), phenosynth::dsl::size(&original));
    assert!(trace_path.exists());
    assert!(fs::read_to_string(&trace_path).unwrap().starts_with("evaluation,score,accepted"));
}
