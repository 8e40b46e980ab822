//! Synthetic EHR-style cohorts: feature schema, patient records, generation,
//! rule-based labeling, preprocessing, holdout splits, and CSV round-tripping.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod generate;
mod heuristics;
mod io;
mod preprocess;
mod split;

pub use generate::{generate_cohort, GeneratorParams, LabelNoise, PrevalenceTargets, RaceFractions};
pub use heuristics::apply_heuristic;
pub use io::{load_cohort, save_cohort, save_data_dictionary};
pub use preprocess::{preprocess, PreprocessConfig};
pub use split::split_holdout;

/// The three target phenotypes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phenotype {
    #[serde(rename = "htn")]
    Htn,
    #[serde(rename = "htn_hypok")]
    HtnHypoK,
    #[serde(rename = "atrh")]
    Atrh,
}

impl Phenotype {
    pub const ALL: [Phenotype; 3] = [Phenotype::Htn, Phenotype::HtnHypoK, Phenotype::Atrh];

    /// Short machine key used in file columns and CLI arguments.
    pub fn key(self) -> &'static str {
        match self {
            Phenotype::Htn => "htn",
            Phenotype::HtnHypoK => "htn_hypok",
            Phenotype::Atrh => "atrh",
        }
    }

    /// Human-readable name used in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Phenotype::Htn => "hypertension",
            Phenotype::HtnHypoK => "hypertension with hypokalemia",
            Phenotype::Atrh => "treatment resistant hypertension",
        }
    }

    pub fn from_key(key: &str) -> Option<Phenotype> {
        Phenotype::ALL.into_iter().find(|p| p.key() == key)
    }
}

impl fmt::Display for Phenotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Which label column an experiment treats as ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelSource {
    #[serde(rename = "heuristic")]
    Heuristic,
    #[serde(rename = "dx")]
    Dx,
}

impl LabelSource {
    pub fn key(self) -> &'static str {
        match self {
            LabelSource::Heuristic => "heuristic",
            LabelSource::Dx => "dx",
        }
    }

    pub fn from_key(key: &str) -> Option<LabelSource> {
        match key {
            "heuristic" => Some(LabelSource::Heuristic),
            "dx" => Some(LabelSource::Dx),
            _ => None,
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Count,
    Continuous,
    Binary,
    CategoricalCoded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDef {
    pub name: String,
    pub description: String,
    pub kind: FeatureKind,
}

/// Ordered feature dictionary plus the designated expert subset.
#[derive(Clone, Debug)]
pub struct FeatureSchema {
    entries: Vec<FeatureDef>,
    expert: Vec<bool>,
    index: HashMap<String, usize>,
}

impl PartialEq for FeatureSchema {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.expert == other.expert
    }
}

impl FeatureSchema {
    pub fn new(entries: Vec<FeatureDef>, expert_names: &[&str]) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect::<HashMap<_, _>>();
        assert_eq!(index.len(), entries.len(), "duplicate feature names");
        let expert = entries
            .iter()
            .map(|e| expert_names.contains(&e.name.as_str()))
            .collect();
        FeatureSchema { entries, expert, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FeatureDef] {
        &self.entries
    }

    pub fn def(&self, idx: usize) -> &FeatureDef {
        &self.entries[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn is_expert(&self, idx: usize) -> bool {
        self.expert[idx]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Schema restricted to the expert subset, preserving order.
    pub fn expert_subset(&self) -> FeatureSchema {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.expert[i]).collect();
        self.project(&keep)
    }

    /// Schema restricted to the given column indices, preserving the given order.
    pub fn project(&self, keep: &[usize]) -> FeatureSchema {
        let entries: Vec<FeatureDef> = keep.iter().map(|&i| self.entries[i].clone()).collect();
        let expert: Vec<bool> = keep.iter().map(|&i| self.expert[i]).collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
        FeatureSchema { entries, expert, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::F => "F",
            Sex::M => "M",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Race {
    Black,
    White,
    Other,
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Race::Black => "Black",
            Race::White => "White",
            Race::Other => "Other",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelPair {
    pub heuristic: bool,
    pub dx: bool,
}

impl LabelPair {
    pub fn get(self, source: LabelSource) -> bool {
        match source {
            LabelSource::Heuristic => self.heuristic,
            LabelSource::Dx => self.dx,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Labels {
    pub htn: LabelPair,
    pub htn_hypok: LabelPair,
    pub atrh: LabelPair,
}

impl Labels {
    pub fn get(&self, ph: Phenotype) -> LabelPair {
        match ph {
            Phenotype::Htn => self.htn,
            Phenotype::HtnHypoK => self.htn_hypok,
            Phenotype::Atrh => self.atrh,
        }
    }

    pub fn get_mut(&mut self, ph: Phenotype) -> &mut LabelPair {
        match ph {
            Phenotype::Htn => &mut self.htn,
            Phenotype::HtnHypoK => &mut self.htn_hypok,
            Phenotype::Atrh => &mut self.atrh,
        }
    }
}

/// One subject row. Feature values are positional, aligned with the schema;
/// `None` marks a missing value prior to imputation.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub age: f64,
    pub sex: Sex,
    pub race: Race,
    pub values: Vec<Option<f64>>,
    pub labels: Labels,
}

impl PatientRecord {
    pub fn label(&self, ph: Phenotype, source: LabelSource) -> bool {
        self.labels.get(ph).get(source)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Generated { seed: u64, n: usize },
    File { path: String },
}

/// Immutable cohort: schema plus rows. Never mutated after construction;
/// preprocessing and splitting return new tables.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortTable {
    pub schema: FeatureSchema,
    pub rows: Vec<PatientRecord>,
    pub provenance: Provenance,
}

impl CohortTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        let idx = self.schema.index_of(name)?;
        self.rows[row].values[idx]
    }

    /// Label vector for one phenotype/source pair, in row order.
    pub fn labels(&self, ph: Phenotype, source: LabelSource) -> Vec<bool> {
        self.rows.iter().map(|r| r.label(ph, source)).collect()
    }

    /// New table containing the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> CohortTable {
        CohortTable {
            schema: self.schema.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// New table keeping only the named feature columns (schema order preserved).
    pub fn project_features(&self, keep: &[usize]) -> CohortTable {
        let schema = self.schema.project(keep);
        let rows = self
            .rows
            .iter()
            .map(|r| PatientRecord {
                id: r.id.clone(),
                age: r.age,
                sex: r.sex,
                race: r.race,
                values: keep.iter().map(|&i| r.values[i]).collect(),
                labels: r.labels,
            })
            .collect();
        CohortTable { schema, rows, provenance: self.provenance.clone() }
    }
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("all features were removed by preprocessing")]
    DegenerateTable,
    #[error("cannot stratify split: {0}")]
    Stratification(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Names of the expert feature set shown to the expert-features prompt arm.
pub const EXPERT_FEATURES: [&str; 16] = [
    "mean_systolic",
    "median_systolic",
    "mean_diastolic",
    "median_diastolic",
    "bp_n",
    "high_bp_n",
    "high_BP_during_htn_meds_1",
    "high_BP_during_htn_meds_2",
    "high_BP_during_htn_meds_3",
    "high_BP_during_htn_meds_4_plus",
    "sum_enc_during_htn_meds_4_plus",
    "low_K_N",
    "test_K_N",
    "Med_Potassium_N",
    "Dx_HypoK_N",
    "re_htn_sum",
];

/// The full generated feature dictionary (expert subset plus extended features).
pub fn default_schema() -> FeatureSchema {
    use FeatureKind::*;
    let defs: [(&str, &str, FeatureKind); 28] = [
        ("mean_systolic", "Mean of recorded systolic blood pressure measurements (mmHg)", Continuous),
        ("median_systolic", "Median of recorded systolic blood pressure measurements (mmHg)", Continuous),
        ("mean_diastolic", "Mean of recorded diastolic blood pressure measurements (mmHg)", Continuous),
        ("median_diastolic", "Median of recorded diastolic blood pressure measurements (mmHg)", Continuous),
        ("bp_n", "Number of blood pressure measurements on record", Count),
        ("high_bp_n", "Number of encounters with high blood pressure (systolic >= 140 or diastolic >= 90)", Count),
        ("high_BP_during_htn_meds_1", "Number of encounters with high blood pressure while prescribed exactly 1 hypertension medication", Count),
        ("high_BP_during_htn_meds_2", "Number of encounters with high blood pressure while prescribed exactly 2 hypertension medications", Count),
        ("high_BP_during_htn_meds_3", "Number of encounters with high blood pressure while prescribed exactly 3 hypertension medications", Count),
        ("high_BP_during_htn_meds_4_plus", "Number of encounters with high blood pressure while prescribed 4 or more hypertension medications", Count),
        ("sum_enc_during_htn_meds_4_plus", "Number of encounters while prescribed 4 or more hypertension medications", Count),
        ("low_K_N", "Number of low blood potassium test results", Count),
        ("test_K_N", "Number of blood potassium tests", Count),
        ("Med_Potassium_N", "Number of potassium supplement prescriptions", Count),
        ("Dx_HypoK_N", "Number of hypokalemia diagnosis codes", Count),
        ("re_htn_sum", "Number of encounters with a hypertension diagnosis recorded", Count),
        ("htn_dx_count", "Number of hypertension diagnosis codes on record", Count),
        ("enc_N", "Total number of encounters", Count),
        ("Dx_N", "Total number of distinct diagnosis codes", Count),
        ("MED_N", "Total number of distinct medications prescribed", Count),
        ("Med_HTN_N", "Number of distinct hypertension medications prescribed", Count),
        ("weight_median", "Median recorded weight (kg)", Continuous),
        ("bmi_median", "Median recorded body mass index (kg/m^2)", Continuous),
        ("max_systolic", "Maximum recorded systolic blood pressure (mmHg)", Continuous),
        ("sd_systolic", "Standard deviation of recorded systolic blood pressure measurements (mmHg)", Continuous),
        ("dx_days_x", "Days between first and last recorded diagnosis", Count),
        ("practice_type", "Seen primarily in a specialty practice (1) versus primary care (0)", Binary),
        ("zip_cat", "Residential ZIP-code region category (coded 1-9)", CategoricalCoded),
    ];
    let entries = defs
        .into_iter()
        .map(|(name, description, kind)| FeatureDef {
            name: name.to_string(),
            description: description.to_string(),
            kind,
        })
        .collect();
    FeatureSchema::new(entries, &EXPERT_FEATURES)
}
