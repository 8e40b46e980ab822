//! Prompt assembly for phenotype program synthesis.
//!
//! Every prompt in the pipeline is built here from fixed templates so the
//! full text is reproducible byte for byte: the initial system/user pair,
//! the debug prompt sent after a failed execution, and the instruct prompt
//! carrying performance feedback with false-positive and false-negative
//! examples. Golden-file tests pin the assembled output.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{FeatureSchema, PatientRecord, Phenotype};
use crate::dsl::GRAMMAR_TEXT;

/// Level of phenotype description detail in the prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Richness {
    Simple,
    Rich,
}

impl Richness {
    pub fn key(self) -> &'static str {
        match self {
            Richness::Simple => "simple",
            Richness::Rich => "rich",
        }
    }
}

/// Which slice of the data dictionary the model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    All,
    Expert,
}

impl FeatureSet {
    pub fn key(self) -> &'static str {
        match self {
            FeatureSet::All => "all",
            FeatureSet::Expert => "expert",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("data dictionary is empty")]
    EmptyDictionary,
    #[error("debug prompt requires a nonempty error message")]
    EmptyErrorText,
    #[error("invalid feedback bundle: {0}")]
    BadBundle(String),
}

/// One prompt configuration: target phenotype, description detail, and the
/// data dictionary actually shown to the model.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSpec {
    pub phenotype: Phenotype,
    pub richness: Richness,
    pub feature_set: FeatureSet,
    /// name -> description pairs, in schema order.
    pub dictionary: Vec<(String, String)>,
}

impl PromptSpec {
    /// Builds a prompt spec from a schema, restricting the dictionary to
    /// the expert subset when asked.
    pub fn new(
        phenotype: Phenotype,
        richness: Richness,
        feature_set: FeatureSet,
        schema: &FeatureSchema,
    ) -> Result<PromptSpec, PromptError> {
        let restricted = match feature_set {
            FeatureSet::All => schema.clone(),
            FeatureSet::Expert => schema.expert_subset(),
        };
        let dictionary: Vec<(String, String)> = restricted
            .entries()
            .iter()
            .map(|d| (d.name.clone(), d.description.clone()))
            .collect();
        if dictionary.is_empty() {
            return Err(PromptError::EmptyDictionary);
        }
        Ok(PromptSpec { phenotype, richness, feature_set, dictionary })
    }

    /// The filled phenotype placeholder: the bare name in simple mode, or
    /// the name plus its definition in rich mode.
    pub fn phenotype_text(&self) -> String {
        let name = self.phenotype.display_name();
        match self.richness {
            Richness::Simple => name.to_string(),
            Richness::Rich => {
                format!("{name}, which we will define as {}", rich_definition(self.phenotype))
            }
        }
    }

    fn dictionary_text(&self) -> String {
        let mut map = serde_json::Map::new();
        for (name, description) in &self.dictionary {
            map.insert(name.clone(), serde_json::Value::String(description.clone()));
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
    }
}

/// The full heuristic definition injected into rich prompts.
pub fn rich_definition(phenotype: Phenotype) -> &'static str {
    match phenotype {
        Phenotype::Htn => "2 or more hypertension Dx codes",
        Phenotype::HtnHypoK => {
            "2 or more hypertension Dx codes and either 2 or more low potassium test results, \
             2 or more potassium supplementation prescriptions, or 2 or more hypokalemia \
             diagnosis codes"
        }
        Phenotype::Atrh => {
            "2 or more high blood pressure measurements while prescribed 3 or more hypertension \
             medications or 2 or more encounters while prescribed 4 or more hypertension \
             medications"
        }
    }
}

/// The system and user messages that open every run.
pub fn build_initial(spec: &PromptSpec) -> Result<(String, String), PromptError> {
    if spec.dictionary.is_empty() {
        return Err(PromptError::EmptyDictionary);
    }
    let system = format!(
        "You are an AI assistant that generates phenotype programs based on a plain-text \
         description of a program's purpose. You will receive a statement describing what the \
         program should do. Your response must contain only a phenotype program, with no \
         comments or explanations, that strictly follows the given description.\n\n\
         Phenotype programs are written in the following language:\n\n{GRAMMAR_TEXT}"
    );
    let user = format!(
        "Please create a phenotype program named `predict_hypertension` that is evaluated once \
         per patient record. The program should assess whether each patient (represented as \
         rows) has evidence of {phenotype}. The program must return a float representing the \
         probability for each row. The available columns and their meanings are provided as key \
         value pairs in the following dictionary: `{dict}`. You may only use the features whose \
         names appear in this dictionary.",
        phenotype = spec.phenotype_text(),
        dict = spec.dictionary_text(),
    );
    Ok((system, user))
}

/// The prompt sent when the candidate failed to parse or execute.
pub fn build_debug(error_text: &str) -> Result<String, PromptError> {
    if error_text.trim().is_empty() {
        return Err(PromptError::EmptyErrorText);
    }
    Ok(format!(
        "The interpreter encountered an error when trying to execute the program. Error \
         Message: {error_text}. Please try again. **MAKE ABSOLUTELY SURE TO RETURN A \
         SYNTACTICALLY VALID PHENOTYPE PROGRAM."
    ))
}

/// Training-set feedback attached to an instruct prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBundle {
    pub auroc: f64,
    pub auprc: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    /// Total misclassification counts on the training set, which may
    /// exceed the number of sampled examples below.
    pub fp_total: usize,
    pub fn_total: usize,
    /// Formatted patient dictionaries, at most ten each.
    pub fp_examples: Vec<String>,
    pub fn_examples: Vec<String>,
    /// None on the first feedback round; afterwards whether training
    /// AUPRC improved over the previous valid candidate.
    pub improved: Option<bool>,
}

impl FeedbackBundle {
    fn validate(&self) -> Result<(), PromptError> {
        for (name, v) in [
            ("auroc", self.auroc),
            ("auprc", self.auprc),
            ("fp_rate", self.fp_rate),
            ("fn_rate", self.fn_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PromptError::BadBundle(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.fp_examples.len() > 10 || self.fn_examples.len() > 10 {
            return Err(PromptError::BadBundle(format!(
                "too many examples: {} FP, {} FN (limit 10 each)",
                self.fp_examples.len(),
                self.fn_examples.len()
            )));
        }
        Ok(())
    }
}

/// Formats a probability-like quantity to 3 decimals, rounding half away
/// from zero so e.g. 0.5415 renders as "0.542".
pub fn format_metric(x: f64) -> String {
    format!("{:.3}", (x * 1000.0).round() / 1000.0)
}

/// Formats a rate as a percentage with one decimal place.
pub fn format_rate(rate: f64) -> String {
    format!("{:.1}%", (rate * 1000.0).round() / 10.0)
}

/// The full instruct prompt: performance report, optional FP and FN
/// example sections, and the closing summary of the request.
pub fn build_instruct(
    feedback: &FeedbackBundle,
    spec: &PromptSpec,
    train_size: usize,
) -> Result<String, PromptError> {
    feedback.validate()?;
    let reinforcement = match feedback.improved {
        None => String::new(),
        Some(true) => " Your latest changes improved performance.".to_string(),
        Some(false) => " Your latest changes did not improve performance.".to_string(),
    };
    let mut sections = Vec::new();
    sections.push(format!(
        "We evaluated the prediction program you provided on a set of {train_size} patients.\
         {reinforcement} Using the performance feedback below, please refine the phenotype \
         program.\n\n\
         # Overall Performance\n\n\
         Area Under the Receiver-Operating Curve (AUROC): {auroc}\n\n\
         Area under the precision-recall curve (AUPRC): {auprc}\n\n\
         The False Positive Rate is {fp_rate}\n\n\
         The False Negative Rate is {fn_rate}",
        auroc = format_metric(feedback.auroc),
        auprc = format_metric(feedback.auprc),
        fp_rate = format_rate(feedback.fp_rate),
        fn_rate = format_rate(feedback.fn_rate),
    ));
    if !feedback.fp_examples.is_empty() {
        sections.push(format!(
            "# Analysis of False Positives\n\n\
             Please refine the program so that the {total} False Positives have lower predicted \
             probabilities\n\n\
             Below you will find {shown} example patients with false positive assessments to \
             assist you in prescribing changes to the predict_hypertension program:\n\n{list}",
            total = feedback.fp_total,
            shown = feedback.fp_examples.len(),
            list = feedback.fp_examples.join("\n"),
        ));
    }
    if !feedback.fn_examples.is_empty() {
        sections.push(format!(
            "# Analysis of False Negatives\n\n\
             Please refine the program so that the {total} False Negatives have higher predicted \
             probabilities\n\n\
             Below you will find {shown} example patients with false negative assessments to \
             assist you in prescribing changes to the predict_hypertension program:\n\n{list}",
            total = feedback.fn_total,
            shown = feedback.fn_examples.len(),
            list = feedback.fn_examples.join("\n"),
        ));
    }
    sections.push(format!(
        "# Summary of Request\n\n\
         Please create an updated phenotype program named `predict_hypertension` that achieves \
         fewer false positives and fewer false negatives than the one you previously provided.\n\n\
         The program should assess whether each patient (represented as rows) has evidence of \
         {phenotype}.\n\n\
         As before, the program reads the feature columns directly by name.\n\n\
         Recall that the available columns and their meanings are provided as key value pairs in \
         a dictionary previously provided.\n\n\
         As before, you may only use the features whose names appear in this dictionary.\n\n\
         As before, your response must contain only a phenotype program, with no comments or \
         explanations, that strictly follows the given description.",
        phenotype = spec.phenotype_text(),
    ));
    Ok(sections.join("\n\n"))
}

/// Renders one patient as a dictionary literal over the given features,
/// keys in schema order, values at 3 decimals, missing values as null.
pub fn format_patient_example(
    row: &PatientRecord,
    schema: &FeatureSchema,
    features: &BTreeSet<String>,
) -> String {
    let mut pairs = Vec::new();
    for (idx, def) in schema.entries().iter().enumerate() {
        if !features.contains(&def.name) {
            continue;
        }
        let rendered = match row.values[idx] {
            Some(v) => format!("{:.3}", (v * 1000.0).round() / 1000.0),
            None => "null".to_string(),
        };
        pairs.push(format!("\"{}\": {rendered}", def.name));
    }
    format!("{{{}}}", pairs.join(", "))
}
