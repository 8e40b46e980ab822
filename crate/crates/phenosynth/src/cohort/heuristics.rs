//! Rule-based reference labels.
//!
//! Hypertension (HTN): at least 2 hypertension diagnosis codes.
//! HTN with hypokalemia: HTN plus at least 2 low potassium results, 2
//! potassium supplement prescriptions, or 2 hypokalemia diagnosis codes.
//! Treatment resistant HTN: at least 2 encounters with high blood pressure
//! while on 3 hypertension medications, or at least 2 encounters while on
//! 4 or more.

use super::{CohortError, FeatureSchema, PatientRecord, Phenotype};

pub fn apply_heuristic(
    ph: Phenotype,
    schema: &FeatureSchema,
    row: &PatientRecord,
) -> Result<bool, CohortError> {
    let get = |name: &str| -> Result<f64, CohortError> {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| CohortError::Schema(format!("required feature `{name}` is absent")))?;
        row.values[idx].ok_or_else(|| {
            CohortError::Schema(format!("required feature `{name}` has no value for row {}", row.id))
        })
    };
    match ph {
        Phenotype::Htn => Ok(get("htn_dx_count")? >= 2.0),
        Phenotype::HtnHypoK => Ok(apply_heuristic(Phenotype::Htn, schema, row)?
            && (get("low_K_N")? >= 2.0
                || get("Med_Potassium_N")? >= 2.0
                || get("Dx_HypoK_N")? >= 2.0)),
        Phenotype::Atrh => Ok(get("high_BP_during_htn_meds_3")? >= 2.0
            || get("sum_enc_during_htn_meds_4_plus")? >= 2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{default_schema, Labels, Race, Sex};

    fn row(pairs: &[(&str, f64)]) -> (FeatureSchema, PatientRecord) {
        let schema = default_schema();
        let mut values = vec![Some(0.0); schema.len()];
        for (name, v) in pairs {
            values[schema.index_of(name).unwrap()] = Some(*v);
        }
        let rec = PatientRecord {
            id: "P0000".into(),
            age: 50.0,
            sex: Sex::F,
            race: Race::White,
            values,
            labels: Labels::default(),
        };
        (schema, rec)
    }

    #[test]
    fn atrh_from_bp_on_three_meds() {
        let (schema, rec) = row(&[("high_BP_during_htn_meds_3", 2.0)]);
        assert!(apply_heuristic(Phenotype::Atrh, &schema, &rec).unwrap());
    }

    #[test]
    fn atrh_from_encounters_on_four_meds() {
        let (schema, rec) = row(&[("sum_enc_during_htn_meds_4_plus", 3.0)]);
        assert!(apply_heuristic(Phenotype::Atrh, &schema, &rec).unwrap());
    }

    #[test]
    fn all_zero_row_is_negative_everywhere() {
        let (schema, rec) = row(&[]);
        for ph in Phenotype::ALL {
            assert!(!apply_heuristic(ph, &schema, &rec).unwrap());
        }
    }

    #[test]
    fn hypok_requires_htn_and_potassium_evidence() {
        let (schema, rec) = row(&[("htn_dx_count", 3.0), ("low_K_N", 1.0), ("Med_Potassium_N", 2.0)]);
        assert!(apply_heuristic(Phenotype::HtnHypoK, &schema, &rec).unwrap());
        let (schema, rec) = row(&[("htn_dx_count", 3.0), ("low_K_N", 1.0)]);
        assert!(!apply_heuristic(Phenotype::HtnHypoK, &schema, &rec).unwrap());
        let (schema, rec) = row(&[("low_K_N", 5.0)]);
        assert!(!apply_heuristic(Phenotype::HtnHypoK, &schema, &rec).unwrap());
    }

    #[test]
    fn htn_threshold_is_two_codes() {
        let (schema, rec) = row(&[("htn_dx_count", 2.0)]);
        assert!(apply_heuristic(Phenotype::Htn, &schema, &rec).unwrap());
        let (schema, rec) = row(&[("htn_dx_count", 1.0)]);
        assert!(!apply_heuristic(Phenotype::Htn, &schema, &rec).unwrap());
    }

    #[test]
    fn missing_required_feature_is_named() {
        let schema = default_schema();
        let keep: Vec<usize> = (0..schema.len())
            .filter(|&i| schema.def(i).name != "htn_dx_count")
            .collect();
        let reduced = schema.project(&keep);
        let rec = PatientRecord {
            id: "P0000".into(),
            age: 50.0,
            sex: Sex::F,
            race: Race::White,
            values: vec![Some(0.0); reduced.len()],
            labels: Labels::default(),
        };
        let err = apply_heuristic(Phenotype::Htn, &reduced, &rec).unwrap_err();
        assert!(err.to_string().contains("htn_dx_count"), "{err}");
    }
}
