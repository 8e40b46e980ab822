//! Seeded synthetic cohort generation.
//!
//! Labels are assigned first by exact quota (`round(n * target)`), with the
//! two narrower phenotypes nested inside the hypertension positives, then
//! features are drawn conditioned on the labels so that every row satisfies
//! its heuristic rule by construction. A latent per-subject severity drives
//! correlated counts and blood-pressure shifts so non-rule features still
//! carry signal. If a nested target exceeds the hypertension quota it is
//! capped at the hypertension count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::mix_seed;

use super::{
    default_schema, CohortError, CohortTable, FeatureKind, FeatureSchema, Labels, PatientRecord,
    Provenance, Race, Sex,
};

/// Fraction of each continuous feature blanked out (missing completely at
/// random) before imputation. Counts are never missing.
const MISSING_RATE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceTargets {
    pub htn: f64,
    pub htn_hypok: f64,
    pub atrh: f64,
}

impl Default for PrevalenceTargets {
    fn default() -> Self {
        PrevalenceTargets { htn: 0.507, htn_hypok: 0.143, atrh: 0.147 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelNoise {
    /// Probability a heuristic positive is recorded negative in the dx label.
    pub fn_rate: f64,
    /// Probability a heuristic negative is recorded positive in the dx label.
    pub fp_rate: f64,
}

impl Default for LabelNoise {
    fn default() -> Self {
        LabelNoise { fn_rate: 0.10, fp_rate: 0.02 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaceFractions {
    pub black: f64,
    pub other: f64,
    pub white: f64,
}

impl Default for RaceFractions {
    fn default() -> Self {
        RaceFractions { black: 0.282, other: 0.090, white: 0.628 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub n: usize,
    pub seed: u64,
    pub target_prevalence: PrevalenceTargets,
    pub label_noise: LabelNoise,
    pub sex_f_fraction: f64,
    pub race_fractions: RaceFractions,
    pub age_mean: f64,
    pub age_sd: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n: 1199,
            seed: 1,
            target_prevalence: PrevalenceTargets::default(),
            label_noise: LabelNoise::default(),
            sex_f_fraction: 0.615,
            race_fractions: RaceFractions::default(),
            age_mean: 57.2,
            age_sd: 18.5,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), CohortError> {
        let frac = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CohortError::Config(format!("{what} must be in [0, 1], got {v}")))
            }
        };
        if self.n < 1 {
            return Err(CohortError::Config("n must be at least 1".into()));
        }
        frac(self.target_prevalence.htn, "htn prevalence")?;
        frac(self.target_prevalence.htn_hypok, "htn_hypok prevalence")?;
        frac(self.target_prevalence.atrh, "atrh prevalence")?;
        frac(self.label_noise.fn_rate, "fn_rate")?;
        frac(self.label_noise.fp_rate, "fp_rate")?;
        frac(self.sex_f_fraction, "sex fraction")?;
        frac(self.race_fractions.black, "race fraction")?;
        frac(self.race_fractions.other, "race fraction")?;
        frac(self.race_fractions.white, "race fraction")?;
        let race_sum =
            self.race_fractions.black + self.race_fractions.other + self.race_fractions.white;
        if (race_sum - 1.0).abs() > 1e-6 {
            return Err(CohortError::Config(format!("race fractions must sum to 1, got {race_sum}")));
        }
        if !(self.age_sd > 0.0) || !self.age_sd.is_finite() {
            return Err(CohortError::Config(format!("age sd must be positive, got {}", self.age_sd)));
        }
        if !(18.0..=110.0).contains(&self.age_mean) {
            return Err(CohortError::Config(format!("age mean {} outside [18, 110]", self.age_mean)));
        }
        Ok(())
    }
}

pub fn generate_cohort(params: &GeneratorParams) -> Result<CohortTable, CohortError> {
    params.validate()?;
    let schema = default_schema();
    let n = params.n;
    let quota = |p: f64| (n as f64 * p).round() as usize;
    let htn_count = quota(params.target_prevalence.htn);
    let hypok_count = quota(params.target_prevalence.htn_hypok).min(htn_count);
    let atrh_count = quota(params.target_prevalence.atrh).min(htn_count);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(params.seed, &[10])));
    let htn_rows = &order[..htn_count];
    let mut hypok_pool = htn_rows.to_vec();
    hypok_pool.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(params.seed, &[11])));
    let mut atrh_pool = htn_rows.to_vec();
    atrh_pool.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(params.seed, &[12])));

    let mut is_htn = vec![false; n];
    let mut is_hypok = vec![false; n];
    let mut is_atrh = vec![false; n];
    for &i in htn_rows {
        is_htn[i] = true;
    }
    for &i in &hypok_pool[..hypok_count] {
        is_hypok[i] = true;
    }
    for &i in &atrh_pool[..atrh_count] {
        is_atrh[i] = true;
    }

    let width = (n.max(2) - 1).to_string().len().max(4);
    let rows = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, &[20, i as u64]));
            generate_row(
                format!("P{i:0width$}"),
                &mut rng,
                params,
                &schema,
                is_htn[i],
                is_hypok[i],
                is_atrh[i],
            )
        })
        .collect();

    Ok(CohortTable { schema, rows, provenance: Provenance::Generated { seed: params.seed, n } })
}

#[allow(clippy::too_many_arguments)]
fn generate_row(
    id: String,
    rng: &mut ChaCha8Rng,
    params: &GeneratorParams,
    schema: &FeatureSchema,
    htn: bool,
    hypok: bool,
    atrh: bool,
) -> PatientRecord {
    let severity: f64 = Gamma::new(2.0, 1.0).unwrap().sample(rng);
    let severity = severity.min(6.0);
    let s = severity;
    let sm = s.min(3.0);
    let h = if htn { 1.0 } else { 0.0 };
    let a = if atrh { 1.0 } else { 0.0 };

    let age = norm(rng, params.age_mean, params.age_sd).clamp(18.0, 110.0);
    let sex = if rng.gen_bool(params.sex_f_fraction) { Sex::F } else { Sex::M };
    let u: f64 = rng.gen();
    let race = if u < params.race_fractions.black {
        Race::Black
    } else if u < params.race_fractions.black + params.race_fractions.other {
        Race::Other
    } else {
        Race::White
    };

    // Rule-bearing counts: conditioned on labels so the heuristics hold
    // exactly (see module docs).
    let htn_dx_count = if htn {
        2.0 + pois(rng, 1.5 + 0.8 * s)
    } else if rng.gen_bool(f64::min(0.25 + 0.05 * sm, 0.4)) {
        1.0
    } else {
        0.0
    };
    let re_htn_sum = pois(rng, 3.0 * htn_dx_count);

    let (meds3, sum4p) = if atrh {
        if rng.gen_bool(0.6) {
            (2.0 + pois(rng, 1.0 + 0.6 * s), pois(rng, 0.9))
        } else {
            (pois(rng, 0.8).min(1.0), 2.0 + pois(rng, 0.8 + 0.4 * s))
        }
    } else {
        (pois(rng, 0.35 + 0.25 * h).min(1.0), pois(rng, 0.25 + 0.2 * h).min(1.0))
    };
    let high_bp_meds_4p = binom(rng, sum4p, 0.45);

    let (low_k, med_k, dx_k) = if hypok {
        (2.0 + pois(rng, 1.0 + 0.5 * s), pois(rng, 0.8 + 0.3 * s), pois(rng, 0.6))
    } else if htn {
        (pois(rng, 0.3).min(1.0), pois(rng, 0.25).min(1.0), pois(rng, 0.2).min(1.0))
    } else {
        (pois(rng, 0.25 + 0.05 * sm), pois(rng, 0.15), pois(rng, 0.1))
    };
    let test_k = low_k + pois(rng, 1.5 + 0.5 * s);

    let bp_n = 4.0 + pois(rng, 6.0 + 2.0 * s + 2.0 * h);
    let high_bp_n = binom(rng, bp_n, (0.12 + 0.28 * h + 0.04 * sm).min(0.85));
    let meds1 = if htn { pois(rng, 0.6 + 0.4 * s) } else { pois(rng, 0.2).min(2.0) };
    let meds2 = if htn { pois(rng, 0.4 + 0.3 * s) } else { pois(rng, 0.15).min(2.0) };

    let enc_n = 3.0 + pois(rng, 5.0 + 3.0 * s + 2.0 * h);
    let dx_n = 1.0 + pois(rng, 4.0 + 2.0 * s + 2.0 * h + if hypok { 1.0 } else { 0.0 } + a);
    let med_n = pois(rng, 2.0 + 1.5 * s + 2.0 * h + 2.0 * a);
    let med_htn_n = if atrh {
        3.0 + pois(rng, 0.7)
    } else if htn {
        pois(rng, 1.2).min(3.0)
    } else {
        pois(rng, 0.2).min(1.0)
    };

    let mean_systolic = norm(rng, 118.0 + 6.0 * sm + 10.0 * h + 6.0 * a, 8.0);
    let median_systolic = mean_systolic + norm(rng, 0.0, 2.0);
    let mean_diastolic = norm(rng, 72.0 + 3.0 * sm + 5.0 * h, 6.0);
    let median_diastolic = mean_diastolic + norm(rng, 0.0, 1.5);
    let max_systolic = mean_systolic + 12.0 + norm(rng, 0.0, 8.0).abs() + 3.0 * sm;
    let sd_systolic = norm(rng, 10.0 + 1.5 * sm, 3.0).abs().max(1.0);
    let weight_median = norm(rng, 82.0, 16.0).max(40.0);
    let bmi_median = norm(rng, 26.0 + 1.2 * sm + 1.5 * h, 4.0).clamp(15.0, 60.0);
    let dx_days = pois(rng, 400.0 + 150.0 * s + 300.0 * h);
    let practice_type = if rng.gen_bool((0.35 + 0.2 * a).min(1.0)) { 1.0 } else { 0.0 };
    let zip_cat = rng.gen_range(1..=9) as f64;

    let pairs: [(&str, f64); 28] = [
        ("mean_systolic", mean_systolic),
        ("median_systolic", median_systolic),
        ("mean_diastolic", mean_diastolic),
        ("median_diastolic", median_diastolic),
        ("bp_n", bp_n),
        ("high_bp_n", high_bp_n),
        ("high_BP_during_htn_meds_1", meds1),
        ("high_BP_during_htn_meds_2", meds2),
        ("high_BP_during_htn_meds_3", meds3),
        ("high_BP_during_htn_meds_4_plus", high_bp_meds_4p),
        ("sum_enc_during_htn_meds_4_plus", sum4p),
        ("low_K_N", low_k),
        ("test_K_N", test_k),
        ("Med_Potassium_N", med_k),
        ("Dx_HypoK_N", dx_k),
        ("re_htn_sum", re_htn_sum),
        ("htn_dx_count", htn_dx_count),
        ("enc_N", enc_n),
        ("Dx_N", dx_n),
        ("MED_N", med_n),
        ("Med_HTN_N", med_htn_n),
        ("weight_median", weight_median),
        ("bmi_median", bmi_median),
        ("max_systolic", max_systolic),
        ("sd_systolic", sd_systolic),
        ("dx_days_x", dx_days),
        ("practice_type", practice_type),
        ("zip_cat", zip_cat),
    ];
    let mut values = vec![None; schema.len()];
    for (name, v) in pairs {
        let idx = schema.index_of(name).expect("canonical schema feature");
        values[idx] = Some(v);
    }
    for (idx, def) in schema.entries().iter().enumerate() {
        if def.kind == FeatureKind::Continuous && rng.gen_bool(MISSING_RATE) {
            values[idx] = None;
        }
    }

    let mut labels = Labels::default();
    labels.htn.heuristic = htn;
    labels.htn_hypok.heuristic = hypok;
    labels.atrh.heuristic = atrh;
    for ph in super::Phenotype::ALL {
        let pair = labels.get_mut(ph);
        pair.dx = if pair.heuristic {
            !rng.gen_bool(params.label_noise.fn_rate)
        } else {
            rng.gen_bool(params.label_noise.fp_rate)
        };
    }

    PatientRecord { id, age, sex, race, values, labels }
}

fn pois(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        0.0
    } else {
        Poisson::new(lambda).expect("positive finite lambda").sample(rng)
    }
}

fn norm(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite parameters").sample(rng)
}

fn binom(rng: &mut ChaCha8Rng, n: f64, p: f64) -> f64 {
    Binomial::new(n as u64, p.clamp(0.0, 1.0)).expect("valid binomial").sample(rng) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{apply_heuristic, LabelSource, Phenotype};

    #[test]
    fn default_cohort_hits_paper_prevalences() {
        let t = generate_cohort(&GeneratorParams::default()).unwrap();
        assert_eq!(t.len(), 1199);
        let count = |ph| {
            t.rows
                .iter()
                .filter(|r| r.label(ph, LabelSource::Heuristic))
                .count()
        };
        assert_eq!(count(Phenotype::Htn), 608);
        assert_eq!(count(Phenotype::HtnHypoK), 171);
        assert_eq!(count(Phenotype::Atrh), 176);
        let prev = count(Phenotype::Htn) as f64 / 1199.0;
        assert!((0.487..=0.527).contains(&prev));
    }

    #[test]
    fn zero_prevalence_gives_no_positives() {
        let params = GeneratorParams {
            n: 10,
            seed: 7,
            target_prevalence: PrevalenceTargets { atrh: 0.0, ..Default::default() },
            ..Default::default()
        };
        let t = generate_cohort(&params).unwrap();
        assert!(t.rows.iter().all(|r| !r.label(Phenotype::Atrh, LabelSource::Heuristic)));
    }

    #[test]
    fn labels_match_heuristics_by_construction() {
        for seed in [1, 2, 3] {
            let params = GeneratorParams { n: 400, seed, ..Default::default() };
            let t = generate_cohort(&params).unwrap();
            for row in &t.rows {
                for ph in Phenotype::ALL {
                    let rule = apply_heuristic(ph, &t.schema, row).unwrap();
                    assert_eq!(
                        rule,
                        row.label(ph, LabelSource::Heuristic),
                        "seed {seed} row {} phenotype {ph}",
                        row.id
                    );
                }
            }
        }
    }

    #[test]
    fn hypok_is_nested_in_htn() {
        let t = generate_cohort(&GeneratorParams { n: 800, seed: 5, ..Default::default() }).unwrap();
        for row in &t.rows {
            if row.label(Phenotype::HtnHypoK, LabelSource::Heuristic) {
                assert!(row.label(Phenotype::Htn, LabelSource::Heuristic));
            }
        }
    }

    #[test]
    fn larger_cohort_prevalence_within_tolerance() {
        let t = generate_cohort(&GeneratorParams { n: 2000, seed: 3, ..Default::default() }).unwrap();
        let prev = t
            .rows
            .iter()
            .filter(|r| r.label(Phenotype::Atrh, LabelSource::Heuristic))
            .count() as f64
            / 2000.0;
        assert!((prev - 0.147).abs() <= 0.02, "prev={prev}");
    }

    #[test]
    fn deterministic_per_seed() {
        let params = GeneratorParams { n: 300, seed: 9, ..Default::default() };
        assert_eq!(generate_cohort(&params).unwrap(), generate_cohort(&params).unwrap());
        let other = GeneratorParams { seed: 10, ..params };
        assert_ne!(generate_cohort(&params).unwrap(), generate_cohort(&other).unwrap());
    }

    #[test]
    fn dx_noise_rates_are_close_to_configured() {
        let params = GeneratorParams { n: 2000, seed: 4, ..Default::default() };
        let t = generate_cohort(&params).unwrap();
        for ph in Phenotype::ALL {
            let mut pos = 0usize;
            let mut fn_flips = 0usize;
            let mut neg = 0usize;
            let mut fp_flips = 0usize;
            for row in &t.rows {
                let pair = row.labels.get(ph);
                if pair.heuristic {
                    pos += 1;
                    if !pair.dx {
                        fn_flips += 1;
                    }
                } else {
                    neg += 1;
                    if pair.dx {
                        fp_flips += 1;
                    }
                }
            }
            let check = |flips: usize, total: usize, rate: f64| {
                let observed = flips as f64 / total as f64;
                let sd = (rate * (1.0 - rate) / total as f64).sqrt();
                assert!(
                    (observed - rate).abs() <= 3.0 * sd,
                    "{ph}: observed {observed}, want {rate} +/- {}",
                    3.0 * sd
                );
            };
            check(fn_flips, pos, 0.10);
            check(fp_flips, neg, 0.02);
        }
    }

    #[test]
    fn continuous_features_go_missing_counts_do_not() {
        let t = generate_cohort(&GeneratorParams { n: 2000, seed: 6, ..Default::default() }).unwrap();
        let missing_fraction = |name: &str| {
            let idx = t.schema.index_of(name).unwrap();
            t.rows.iter().filter(|r| r.values[idx].is_none()).count() as f64 / t.len() as f64
        };
        assert!(missing_fraction("bp_n") == 0.0);
        assert!(missing_fraction("low_K_N") == 0.0);
        let m = missing_fraction("mean_systolic");
        assert!(m > 0.02 && m < 0.09, "missing fraction {m}");
    }

    #[test]
    fn demographics_track_targets() {
        let t = generate_cohort(&GeneratorParams { n: 2000, seed: 8, ..Default::default() }).unwrap();
        let f_frac = t.rows.iter().filter(|r| r.sex == Sex::F).count() as f64 / 2000.0;
        assert!((f_frac - 0.615).abs() < 0.04, "female fraction {f_frac}");
        let black = t.rows.iter().filter(|r| r.race == Race::Black).count() as f64 / 2000.0;
        assert!((black - 0.282).abs() < 0.04, "black fraction {black}");
        let mean_age = t.rows.iter().map(|r| r.age).sum::<f64>() / 2000.0;
        assert!((mean_age - 57.2).abs() < 1.8, "mean age {mean_age}");
        assert!(t.rows.iter().all(|r| (18.0..=110.0).contains(&r.age)));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let params = GeneratorParams {
            target_prevalence: PrevalenceTargets { htn: 1.4, ..Default::default() },
            ..Default::default()
        };
        assert!(matches!(generate_cohort(&params), Err(CohortError::Config(_))));
        let params = GeneratorParams { n: 0, ..Default::default() };
        assert!(matches!(generate_cohort(&params), Err(CohortError::Config(_))));
        let params = GeneratorParams {
            race_fractions: RaceFractions { black: 0.5, other: 0.5, white: 0.5 },
            ..Default::default()
        };
        assert!(matches!(generate_cohort(&params), Err(CohortError::Config(_))));
    }
}
