//! Two-sided Mann-Whitney-Wilcoxon tests with Holm step-down correction.

use std::fmt;

use super::rank::average_ranks;
use super::EvalError;

/// Significance buckets applied to the corrected p-values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SignificanceTier {
    NotSignificant,
    P05,
    P01,
    P001,
    P0001,
}

impl SignificanceTier {
    pub fn from_p(p: f64) -> SignificanceTier {
        if p <= 1e-4 {
            SignificanceTier::P0001
        } else if p <= 1e-3 {
            SignificanceTier::P001
        } else if p <= 1e-2 {
            SignificanceTier::P01
        } else if p <= 5e-2 {
            SignificanceTier::P05
        } else {
            SignificanceTier::NotSignificant
        }
    }
}

impl fmt::Display for SignificanceTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignificanceTier::NotSignificant => "ns",
            SignificanceTier::P05 => "*",
            SignificanceTier::P01 => "**",
            SignificanceTier::P001 => "***",
            SignificanceTier::P0001 => "****",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub tier: SignificanceTier,
}

/// Two-sided Mann-Whitney-Wilcoxon p-value for one pair of groups.
///
/// Small groups (both sizes at most 8) use exact enumeration of the
/// permutation distribution conditioned on the observed ranks; larger
/// groups use the normal approximation with tie and continuity correction.
pub fn mann_whitney_p(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Input("both comparison groups must be nonempty".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::Input("comparison groups contain non-finite values".into()));
    }
    let n = a.len();
    let m = b.len();
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..n].iter().sum();
    let u = rank_sum_a - (n * (n + 1)) as f64 / 2.0;
    let mu = (n * m) as f64 / 2.0;

    if n <= 8 && m <= 8 {
        return Ok(exact_two_sided(&ranks, n, u, mu));
    }

    let total = (n + m) as f64;
    let tie_term: f64 = tie_group_sizes(&pooled)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = (n * m) as f64 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(libm::erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

/// Holm step-down adjustment; returns corrected p-values in input order.
pub fn holm_adjust(raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let stepped = ((m - rank) as f64 * raw[i]).min(1.0);
        running = running.max(stepped);
        adjusted[i] = running;
    }
    adjusted
}

/// Runs every comparison, corrects across them, and buckets significance.
pub fn mwu_holm(groups: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<Comparison>, EvalError> {
    let raw: Vec<f64> = groups
        .iter()
        .map(|(a, b)| mann_whitney_p(a, b))
        .collect::<Result<_, _>>()?;
    let adjusted = holm_adjust(&raw);
    Ok(raw
        .into_iter()
        .zip(adjusted)
        .map(|(p_raw, p_adjusted)| Comparison {
            p_raw,
            p_adjusted,
            tier: SignificanceTier::from_p(p_adjusted),
        })
        .collect())
}

/// Share of all C(n+m, n) group assignments whose U deviates from the mean
/// at least as much as observed.
fn exact_two_sided(ranks: &[f64], n: usize, u_obs: f64, mu: f64) -> f64 {
    let total = ranks.len();
    let threshold = (u_obs - mu).abs() - 1e-9;
    let offset = (n * (n + 1)) as f64 / 2.0;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut hits = 0u64;
    let mut count = 0u64;
    loop {
        let rank_sum: f64 = indices.iter().map(|&i| ranks[i]).sum();
        let u = rank_sum - offset;
        if (u - mu).abs() >= threshold {
            hits += 1;
        }
        count += 1;
        // Advance to the next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return hits as f64 / count as f64;
            }
            i -= 1;
            if indices[i] != i + total - n {
                break;
            }
        }
        indices[i] += 1;
        for j in i + 1..n {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

fn tie_group_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        sizes.push(j - i);
        i = j;
    }
    sizes
}
