use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ImpactError;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1).
    pub std: f64,
    /// Moment coefficient of skewness, m3 / m2^1.5.
    pub skewness: f64,
    /// m4 / m2^2 - 3.
    pub excess_kurtosis: f64,
}

pub fn moments(sample: &[f64]) -> Result<MomentSummary, ImpactError> {
    let n = sample.len();
    if n < 2 {
        return Err(ImpactError::TooFew { needed: 2, got: n });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(ImpactError::NonFinite);
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in sample {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    if m2 == 0.0 {
        return Err(ImpactError::ZeroVariance);
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    Ok(MomentSummary {
        n,
        mean,
        std,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    const TERMS: usize = 100;
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi theta form converges fast for small arguments.
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=TERMS)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        2.0 * (1..=TERMS)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum::<f64>()
    };
    p.clamp(0.0, 1.0)
}

/// Largest gap between the empirical CDF of `sample` and `cdf`, checked on both
/// sides of every step.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = cdf(*x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against a fully specified distribution.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, ImpactError> {
    if sample.is_empty() {
        return Err(ImpactError::EmptySample);
    }
    let d = ks_statistic(sample, cdf);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf((sample.len() as f64).sqrt() * d),
    })
}

/// KS test against the normal with the sample's own mean and standard deviation.
/// No Lilliefors correction is applied, so the p-value is conservative.
pub fn ks_normality(sample: &[f64]) -> Result<KsResult, ImpactError> {
    if sample.len() < 8 {
        return Err(ImpactError::TooFew {
            needed: 8,
            got: sample.len(),
        });
    }
    let m = moments(sample)?;
    let dist = Normal::new(m.mean, m.std).map_err(|_| ImpactError::ZeroVariance)?;
    ks_test(sample, |x| dist.cdf(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwuMethod {
    /// Exact below the enumeration limit, normal approximation above it.
    Auto,
    Exact,
    Normal,
}

/// Pooled size up to which `Auto` enumerates.
pub const MWU_EXACT_LIMIT: usize = 12;
const MWU_ENUMERATION_MAX: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: MwuMethod,
}

/// Ranks with ties replaced by the average of their positions (1-based).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult, ImpactError> {
    mann_whitney_u_with(a, b, MwuMethod::Auto)
}

pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    method: MwuMethod,
) -> Result<MwuResult, ImpactError> {
    if a.is_empty() || b.is_empty() {
        return Err(ImpactError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(ImpactError::NonFinite);
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let method = match method {
        MwuMethod::Auto if n <= MWU_EXACT_LIMIT => MwuMethod::Exact,
        MwuMethod::Auto => MwuMethod::Normal,
        m => m,
    };
    let p_value = match method {
        MwuMethod::Exact => {
            if n > MWU_ENUMERATION_MAX {
                return Err(ImpactError::TooLargeForExact(n));
            }
            exact_p(&ranks, na, u)
        }
        _ => normal_p(&pooled, na, nb, u),
    };
    Ok(MwuResult { u, p_value, method })
}

/// Share of all size-`na` rank subsets whose U is at least as far from its mean as `u`.
fn exact_p(ranks: &[f64], na: usize, u: f64) -> f64 {
    let n = ranks.len();
    let mu = (na * (n - na)) as f64 / 2.0;
    let obs = (u - mu).abs() - 1e-9;
    let offset = (na * (na + 1)) as f64 / 2.0;
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        let r: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if (r - offset - mu).abs() >= obs {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn normal_p(pooled: &[f64], na: usize, nb: usize, u: f64) -> f64 {
    let n = (na + nb) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let mu = (na * nb) as f64 / 2.0;
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * std_normal().sf(z)).min(1.0)
}
