//! Variance of a linear score under the three masking policies.
//!
//! The score is `f = f0 + sum_j c_j * mu_j` with `mu_j = 1` for kept blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate_masks, MaskPolicy};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub analytic_fixed: f64,
    pub analytic_random: f64,
    pub analytic_mc: f64,
    pub empirical_fixed: Option<f64>,
    pub empirical_random: Option<f64>,
    pub empirical_mc: Option<f64>,
    pub n: usize,
    pub alpha: f64,
    pub sigma_q2: f64,
    pub sample_count: usize,
    pub seed: u64,
}

/// Closed-form variances:
///
/// - fixed: `a(1-a) * ((1 + 1/(n-1)) * sum c^2 - (sum c)^2 / (n-1))`
/// - random: `a(1-a) * sum c^2`
/// - Monte Carlo: `(a(1-a) + sigma_q2) * sum c^2`
pub fn analytic_variance(c: &[f64], f0: f64, n: usize, alpha: f64, sigma_q2: f64) -> Result<VarianceReport> {
    if n < 2 {
        return Err(Error::validation("variance formulas need n >= 2"));
    }
    if c.len() != n {
        return Err(Error::validation(format!("{} contributions for n = {n}", c.len())));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(sigma_q2 >= 0.0) {
        return Err(Error::validation(format!("sigma_q2 must be non-negative, got {sigma_q2}")));
    }
    if !f0.is_finite() || c.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("contributions must be finite"));
    }
    let sum: f64 = c.iter().sum();
    let sum_sq: f64 = c.iter().map(|x| x * x).sum();
    let base = alpha * (1.0 - alpha);
    let m = (n - 1) as f64;
    // clamp the cancellation residue of exactly-equal contributions
    let fixed = (base * ((1.0 + 1.0 / m) * sum_sq - sum * sum / m)).max(0.0);
    Ok(VarianceReport {
        analytic_fixed: fixed,
        analytic_random: base * sum_sq,
        analytic_mc: (base + sigma_q2) * sum_sq,
        empirical_fixed: None,
        empirical_random: None,
        empirical_mc: None,
        n,
        alpha,
        sigma_q2,
        sample_count: 0,
        seed: 0,
    })
}

/// Seeded positive contributions drawn uniformly from `[0.5, 1.5)`.
pub fn generic_contributions(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0x636f_6e74);
    (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
}

/// Analytic report plus the sample variance of `f` under each policy.
pub fn empirical_variance(
    c: &[f64],
    f0: f64,
    n: usize,
    alpha: f64,
    sigma_q2: f64,
    samples: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if samples < 1000 {
        return Err(Error::validation(format!("empirical variance needs >= 1000 samples, got {samples}")));
    }
    let mut report = analytic_variance(c, f0, n, alpha, sigma_q2)?;
    let sample_variance = |policy: MaskPolicy, stream: u64| -> Result<f64> {
        let masks = generate_masks(n, samples, alpha, policy, seed.wrapping_add(stream))?;
        let values: Vec<f64> = masks
            .iter()
            .map(|m| f0 + m.as_slice().iter().zip(c).filter(|(&kept, _)| kept).map(|(_, cj)| cj).sum::<f64>())
            .collect();
        let mean = values.iter().sum::<f64>() / samples as f64;
        Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (samples - 1) as f64)
    };
    report.empirical_fixed = Some(sample_variance(MaskPolicy::FixedCount, 0)?);
    report.empirical_random = Some(sample_variance(MaskPolicy::Bernoulli, 1)?);
    report.empirical_mc = Some(sample_variance(MaskPolicy::MonteCarloRate { sigma_q2 }, 2)?);
    report.sample_count = samples;
    report.seed = seed;
    Ok(report)
}
