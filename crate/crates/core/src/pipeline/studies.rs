use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{explain, with_policy, RunConfig};
use crate::error::{Error, Result};
use crate::evaluation::jaccard_stability;
use crate::perturbation::MaskPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStability {
    pub policy: MaskPolicy,
    pub seeds: Vec<u64>,
    pub top_sets: Vec<Vec<usize>>,
    /// Mean pairwise Jaccard of the top sets.
    pub jaccard: f64,
    /// Held-out surrogate R² of every run, then their mean.
    pub heldout_r2: Vec<f64>,
    pub heldout_r2_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub top_k: usize,
    pub policies: Vec<PolicyStability>,
}

impl StabilityReport {
    pub fn jaccard(&self, policy: MaskPolicy) -> Option<f64> {
        self.policies.iter().find(|p| p.policy == policy).map(|p| p.jaccard)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn repeat_runs(config: &RunConfig, seeds: &[u64]) -> Result<PolicyStability> {
    let mut top_sets = Vec::with_capacity(seeds.len());
    let mut heldout_r2 = Vec::new();
    for &seed in seeds {
        let report = explain(&RunConfig { seed, ..config.clone() })?;
        let k = config.top_k.min(report.n);
        top_sets.push(report.ranking[..k].to_vec());
        heldout_r2.extend(report.heldout_r2);
    }
    Ok(PolicyStability {
        policy: config.policy,
        seeds: seeds.to_vec(),
        jaccard: jaccard_stability(&top_sets)?,
        heldout_r2_mean: mean(&heldout_r2),
        heldout_r2,
        top_sets,
    })
}

/// Runs `explain` under each masking policy once per seed.
pub fn stability_study_seeds(config: &RunConfig, seeds: &[u64]) -> Result<StabilityReport> {
    if seeds.len() < 2 {
        return Err(Error::validation("a stability study needs at least two runs"));
    }
    let policies = [
        MaskPolicy::FixedCount,
        MaskPolicy::Bernoulli,
        MaskPolicy::MonteCarloRate { sigma_q2: config.sigma_q2 },
    ];
    let policies = policies
        .into_iter()
        .map(|policy| repeat_runs(&with_policy(config, policy), seeds))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport { top_k: config.top_k, policies })
}

/// `repeats` runs per policy with seeds `seed, seed + 1, ...`.
pub fn stability_study(config: &RunConfig, repeats: usize) -> Result<StabilityReport> {
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| config.seed.wrapping_add(r)).collect();
    stability_study_seeds(config, &seeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Alpha,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(Error::validation(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub jaccard: f64,
    pub heldout_r2: Vec<f64>,
    pub heldout_r2_mean: Option<f64>,
}

/// For every value of `param`, `repeats` seeded runs under the configured policy.
pub fn sweep(config: &RunConfig, param: SweepParam, values: &[f64], repeats: usize) -> Result<Vec<SweepRow>> {
    if repeats < 2 {
        return Err(Error::validation("a sweep needs at least two runs per value"));
    }
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| config.seed.wrapping_add(r)).collect();
    values
        .iter()
        .map(|&value| {
            let mut point = config.clone();
            match param {
                SweepParam::Lambda => point.lambda = value,
                SweepParam::Alpha => point.alpha = value,
            }
            let runs = repeat_runs(&point, &seeds)?;
            Ok(SweepRow {
                param,
                value,
                jaccard: runs.jaccard,
                heldout_r2: runs.heldout_r2,
                heldout_r2_mean: runs.heldout_r2_mean,
            })
        })
        .collect()
}

/// Header `param,value,jaccard,heldout_r2_mean,heldout_r2_runs`; runs are `;`-separated.
pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(format!("writing CSV: {e}"));
    writer
        .write_record(["param", "value", "jaccard", "heldout_r2_mean", "heldout_r2_runs"])
        .map_err(csv_err)?;
    for row in rows {
        let param = match row.param {
            SweepParam::Lambda => "lambda",
            SweepParam::Alpha => "alpha",
        };
        let runs: Vec<String> = row.heldout_r2.iter().map(f64::to_string).collect();
        writer
            .write_record([
                param.to_owned(),
                row.value.to_string(),
                row.jaccard.to_string(),
                row.heldout_r2_mean.map_or_else(String::new, |m| m.to_string()),
                runs.join(";"),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::Format(format!("writing CSV: {e}")))?;
    Ok(())
}
