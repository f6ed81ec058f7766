//! Mask perturbations, similarity weights and the weighted surrogate design.

mod variance;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use variance::{analytic_variance, empirical_variance, generic_contributions, VarianceReport};

/// Upper bound on the masked fraction of blocks.
pub const MAX_MASK_RATIO: f64 = 0.3;
pub const DEFAULT_RATIO: f64 = 0.3;
pub const DEFAULT_LAMBDA: f64 = 0.25;
pub const DEFAULT_SAMPLES: usize = 500;

/// Which blocks of an instance survive one perturbation (`true` = kept).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    kept: Vec<bool>,
}

impl Mask {
    pub fn new(kept: Vec<bool>) -> Self {
        Self { kept }
    }

    pub fn all_kept(n: usize) -> Self {
        Self { kept: vec![true; n] }
    }

    /// Mask over `n` blocks with exactly `masked` removed.
    pub fn with_masked(n: usize, masked: &[usize]) -> Self {
        let mut kept = vec![true; n];
        for &j in masked {
            kept[j] = false;
        }
        Self { kept }
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn is_kept(&self, j: usize) -> bool {
        self.kept[j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.kept
    }

    pub fn masked_count(&self) -> usize {
        self.kept.iter().filter(|&&k| !k).count()
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        self.kept.iter().enumerate().filter(|(_, &k)| !k).map(|(j, _)| j).collect()
    }

    /// 1.0 for kept blocks, 0.0 for masked ones.
    pub fn indicator(&self) -> Vec<f64> {
        self.kept.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect()
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.kept.iter().map(|&k| u8::from(k)))
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(deserializer)?;
        bits.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!("mask entries must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Mask::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Exactly `floor(alpha * n)` blocks masked per sample.
    FixedCount,
    /// Every block masked independently with probability `alpha`.
    Bernoulli,
    /// Per-sample rate `q ~ Beta` with mean `alpha` and variance `sigma_q2`, then Bernoulli(q).
    MonteCarloRate { sigma_q2: f64 },
}

/// `floor(alpha * n)`, tolerant of representation error in `alpha`.
pub fn masked_count(n: usize, alpha: f64) -> usize {
    (alpha * n as f64 + 1e-9).floor() as usize
}

fn check_ratio(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= MAX_MASK_RATIO) {
        return Err(Error::validation(format!(
            "mask ratio must lie in (0, {MAX_MASK_RATIO}], got {alpha}"
        )));
    }
    Ok(())
}

/// Beta distribution with the given mean and variance.
fn rate_distribution(mean: f64, variance: f64) -> Result<Option<Beta<f64>>> {
    if !(variance >= 0.0 && variance < mean * (1.0 - mean)) {
        return Err(Error::validation(format!(
            "rate variance must lie in [0, {}) for mean {mean}, got {variance}",
            mean * (1.0 - mean)
        )));
    }
    if variance == 0.0 {
        return Ok(None);
    }
    let concentration = mean * (1.0 - mean) / variance - 1.0;
    let beta = Beta::new(mean * concentration, (1.0 - mean) * concentration)
        .map_err(|e| Error::validation(format!("rate distribution: {e}")))?;
    Ok(Some(beta))
}

pub fn generate_masks(n: usize, count: usize, alpha: f64, policy: MaskPolicy, seed: u64) -> Result<Vec<Mask>> {
    if n == 0 {
        return Err(Error::validation("masks need at least one block"));
    }
    if count == 0 {
        return Err(Error::validation("sample count must be at least 1"));
    }
    check_ratio(alpha)?;
    let mut rng = rng::stream(seed, 0);
    match policy {
        MaskPolicy::FixedCount => {
            let m = masked_count(n, alpha);
            if m == 0 {
                return Err(Error::Degenerate(format!(
                    "floor({alpha} * {n}) = 0 blocks would be masked under the fixed-count policy"
                )));
            }
            Ok((0..count)
                .map(|_| Mask::with_masked(n, &rand::seq::index::sample(&mut rng, n, m).into_vec()))
                .collect())
        }
        MaskPolicy::Bernoulli => Ok((0..count)
            .map(|_| Mask::new((0..n).map(|_| !rng.random_bool(alpha)).collect()))
            .collect()),
        MaskPolicy::MonteCarloRate { sigma_q2 } => {
            let rate = rate_distribution(alpha, sigma_q2)?;
            Ok((0..count)
                .map(|_| {
                    let q = rate.as_ref().map_or(alpha, |beta| beta.sample(&mut rng));
                    Mask::new((0..n).map(|_| !rng.random_bool(q)).collect())
                })
                .collect())
        }
    }
}

/// Kept fraction of the blocks.
pub fn similarity(mask: &Mask) -> f64 {
    if mask.is_empty() {
        return 1.0;
    }
    (mask.len() - mask.masked_count()) as f64 / mask.len() as f64
}

/// `exp(-lambda * (1 - sim))`.
pub fn exp_weight(sim: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::validation(format!("lambda must be positive, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&sim) {
        return Err(Error::validation(format!("similarity must lie in [0, 1], got {sim}")));
    }
    Ok((-lambda * (1.0 - sim)).exp())
}

/// Masks, their similarity weights and (optionally) the model's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    n: usize,
    lambda: f64,
    seed: u64,
    masks: Vec<Mask>,
    sim: Vec<f64>,
    weight: Vec<f64>,
    scores: Option<Vec<f64>>,
}

pub fn build_design(masks: Vec<Mask>, scores: Option<Vec<f64>>, lambda: f64) -> Result<PerturbationSet> {
    let n = masks.first().map(Mask::len).ok_or_else(|| Error::validation("design needs at least one mask"))?;
    if n == 0 {
        return Err(Error::validation("masks must cover at least one block"));
    }
    if let Some(bad) = masks.iter().position(|m| m.len() != n) {
        return Err(Error::validation(format!("mask {bad} has {} blocks, expected {n}", masks[bad].len())));
    }
    if let Some(scores) = &scores {
        if scores.len() != masks.len() {
            return Err(Error::validation(format!(
                "{} scores for {} masks",
                scores.len(),
                masks.len()
            )));
        }
        if let Some(k) = scores.iter().position(|y| !y.is_finite()) {
            return Err(Error::validation(format!("score {k} is not finite")));
        }
    }
    let sim: Vec<f64> = masks.iter().map(similarity).collect();
    let weight = sim.iter().map(|&s| exp_weight(s, lambda)).collect::<Result<Vec<_>>>()?;
    Ok(PerturbationSet { n, lambda, seed: 0, masks, sim, weight, scores })
}

impl PerturbationSet {
    #[must_use]
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of perturbations.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn similarities(&self) -> &[f64] {
        &self.sim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    /// Row `k` of the surrogate's input: `adj_k * mu_k`.
    pub fn design_row(&self, k: usize) -> Vec<f64> {
        let w = self.weight[k];
        self.masks[k].as_slice().iter().map(|&kept| if kept { w } else { 0.0 }).collect()
    }

    pub fn design_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.design_row(k)).collect()
    }

    /// Splits off the rows from `at` onwards, keeping generation order.
    pub fn split_at(&self, at: usize) -> (PerturbationSet, PerturbationSet) {
        let at = at.min(self.len());
        let part = |range: std::ops::Range<usize>| PerturbationSet {
            n: self.n,
            lambda: self.lambda,
            seed: self.seed,
            masks: self.masks[range.clone()].to_vec(),
            sim: self.sim[range.clone()].to_vec(),
            weight: self.weight[range.clone()].to_vec(),
            scores: self.scores.as_ref().map(|s| s[range].to_vec()),
        };
        (part(0..at), part(at..self.len()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PerturbationFile::from(self)).expect("perturbation set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PerturbationFile = serde_json::from_str(text)?;
        let set = build_design(file.masks, file.scores, file.lambda)?.with_seed(file.seed);
        if set.n != file.n {
            return Err(Error::Format(format!("declared n = {} but masks have {} blocks", file.n, set.n)));
        }
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct PerturbationFile {
    n: usize,
    lambda: f64,
    seed: u64,
    masks: Vec<Mask>,
    scores: Option<Vec<f64>>,
}

impl From<&PerturbationSet> for PerturbationFile {
    fn from(set: &PerturbationSet) -> Self {
        Self {
            n: set.n,
            lambda: set.lambda,
            seed: set.seed,
            masks: set.masks.clone(),
            scores: set.scores.clone(),
        }
    }
}
