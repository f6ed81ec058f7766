//! Expert-consistency, stability and fidelity metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::coalition::descending_order;
use crate::error::{Error, Result};

/// Expert-selected items, most important first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertAnnotation {
    pub items: Vec<usize>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

impl ExpertAnnotation {
    pub fn new(items: Vec<usize>) -> Result<Self> {
        check_distinct(&items, "expert annotation")?;
        Ok(Self { items, labels: None })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The model's top items by descending score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRanking {
    pub items: Vec<usize>,
}

impl ModelRanking {
    pub fn new(items: Vec<usize>) -> Result<Self> {
        check_distinct(&items, "model ranking")?;
        Ok(Self { items })
    }

    /// Top `m` indices of `phi`, ties broken by lower index.
    pub fn top(phi: &[f64], m: usize) -> Self {
        let mut items = descending_order(phi);
        items.truncate(m);
        Self { items }
    }
}

fn check_distinct(items: &[usize], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &i in items {
        if !seen.insert(i) {
            return Err(Error::validation(format!("{what} lists item {i} twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub match_count: usize,
    pub accuracy: f64,
    pub tau: f64,
    /// True when fewer than two items matched and `tau` is 0 by convention.
    pub tau_undefined: bool,
    pub concordant: usize,
    pub discordant: usize,
}

fn check_pair(expert: &ExpertAnnotation, model: &ModelRanking) -> Result<()> {
    check_distinct(&expert.items, "expert annotation")?;
    check_distinct(&model.items, "model ranking")?;
    if expert.items.is_empty() || model.items.is_empty() {
        return Err(Error::validation("expert and model lists must be non-empty"));
    }
    if expert.items.len() != model.items.len() {
        return Err(Error::validation(format!(
            "expert lists {} items but the model ranking has {}",
            expert.items.len(),
            model.items.len()
        )));
    }
    Ok(())
}

/// Overlap of the two lists as sets: `(|H|, |H| / m)`.
pub fn h_score(expert: &ExpertAnnotation, model: &ModelRanking) -> Result<(usize, f64)> {
    check_pair(expert, model)?;
    let model_set: BTreeSet<usize> = model.items.iter().copied().collect();
    let matched = expert.items.iter().filter(|i| model_set.contains(i)).count();
    Ok((matched, matched as f64 / expert.items.len() as f64))
}

/// Kendall's tau over the matched items. Pairs are ordered by expert rank and
/// counted concordant when the model ranks them in the same order.
pub fn kendall_tau(expert: &ExpertAnnotation, model: &ModelRanking) -> Result<ConsistencyReport> {
    let (match_count, accuracy) = h_score(expert, model)?;
    let model_rank = |item: usize| model.items.iter().position(|&k| k == item);
    // model positions of matched items, in expert order
    let positions: Vec<usize> = expert.items.iter().filter_map(|&i| model_rank(i)).collect();

    let (mut concordant, mut discordant) = (0, 0);
    for a in 0..positions.len() {
        for b in a + 1..positions.len() {
            if positions[a] < positions[b] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let h = match_count as f64;
    let tau_undefined = match_count < 2;
    let tau = if tau_undefined { 0.0 } else { 2.0 * (concordant as f64 - discordant as f64) / (h * (h - 1.0)) };
    Ok(ConsistencyReport { match_count, accuracy, tau, tau_undefined, concordant, discordant })
}

/// Mean pairwise Jaccard index of top-k sets across runs.
pub fn jaccard_stability(runs: &[Vec<usize>]) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::validation("Jaccard stability needs at least two runs"));
    }
    let k = runs[0].len();
    if runs.iter().any(|r| r.len() != k) {
        return Err(Error::validation("all runs must report the same number of items"));
    }
    let sets: Vec<BTreeSet<usize>> = runs.iter().map(|r| r.iter().copied().collect()).collect();
    if sets.iter().any(BTreeSet::is_empty) {
        return Err(Error::validation("Jaccard stability of empty sets is undefined"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            let inter = sets[a].intersection(&sets[b]).count();
            let union = sets[a].union(&sets[b]).count();
            total += inter as f64 / union as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub value: f64,
    /// The actual values had zero variance; `value` is 0 by convention.
    pub degenerate: bool,
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<RSquared> {
    if actual.len() != predicted.len() {
        return Err(Error::validation(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::validation("R² of an empty sample is undefined"));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 || actual.iter().all(|&y| y == actual[0]) {
        return Ok(RSquared { value: 0.0, degenerate: true });
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(RSquared { value: 1.0 - ss_res / ss_tot, degenerate: false })
}
