//! Bootstrap ensemble of variance-minimizing regression trees.

mod tree;

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{Attribution, Coalition, Method, ValueFunction};
use crate::error::{Error, Result};
use crate::evaluation::r_squared;
use crate::perturbation::PerturbationSet;
use crate::rng;

pub use tree::{fit_tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { trees: 50, max_depth: 12, min_leaf: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r2_train: f64,
    /// Set when the training targets had zero variance and `r2_train` is 0 by convention.
    pub r2_degenerate: bool,
    pub per_tree_depth: Vec<usize>,
    pub oob_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForest {
    pub n: usize,
    pub params: ForestParams,
    /// Value a feature takes when it is left out of a coalition.
    pub baseline: Vec<f64>,
    pub trees: Vec<TreeNode>,
}

/// Row indices drawn with replacement for tree `tree` of a forest seeded with `seed`.
pub fn bootstrap_sample(seed: u64, tree: usize, rows: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, tree as u64);
    (0..rows).map(|_| rng.random_range(0..rows)).collect()
}

/// Fits `params.trees` trees, each on its own bootstrap of the weighted design.
pub fn fit(design: &PerturbationSet, params: ForestParams) -> Result<(EnsembleForest, FitReport)> {
    let targets = design
        .scores()
        .ok_or_else(|| Error::validation("design has no model scores to fit"))?;
    if params.trees == 0 {
        return Err(Error::validation("forest needs at least one tree"));
    }
    if params.min_leaf == 0 {
        return Err(Error::validation("min_leaf must be at least 1"));
    }
    let k = design.len();
    if k < 2 * params.min_leaf {
        return Err(Error::InsufficientData(format!(
            "{k} perturbations cannot fill two leaves of {} samples",
            params.min_leaf
        )));
    }
    let rows = design.design_rows();

    let trees: Vec<TreeNode> = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let sample = bootstrap_sample(params.seed, t, k);
            fit_tree(&rows, targets, &sample, params.max_depth, params.min_leaf)
        })
        .collect();

    let oob_available = (0..params.trees).any(|t| {
        let mut drawn = vec![false; k];
        bootstrap_sample(params.seed, t, k).into_iter().for_each(|i| drawn[i] = true);
        drawn.contains(&false)
    });

    let forest = EnsembleForest { n: design.n(), params, baseline: vec![0.0; design.n()], trees };
    let predicted: Vec<f64> = rows.iter().map(|x| forest.predict_row(x)).collect();
    let fit = r_squared(targets, &predicted)?;
    let report = FitReport {
        r2_train: fit.value,
        r2_degenerate: fit.degenerate,
        per_tree_depth: forest.trees.iter().map(TreeNode::depth).collect(),
        oob_available,
    };
    Ok((forest, report))
}

impl EnsembleForest {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean of the per-tree predictions.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::validation(format!("expected {} features, got {}", self.n, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("prediction input must be finite"));
        }
        Ok(self.predict_row(x))
    }

    #[must_use]
    pub fn with_baseline(mut self, baseline: Vec<f64>) -> Self {
        self.baseline = baseline;
        self
    }

    /// Prediction with coalition members taken from `instance` and the rest from the baseline.
    pub fn coalition_value(&self, instance: &[f64], coalition: Coalition) -> Result<f64> {
        if instance.len() != self.n {
            return Err(Error::validation(format!("expected {} features, got {}", self.n, instance.len())));
        }
        if !coalition.fits(self.n) {
            return Err(Error::validation(format!("coalition {coalition} exceeds {} features", self.n)));
        }
        let x: Vec<f64> =
            (0..self.n).map(|j| if coalition.contains(j) { instance[j] } else { self.baseline[j] }).collect();
        self.predict(&x)
    }

    /// The forest as a cooperative game around `instance`.
    pub fn game<'a>(&'a self, instance: &'a [f64]) -> Result<ForestGame<'a>> {
        if instance.len() != self.n || self.baseline.len() != self.n {
            return Err(Error::validation(format!(
                "instance and baseline must have {} entries",
                self.n
            )));
        }
        if instance.iter().chain(&self.baseline).any(|v| !v.is_finite()) {
            return Err(Error::validation("instance and baseline must be finite"));
        }
        Ok(ForestGame { forest: self, instance })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: EnsembleForest = serde_json::from_str(text)?;
        if forest.trees.is_empty() {
            return Err(Error::Format("forest has no trees".into()));
        }
        if forest.baseline.len() != forest.n {
            return Err(Error::Format("baseline length differs from n".into()));
        }
        if let Some(f) = forest.trees.iter().filter_map(TreeNode::max_feature).max() {
            if f >= forest.n {
                return Err(Error::Format(format!("split on feature {f} but n = {}", forest.n)));
            }
        }
        Ok(forest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Coalition values of a fitted forest around one instance.
#[derive(Debug, Clone, Copy)]
pub struct ForestGame<'a> {
    forest: &'a EnsembleForest,
    instance: &'a [f64],
}

impl ValueFunction for ForestGame<'_> {
    fn n_features(&self) -> usize {
        self.forest.n
    }

    fn value(&self, coalition: Coalition) -> f64 {
        let x: Vec<f64> = (0..self.forest.n)
            .map(|j| if coalition.contains(j) { self.instance[j] } else { self.forest.baseline[j] })
            .collect();
        self.forest.predict_row(&x)
    }
}

/// Split-gain importance: per-feature reduction of node variance weighted by
/// node fraction, averaged over trees and normalized to sum to one.
pub fn tree_gain_importance(forest: &EnsembleForest) -> Attribution {
    let mut total = vec![0.0; forest.n];
    for tree in &forest.trees {
        let mut gains = vec![0.0; forest.n];
        tree.accumulate_gain(&mut gains);
        let root = tree.sample_count() as f64;
        for (t, g) in total.iter_mut().zip(gains) {
            *t += g / root;
        }
    }
    let sum: f64 = total.iter().sum();
    let phi = if sum > 0.0 { total.iter().map(|g| g / sum).collect() } else { vec![0.0; forest.n] };
    Attribution::new(Method::TreeGain, phi)
}
