//! End-to-end explanation runs: perturb, score, weight, fit, attribute.

mod config;
mod studies;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapters::AdaptedInstance;
use crate::blackbox::mask_and_score;
use crate::coalition::{
    estimate_similarity, exact_shapley, pearson_similarity, realexp_decoupled, realexp_permutation, Attribution,
    FeatureSet, SimilarityMatrix,
};
use crate::error::{Error, Result};
use crate::evaluation::{kendall_tau, r_squared, ConsistencyReport, ExpertAnnotation, ModelRanking};
use crate::forest::{self, tree_gain_importance, EnsembleForest, FitReport, ForestParams};
use crate::perturbation::{build_design, generate_masks, MaskPolicy, PerturbationSet};

pub use config::{AttributionMethod, InstanceSource, RunConfig, SegmentSource, SimilaritySource};
pub use studies::{
    stability_study, stability_study_seeds, sweep, write_sweep_csv, PolicyStability, StabilityReport, SweepParam,
    SweepRow,
};

/// Where the similarity matrix of a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProvenance {
    pub source: String,
    pub matrix: SimilarityMatrix,
}

/// Wall-clock milliseconds per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub perturb_ms: f64,
    pub score_ms: f64,
    pub fit_ms: f64,
    pub attribute_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub n: usize,
    pub attribution: Attribution,
    /// Feature indices by descending score, ties by lower index.
    pub ranking: Vec<usize>,
    pub fit: FitReport,
    /// Surrogate R² on the trailing held-out perturbations; `None` when nothing was held out.
    pub heldout_r2: Option<f64>,
    pub similarity: SimilarityProvenance,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ImportanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the timing block removed; identical configs give identical text.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.timing = None;
        copy.to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// SplitMix64 finalizer, used to derive the forest seed from the run seed.
pub(crate) fn mix_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Everything `explain` computes before attribution.
pub struct SurrogateRun {
    pub instance: AdaptedInstance,
    pub design: PerturbationSet,
    pub forest: EnsembleForest,
    pub fit: FitReport,
    pub heldout_r2: Option<f64>,
}

/// Perturbs the instance, scores the perturbations and fits the surrogate on
/// the leading `1 - holdout` share of them.
pub fn fit_surrogate(config: &RunConfig) -> Result<SurrogateRun> {
    Ok(fit_surrogate_timed(config)?.0)
}

fn fit_surrogate_timed(config: &RunConfig) -> Result<(SurrogateRun, [f64; 3])> {
    config.validate().map_err(|e| e.at("config"))?;
    let start = Instant::now();
    let instance = config.adapt_instance().map_err(|e| e.at("adapt"))?;
    let n = instance.n();
    let masks = generate_masks(n, config.samples, config.alpha, config.policy, config.seed)
        .map_err(|e| e.at("perturb"))?;
    let perturb_ms = ms(start);

    let start = Instant::now();
    let mut connection = config.endpoint.connect_in(config.base_dir.as_deref()).map_err(|e| e.at("score"))?;
    let scores = mask_and_score(&mut connection, &instance, &masks).map_err(|e| e.at("score"))?;
    drop(connection);
    let score_ms = ms(start);

    let start = Instant::now();
    let design = build_design(masks, Some(scores), config.lambda)
        .map_err(|e| e.at("weight"))?
        .with_seed(config.seed);
    let train_len = design.len() - (config.holdout * design.len() as f64).round() as usize;
    let (train, test) = design.split_at(train_len);
    let params = ForestParams {
        trees: config.trees,
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        seed: mix_seed(config.seed),
    };
    let (forest, fit) = forest::fit(&train, params).map_err(|e| e.at("fit"))?;
    let heldout_r2 = if test.is_empty() {
        None
    } else {
        let predicted = test.design_rows().iter().map(|x| forest.predict(x)).collect::<Result<Vec<_>>>()?;
        let actual = test.scores().expect("design carries scores");
        Some(r_squared(actual, &predicted).map_err(|e| e.at("fit"))?.value)
    };
    let fit_ms = ms(start);
    Ok((SurrogateRun { instance, design, forest, fit, heldout_r2 }, [perturb_ms, score_ms, fit_ms]))
}

fn resolve_similarity(config: &RunConfig, design: &PerturbationSet) -> Result<SimilarityProvenance> {
    let n = design.n();
    let (source, matrix) = match &config.similarity {
        SimilaritySource::Matrix(m) => {
            if m.len() != n {
                return Err(Error::validation(format!("similarity matrix is {0}x{0} but there are {n} features", m.len())));
            }
            ("matrix", m.clone())
        }
        _ if n == 1 => ("independent", SimilarityMatrix::independent(1)),
        SimilaritySource::Design => ("design", estimate_similarity(design)?),
        SimilaritySource::Dataset => {
            let columns = config.dataset_columns()?;
            if columns.len() != n {
                return Err(Error::validation("dataset width differs from the instance"));
            }
            ("dataset", pearson_similarity(&columns)?)
        }
    };
    Ok(SimilarityProvenance { source: source.to_owned(), matrix })
}

/// Attributes the surrogate of `run` with the configured method.
pub fn attribute(config: &RunConfig, run: &SurrogateRun) -> Result<(Attribution, SimilarityProvenance)> {
    let n = run.design.n();
    let similarity = resolve_similarity(config, &run.design).map_err(|e| e.at("similarity"))?;
    // A fully kept mask maps to the all-ones design row; masked blocks sit at the zero baseline.
    let point = vec![1.0; n];
    let game = run.forest.game(&point)?;
    let attribution = match &config.method {
        AttributionMethod::RealexpDecoupled => realexp_decoupled(&game, &similarity.matrix),
        AttributionMethod::RealexpPermutation { mode } => realexp_permutation(&game, &similarity.matrix, *mode),
        AttributionMethod::ExactShapley => exact_shapley(&game),
        AttributionMethod::TreeGain => Ok(tree_gain_importance(&run.forest)),
    }
    .map_err(|e| e.at("attribute"))?;
    let attribution = match run.instance.labels() {
        Some(labels) => attribution.with_labels(&FeatureSet::with_labels(labels)?),
        None => attribution,
    };
    Ok((attribution, similarity))
}

/// One full explanation run.
pub fn explain(config: &RunConfig) -> Result<ImportanceReport> {
    let total = Instant::now();
    let (run, [perturb_ms, score_ms, fit_ms]) = fit_surrogate_timed(config)?;
    let start = Instant::now();
    let (attribution, similarity) = attribute(config, &run)?;
    let attribute_ms = ms(start);
    Ok(ImportanceReport {
        n: run.design.n(),
        ranking: attribution.ranking(),
        attribution,
        fit: run.fit,
        heldout_r2: run.heldout_r2,
        similarity,
        config: config.clone(),
        timing: Some(Timing { perturb_ms, score_ms, fit_ms, attribute_ms, total_ms: ms(total) }),
    })
}

/// Compares the report's top `m` features with an expert's `m` picks.
pub fn consistency_eval(report: &ImportanceReport, expert: &ExpertAnnotation) -> Result<ConsistencyReport> {
    if let Some(&bad) = expert.items.iter().find(|&&i| i >= report.n) {
        return Err(Error::validation(format!("expert item {bad} is outside 0..{}", report.n)));
    }
    if expert.is_empty() {
        return Err(Error::validation("expert annotation is empty"));
    }
    let model = ModelRanking::new(report.ranking.iter().copied().take(expert.len()).collect())?;
    kendall_tau(expert, &model)
}

/// The config with a different masking policy; the Monte-Carlo policy takes the config's rate variance.
pub(crate) fn with_policy(config: &RunConfig, policy: MaskPolicy) -> RunConfig {
    RunConfig { policy, ..config.clone() }
}
