use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapters::{grid_segment, load_image, load_segment_map, load_tokens, AdaptedInstance, FillPolicy, TabularDataset};
use crate::blackbox::ModelEndpoint;
use crate::coalition::{PermutationMode, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::perturbation::{MaskPolicy, DEFAULT_LAMBDA, DEFAULT_RATIO, DEFAULT_SAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentSource {
    Grid { rows: u32, cols: u32 },
    File { path: PathBuf },
}

/// Where the explained instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "snake_case")]
pub enum InstanceSource {
    Tabular {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        /// CSV with a header row; the instance is row `row`, masked columns take the column mean.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<PathBuf>,
        #[serde(default)]
        row: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        baseline: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Text {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tokens: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tokens_file: Option<PathBuf>,
    },
    Image {
        image: PathBuf,
        segments: SegmentSource,
        #[serde(default)]
        fill: FillPolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    RealexpDecoupled,
    RealexpPermutation { mode: PermutationMode },
    ExactShapley,
    TreeGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySource {
    /// `|Pearson|` between the weighted mask columns of the run's design.
    Design,
    /// `|Pearson|` between the columns of the tabular CSV.
    Dataset,
    Matrix(SimilarityMatrix),
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_alpha() -> f64 {
    DEFAULT_RATIO
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_trees() -> usize {
    50
}
fn default_max_depth() -> usize {
    12
}
fn default_min_leaf() -> usize {
    2
}
fn default_policy() -> MaskPolicy {
    MaskPolicy::FixedCount
}
fn default_method() -> AttributionMethod {
    AttributionMethod::RealexpDecoupled
}
fn default_similarity() -> SimilaritySource {
    SimilaritySource::Design
}
fn default_holdout() -> f64 {
    0.2
}
fn default_top_k() -> usize {
    5
}
fn default_sigma_q2() -> f64 {
    0.05
}

/// Everything that determines an explanation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub endpoint: ModelEndpoint,
    pub instance: InstanceSource,
    /// Number of perturbations.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Masked fraction of blocks.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_trees")]
    pub trees: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_policy")]
    pub policy: MaskPolicy,
    #[serde(default = "default_method")]
    pub method: AttributionMethod,
    #[serde(default = "default_similarity")]
    pub similarity: SimilaritySource,
    /// Trailing fraction of the perturbations held out from surrogate training.
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    /// Size of the top sets compared by the stability study.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Rate variance used for the Monte-Carlo policy in the stability study.
    #[serde(default = "default_sigma_q2")]
    pub sigma_q2: f64,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for everything but the endpoint and the instance.
    pub fn new(endpoint: ModelEndpoint, instance: InstanceSource) -> Self {
        Self {
            endpoint,
            instance,
            samples: default_samples(),
            alpha: default_alpha(),
            lambda: default_lambda(),
            trees: default_trees(),
            max_depth: default_max_depth(),
            min_leaf: default_min_leaf(),
            policy: default_policy(),
            method: default_method(),
            similarity: default_similarity(),
            holdout: default_holdout(),
            top_k: default_top_k(),
            sigma_q2: default_sigma_q2(),
            seed: 0,
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::validation("at least 2 perturbations are needed"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::validation(format!("holdout must lie in [0, 1), got {}", self.holdout)));
        }
        if self.top_k == 0 {
            return Err(Error::validation("top_k must be at least 1"));
        }
        Ok(())
    }

    /// Loads and adapts the configured instance.
    pub fn adapt_instance(&self) -> Result<AdaptedInstance> {
        match &self.instance {
            InstanceSource::Tabular { values, csv, row, baseline, labels } => {
                let instance = match (values, csv) {
                    (Some(values), None) => {
                        let baseline = baseline.clone().unwrap_or_else(|| vec![0.0; values.len()]);
                        AdaptedInstance::tabular(values.clone(), baseline)?
                    }
                    (None, Some(csv)) => {
                        let data = TabularDataset::load(self.resolve(csv))?;
                        let mut instance = data.instance(*row)?;
                        if let (Some(b), AdaptedInstance::Tabular { baseline, .. }) = (baseline, &mut instance) {
                            if b.len() != baseline.len() {
                                return Err(Error::validation("baseline length differs from the CSV width"));
                            }
                            baseline.clone_from(b);
                        }
                        instance
                    }
                    _ => return Err(Error::validation("tabular instance needs exactly one of `values` or `csv`")),
                };
                Ok(match labels {
                    Some(labels) if labels.len() == instance.n() => instance.with_labels(labels.clone()),
                    Some(_) => return Err(Error::validation("label count differs from the column count")),
                    None => instance,
                })
            }
            InstanceSource::Text { tokens, tokens_file } => match (tokens, tokens_file) {
                (Some(tokens), None) => AdaptedInstance::text(tokens.clone()),
                (None, Some(file)) => AdaptedInstance::text(load_tokens(self.resolve(file))?),
                _ => Err(Error::validation("text instance needs exactly one of `tokens` or `tokens_file`")),
            },
            InstanceSource::Image { image, segments, fill } => {
                let path = self.resolve(image);
                let pixels = load_image(&path)?;
                let map = match segments {
                    SegmentSource::Grid { rows, cols } => grid_segment(pixels.width(), pixels.height(), *rows, *cols)?,
                    SegmentSource::File { path } => load_segment_map(self.resolve(path))?,
                };
                Ok(AdaptedInstance::image(pixels, map, *fill)?.with_path(path))
            }
        }
    }

    /// Column data for [`SimilaritySource::Dataset`].
    pub(crate) fn dataset_columns(&self) -> Result<Vec<Vec<f64>>> {
        match &self.instance {
            InstanceSource::Tabular { csv: Some(csv), .. } => {
                let data = TabularDataset::load(self.resolve(csv))?;
                Ok((0..data.headers.len()).map(|j| data.column(j)).collect())
            }
            _ => Err(Error::validation("dataset similarity needs a tabular instance loaded from CSV")),
        }
    }
}
