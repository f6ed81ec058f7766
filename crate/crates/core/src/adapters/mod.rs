//! Instances the explainer can perturb: tabular rows, token lists and segmented images.

mod overlay;
mod segments;

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::perturbation::Mask;

pub use overlay::{render_overlay, OverlayMode, OverlayOutput, OverlayStyle};
pub use segments::{grid_segment, load_segment_map, segment_map_from_rows, SegmentMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Tabular,
    Text,
    Image,
}

/// What replaces the pixels of a masked image segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Per-channel mean of the image.
    #[default]
    Mean,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdaptedInstance {
    Tabular {
        values: Vec<f64>,
        /// Replacement value for masked columns.
        baseline: Vec<f64>,
        labels: Option<Vec<String>>,
    },
    Text {
        tokens: Vec<String>,
    },
    Image {
        image: RgbImage,
        path: Option<PathBuf>,
        segments: SegmentMap,
        fill: FillPolicy,
    },
}

impl AdaptedInstance {
    pub fn tabular(values: Vec<f64>, baseline: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("tabular instance needs at least one column"));
        }
        if baseline.len() != values.len() {
            return Err(Error::validation(format!(
                "{} baseline values for {} columns",
                baseline.len(),
                values.len()
            )));
        }
        if values.iter().chain(&baseline).any(|v| !v.is_finite()) {
            return Err(Error::validation("tabular values must be finite"));
        }
        Ok(AdaptedInstance::Tabular { values, baseline, labels: None })
    }

    pub fn text(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::validation("text instance needs at least one token"));
        }
        if tokens.iter().any(String::is_empty) {
            return Err(Error::validation("tokens must be non-empty strings"));
        }
        Ok(AdaptedInstance::Text { tokens })
    }

    pub fn image(image: RgbImage, segments: SegmentMap, fill: FillPolicy) -> Result<Self> {
        if image.width() != segments.width() || image.height() != segments.height() {
            return Err(Error::validation(format!(
                "image is {}x{} but the segment map is {}x{}",
                image.width(),
                image.height(),
                segments.width(),
                segments.height()
            )));
        }
        Ok(AdaptedInstance::Image { image, path: None, segments, fill })
    }

    #[must_use]
    pub fn with_path(mut self, source: impl Into<PathBuf>) -> Self {
        if let AdaptedInstance::Image { path, .. } = &mut self {
            *path = Some(source.into());
        }
        self
    }

    #[must_use]
    pub fn with_labels(mut self, names: Vec<String>) -> Self {
        if let AdaptedInstance::Tabular { labels, .. } = &mut self {
            *labels = Some(names);
        }
        self
    }

    pub fn modality(&self) -> Modality {
        match self {
            AdaptedInstance::Tabular { .. } => Modality::Tabular,
            AdaptedInstance::Text { .. } => Modality::Text,
            AdaptedInstance::Image { .. } => Modality::Image,
        }
    }

    /// Number of maskable blocks.
    pub fn n(&self) -> usize {
        match self {
            AdaptedInstance::Tabular { values, .. } => values.len(),
            AdaptedInstance::Text { tokens } => tokens.len(),
            AdaptedInstance::Image { segments, .. } => segments.len(),
        }
    }

    /// Display names of the blocks.
    pub fn labels(&self) -> Option<Vec<String>> {
        match self {
            AdaptedInstance::Tabular { labels, .. } => labels.clone(),
            AdaptedInstance::Text { tokens } => Some(tokens.clone()),
            AdaptedInstance::Image { .. } => None,
        }
    }
}

/// A perturbed instance ready to be scored.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tabular(Vec<f64>),
    Text { tokens: Vec<String>, kept: Vec<bool> },
    Image { path: Option<String>, masked_segments: Vec<usize>, n: usize, pixels: RgbImage },
}

impl Payload {
    /// Wire encoding: floats, token strings, or an image reference with its masked segments.
    pub fn to_wire(&self) -> Value {
        match self {
            Payload::Tabular(values) => json!(values),
            Payload::Text { tokens, .. } => json!(tokens),
            Payload::Image { path, masked_segments, .. } => {
                json!({ "path": path.clone().unwrap_or_default(), "masked_segments": masked_segments })
            }
        }
    }

    /// Numeric view for in-process models: column values, or block-presence
    /// indicators for text and images.
    pub fn features(&self) -> Vec<f64> {
        let indicator = |kept: bool| if kept { 1.0 } else { 0.0 };
        match self {
            Payload::Tabular(values) => values.clone(),
            Payload::Text { kept, .. } => kept.iter().map(|&k| indicator(k)).collect(),
            Payload::Image { masked_segments, n, .. } => {
                let mut x = vec![1.0; *n];
                masked_segments.iter().for_each(|&j| x[j] = 0.0);
                x
            }
        }
    }
}

fn channel_means(image: &RgbImage) -> [u8; 3] {
    let mut sums = [0u64; 3];
    for p in image.pixels() {
        for c in 0..3 {
            sums[c] += u64::from(p.0[c]);
        }
    }
    let count = u64::from(image.width()) * u64::from(image.height());
    sums.map(|s| ((s as f64 / count as f64).round()) as u8)
}

/// Renders the instance with the masked blocks removed.
pub fn apply_mask(instance: &AdaptedInstance, mask: &Mask) -> Result<Payload> {
    if mask.len() != instance.n() {
        return Err(Error::validation(format!(
            "mask covers {} blocks but the instance has {}",
            mask.len(),
            instance.n()
        )));
    }
    Ok(match instance {
        AdaptedInstance::Tabular { values, baseline, .. } => Payload::Tabular(
            (0..values.len()).map(|j| if mask.is_kept(j) { values[j] } else { baseline[j] }).collect(),
        ),
        AdaptedInstance::Text { tokens } => Payload::Text {
            tokens: tokens.iter().enumerate().filter(|(j, _)| mask.is_kept(*j)).map(|(_, t)| t.clone()).collect(),
            kept: mask.as_slice().to_vec(),
        },
        AdaptedInstance::Image { image, path, segments, fill } => {
            let fill_value = match fill {
                FillPolicy::Mean => channel_means(image),
                FillPolicy::Zero => [0, 0, 0],
            };
            let mut pixels = image.clone();
            if mask.masked_count() > 0 {
                for (x, y, p) in pixels.enumerate_pixels_mut() {
                    if !mask.is_kept(segments.label(x, y)) {
                        p.0 = fill_value;
                    }
                }
            }
            Payload::Image {
                path: path.as_ref().map(|p| p.display().to_string()),
                masked_segments: mask.masked_indices(),
                n: segments.len(),
                pixels,
            }
        }
    })
}

/// Rows of a CSV file with a header line.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TabularDataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let row = record
                .iter()
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!("{}: row {} has non-numeric field {field:?}", path.display(), line + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != headers.len() {
                return Err(Error::Format(format!("{}: row {} has {} fields", path.display(), line + 1, row.len())));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Format(format!("{}: no data rows", path.display())));
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.headers.len())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / self.rows.len() as f64)
            .collect()
    }

    /// Row `row` as an instance, with column means as the masking baseline.
    pub fn instance(&self, row: usize) -> Result<AdaptedInstance> {
        let values = self
            .rows
            .get(row)
            .ok_or_else(|| Error::validation(format!("row {row} out of range ({} rows)", self.rows.len())))?
            .clone();
        Ok(AdaptedInstance::tabular(values, self.column_means())?.with_labels(self.headers.clone()))
    }
}

/// Token list stored as a JSON array of strings.
pub fn load_tokens(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Reads a PPM/PGM image as RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .into_rgb8())
}
