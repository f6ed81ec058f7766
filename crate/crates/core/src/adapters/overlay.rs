use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::AdaptedInstance;
use crate::coalition::{descending_order, Attribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayMode {
    /// The `k` highest-scoring segments stay at full intensity.
    TopKHighlight(usize),
    /// Intensity interpolates linearly between the lowest and highest score.
    HeatRamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub mode: OverlayMode,
    /// Intensity multiplier of dimmed segments, applied to every channel.
    pub dim: f64,
}

impl OverlayStyle {
    pub fn top_k(k: usize) -> Self {
        Self { mode: OverlayMode::TopKHighlight(k), dim: 0.3 }
    }

    pub fn heat_ramp() -> Self {
        Self { mode: OverlayMode::HeatRamp, dim: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayOutput {
    pub image: PathBuf,
    pub sidecar: PathBuf,
    pub ranking: Vec<usize>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    ranking: &'a [usize],
    phi: &'a [f64],
}

/// Per-segment intensity multipliers in `[dim, 1]`.
fn intensities(phi: &[f64], style: &OverlayStyle, ranking: &[usize]) -> Vec<f64> {
    let dim = style.dim.clamp(0.0, 1.0);
    match style.mode {
        OverlayMode::TopKHighlight(k) => {
            let mut out = vec![dim; phi.len()];
            ranking.iter().take(k).for_each(|&j| out[j] = 1.0);
            out
        }
        OverlayMode::HeatRamp => {
            let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            phi.iter()
                .map(|&p| if hi > lo { dim + (1.0 - dim) * (p - lo) / (hi - lo) } else { 1.0 })
                .collect()
        }
    }
}

/// Writes the shaded image as binary PPM at `out` and the ranking to `out` with a `.json` extension.
pub fn render_overlay(
    instance: &AdaptedInstance,
    attribution: &Attribution,
    style: &OverlayStyle,
    out: impl AsRef<Path>,
) -> Result<OverlayOutput> {
    let AdaptedInstance::Image { image, segments, .. } = instance else {
        return Err(Error::Modality(format!("overlays need an image instance, got {:?}", instance.modality())));
    };
    let n = segments.len();
    if attribution.len() != n {
        return Err(Error::validation(format!("{} scores for {n} segments", attribution.len())));
    }
    if let OverlayMode::TopKHighlight(k) = style.mode {
        if k > n {
            return Err(Error::validation(format!("cannot highlight {k} of {n} segments")));
        }
    }

    let ranking = descending_order(&attribution.phi);
    let scale = intensities(&attribution.phi, style, &ranking);
    let shaded = RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let s = scale[segments.label(x, y)];
        let p = image.get_pixel(x, y).0;
        image::Rgb(p.map(|c| (f64::from(c) * s).round().clamp(0.0, 255.0) as u8))
    });

    let out = out.as_ref();
    shaded
        .save_with_format(out, image::ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("{}: {e}", out.display())))?;
    let sidecar = out.with_extension("json");
    let text = serde_json::to_string_pretty(&Sidecar { ranking: &ranking, phi: &attribution.phi })?;
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(OverlayOutput { image: out.to_path_buf(), sidecar, ranking })
}
