use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of every pixel (row-major) to one of `n` segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMap {
    width: u32,
    height: u32,
    n: usize,
    labels: Vec<u32>,
}

impl SegmentMap {
    /// Relabels arbitrary labels to `0..n` in order of first appearance.
    pub fn from_raw(width: u32, height: u32, raw: &[u64]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("segment map must have non-zero dimensions"));
        }
        if raw.len() != width as usize * height as usize {
            return Err(Error::Format(format!(
                "segment map has {} labels for a {width}x{height} image",
                raw.len()
            )));
        }
        let mut dense: HashMap<u64, u32> = HashMap::new();
        let labels = raw
            .iter()
            .map(|&label| {
                let next = dense.len() as u32;
                *dense.entry(label).or_insert(next)
            })
            .collect();
        Ok(Self { width, height, n: dense.len(), labels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn label(&self, x: u32, y: u32) -> usize {
        self.labels[(y * self.width + x) as usize] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Label rows, as written by [`load_segment_map`]'s JSON form.
    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.labels.chunks(self.width as usize).map(<[u32]>::to_vec).collect()
    }
}

/// `rows x cols` rectangular segments labeled row-major. Leftover pixels join
/// the last row or column of segments.
pub fn grid_segment(width: u32, height: u32, rows: u32, cols: u32) -> Result<SegmentMap> {
    if width == 0 || height == 0 || rows == 0 || cols == 0 {
        return Err(Error::validation("grid segmentation needs non-zero image and grid dimensions"));
    }
    if rows > height || cols > width {
        return Err(Error::validation(format!(
            "a {rows}x{cols} grid does not fit a {width}x{height} image"
        )));
    }
    let (cell_h, cell_w) = (height / rows, width / cols);
    let labels = (0..height)
        .flat_map(|y| {
            (0..width).map(move |x| {
                let r = (y / cell_h).min(rows - 1);
                let c = (x / cell_w).min(cols - 1);
                r * cols + c
            })
        })
        .collect();
    Ok(SegmentMap { width, height, n: (rows * cols) as usize, labels })
}

/// Reads a segment map from a JSON 2D integer array or a PGM file.
pub fn load_segment_map(path: impl AsRef<Path>) -> Result<SegmentMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.first() == Some(&b'P') {
        let image = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .into_luma16();
        let raw: Vec<u64> = image.pixels().map(|p| u64::from(p.0[0])).collect();
        SegmentMap::from_raw(image.width(), image.height(), &raw)
    } else {
        let rows: Vec<Vec<u64>> = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        segment_map_from_rows(&rows)
    }
}

pub fn segment_map_from_rows(rows: &[Vec<u64>]) -> Result<SegmentMap> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 {
        return Err(Error::Format("segment map is empty".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Format("segment map rows differ in length".into()));
    }
    let raw: Vec<u64> = rows.iter().flatten().copied().collect();
    SegmentMap::from_raw(width as u32, height as u32, &raw)
}
