use super::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::perturbation::PerturbationSet;

/// `|Pearson|` between the weighted mask columns `adj_k * mu_j` of a design.
pub fn estimate_similarity(design: &PerturbationSet) -> Result<SimilarityMatrix> {
    let n = design.n();
    if design.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "similarity needs at least 2 perturbations, got {}",
            design.len()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData("similarity needs at least 2 features".into()));
    }
    let rows = design.design_rows();
    let columns: Vec<Vec<f64>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    pearson_similarity(&columns)
}

/// `|Pearson|` between equally long columns, clamped to `[0, 1]`.
///
/// Zero-variance columns are dissimilar to everything else.
pub fn pearson_similarity(columns: &[Vec<f64>]) -> Result<SimilarityMatrix> {
    let n = columns.len();
    let len = columns.first().map_or(0, Vec::len);
    if len < 2 {
        return Err(Error::InsufficientData(format!("similarity needs at least 2 samples, got {len}")));
    }
    if columns.iter().any(|c| c.len() != len) {
        return Err(Error::validation("similarity columns differ in length"));
    }

    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / len as f64;
            c.iter().map(|x| x - mean).collect()
        })
        .collect();
    let sum_sq: Vec<f64> = columns
        .iter()
        .zip(&centered)
        .map(|(raw, c)| {
            if raw.iter().all(|&x| x == raw[0]) {
                0.0
            } else {
                c.iter().map(|x| x * x).sum::<f64>()
            }
        })
        .collect();

    SimilarityMatrix::from_fn(n, |i, j| {
        if sum_sq[i] == 0.0 || sum_sq[j] == 0.0 {
            return 0.0;
        }
        let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
        (dot / (sum_sq[i] * sum_sq[j]).sqrt()).abs().clamp(0.0, 1.0)
    })
}
