//! Similarity-adjusted attributions.
//!
//! Two forms are provided. The decoupled form splits each score into the
//! feature's stand-alone gain `v({i}) - v(∅)` and a pairwise interaction
//! surplus averaged with weights that shrink towards zero for similar
//! partners. The permutation form scales each marginal contribution by the
//! product of `(1 - s[i][j])` over the features already present and divides
//! by `n!`, without renormalizing the reduced mass.

use super::shapley::{check_exhaustive, exhaustive_average, sampled_average, tabulate};
use super::{check_arity, checked_value, Attribution, Coalition, Method, PermutationMode, SimilarityMatrix, ValueFunction};
use crate::error::{Error, Result};

/// Row-normalized interaction weights `w[i][j] = (1 - s[i][j]) / sum_{k != i} (1 - s[i][k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionWeights {
    pub weights: Vec<Vec<f64>>,
    /// Rows whose denominator is zero (feature fully similar to every other one).
    pub degenerate: Vec<usize>,
}

pub fn interaction_weights(s: &SimilarityMatrix) -> InteractionWeights {
    let n = s.len();
    let mut weights = vec![vec![0.0; n]; n];
    let mut degenerate = Vec::new();
    for i in 0..n {
        let denominator: f64 = (0..n).filter(|&k| k != i).map(|k| 1.0 - s.get(i, k)).sum();
        if denominator == 0.0 {
            if n > 1 {
                degenerate.push(i);
            }
            continue;
        }
        for j in (0..n).filter(|&j| j != i) {
            weights[i][j] = (1.0 - s.get(i, j)) / denominator;
        }
    }
    InteractionWeights { weights, degenerate }
}

fn check_similarity(n: usize, s: &SimilarityMatrix) -> Result<()> {
    if s.len() != n {
        return Err(Error::validation(format!(
            "similarity matrix is {0}x{0} but the game has {n} features",
            s.len()
        )));
    }
    Ok(())
}

/// Decoupled score `phi_i = (v({i}) - v(∅)) + sum_j w[i][j] (v({i,j}) - v({j}) - (v({i}) - v(∅)))`.
///
/// Only the empty coalition, singletons and pairs are evaluated. Degenerate
/// rows get a zero interaction term and are listed in `degenerate`.
pub fn realexp_decoupled<V: ValueFunction + ?Sized>(v: &V, s: &SimilarityMatrix) -> Result<Attribution> {
    let n = check_arity(v)?;
    check_similarity(n, s)?;

    let empty = checked_value(v, Coalition::EMPTY)?;
    let single = (0..n).map(|i| checked_value(v, Coalition::singleton(i))).collect::<Result<Vec<_>>>()?;
    let mut pair = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let value = checked_value(v, Coalition::pair(i, j))?;
            pair[i][j] = value;
            pair[j][i] = value;
        }
    }

    let InteractionWeights { weights, degenerate } = interaction_weights(s);
    let independent: Vec<f64> = single.iter().map(|vi| vi - empty).collect();
    let margin: Vec<f64> = (0..n)
        .map(|i| {
            if degenerate.contains(&i) {
                return 0.0;
            }
            (0..n)
                .filter(|&j| j != i)
                .map(|j| weights[i][j] * (pair[i][j] - single[j] - independent[i]))
                .sum()
        })
        .collect();
    let phi = independent.iter().zip(&margin).map(|(a, b)| a + b).collect();

    let mut attribution = Attribution::new(Method::RealexpDecoupled, phi);
    attribution.phi_independent = Some(independent);
    attribution.phi_margin = Some(margin);
    attribution.degenerate = (!degenerate.is_empty()).then_some(degenerate);
    Ok(attribution)
}

/// `prod_{j in prefix} (1 - s[i][j])`; 1 for the empty prefix.
pub fn adjustment_factor(prefix: Coalition, i: usize, s: &SimilarityMatrix) -> Result<f64> {
    if i >= s.len() || !prefix.fits(s.len()) {
        return Err(Error::validation(format!(
            "feature {i} or prefix {prefix} out of range for {} features",
            s.len()
        )));
    }
    if prefix.contains(i) {
        return Err(Error::validation(format!("feature {i} is already in prefix {prefix}")));
    }
    Ok(prefix.members().map(|j| 1.0 - s.get(i, j)).product())
}

/// Permutation-form score: marginals weighted by the adjustment factor of their prefix, averaged over `n!`.
pub fn realexp_permutation<V: ValueFunction + ?Sized>(
    v: &V,
    s: &SimilarityMatrix,
    mode: PermutationMode,
) -> Result<Attribution> {
    let n = check_arity(v)?;
    check_similarity(n, s)?;
    let factor = |prefix: Coalition, i: usize| -> f64 { prefix.members().map(|j| 1.0 - s.get(i, j)).product() };
    match mode {
        PermutationMode::Exhaustive => {
            check_exhaustive(v)?;
            let table = tabulate(v, n)?;
            // upsilon[S * n + i] for every prefix S not containing i
            let mut upsilon = vec![0.0; (1usize << n) * n];
            for bits in 0..1u64 << n {
                let prefix = Coalition::from_bits(bits);
                for i in (0..n).filter(|&i| !prefix.contains(i)) {
                    upsilon[bits as usize * n + i] = adjustment_factor(prefix, i, s)?;
                }
            }
            let phi = exhaustive_average(n, &table, |prefix, i| upsilon[prefix.bits() as usize * n + i]);
            Ok(Attribution::new(Method::RealexpPermutation, phi))
        }
        PermutationMode::Sampled { count, seed } => {
            let (phi, se) = sampled_average(v, count, seed, factor)?;
            let mut attribution = Attribution::new(Method::RealexpPermutation, phi);
            attribution.std_error = se;
            Ok(attribution)
        }
    }
}
