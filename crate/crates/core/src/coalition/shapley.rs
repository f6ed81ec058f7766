use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{check_arity, checked_value, Attribution, Coalition, DilutionGame, Method, PermutationMode, ValueFunction};
use crate::error::{Error, Result};
use crate::rng;

/// Largest `n` for which all `2^n` coalitions are evaluated.
pub const EXACT_CAP: usize = 20;
/// Largest `n` for which all `n!` permutations are enumerated.
pub const EXHAUSTIVE_CAP: usize = 10;

/// Permutations per independently seeded chunk in sampled mode.
const SAMPLE_CHUNK: usize = 256;

/// Evaluates `v` on every coalition, indexed by bit mask.
pub(crate) fn tabulate<V: ValueFunction + ?Sized>(v: &V, n: usize) -> Result<Vec<f64>> {
    (0..1u64 << n).into_par_iter().map(|bits| checked_value(v, Coalition::from_bits(bits))).collect()
}

/// Shapley value by the subset-weighted sum over all coalitions not containing each feature.
pub fn exact_shapley<V: ValueFunction + ?Sized>(v: &V) -> Result<Attribution> {
    let n = check_arity(v)?;
    if n > EXACT_CAP {
        return Err(Error::Capacity { what: "exact Shapley", n, cap: EXACT_CAP });
    }
    let table = tabulate(v, n)?;

    // zeta(s) = s!(n-s-1)!/n! = 1 / (n * C(n-1, s))
    let mut zeta = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        zeta.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let phi = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1u64 << i;
            let mut total = 0.0;
            for bits in 0..1u64 << n {
                if bits & bit == 0 {
                    let marginal = table[(bits | bit) as usize] - table[bits as usize];
                    total += zeta[bits.count_ones() as usize] * marginal;
                }
            }
            total
        })
        .collect();
    Ok(Attribution::new(Method::ExactShapley, phi))
}

/// Shapley value as the average marginal contribution over orderings of the features.
pub fn permutation_shapley<V: ValueFunction + ?Sized>(v: &V, mode: PermutationMode) -> Result<Attribution> {
    match mode {
        PermutationMode::Exhaustive => {
            let n = check_exhaustive(v)?;
            let table = tabulate(v, n)?;
            let phi = exhaustive_average(n, &table, |_, _| 1.0);
            Ok(Attribution::new(Method::PermExhaustiveShapley, phi))
        }
        PermutationMode::Sampled { count, seed } => {
            let (phi, se) = sampled_average(v, count, seed, |_, _| 1.0)?;
            let mut attribution = Attribution::new(Method::PermSampledShapley, phi);
            attribution.std_error = se;
            Ok(attribution)
        }
    }
}

/// Exact Shapley values of the two-regime duplicate-feature game.
///
/// Feature 0 gains `delta` when its duplicate (feature 1) has not yet joined
/// and `epsilon` when it has; the result for feature 0 is `delta/2 + epsilon/2`.
pub fn dilution_demo(delta: f64, epsilon: f64, n: usize) -> Result<Attribution> {
    if n < 2 {
        return Err(Error::validation("dilution game needs a feature and its duplicate (n >= 2)"));
    }
    if !delta.is_finite() || !epsilon.is_finite() {
        return Err(Error::validation("delta and epsilon must be finite"));
    }
    exact_shapley(&DilutionGame { n, delta, epsilon })
}

pub(crate) fn check_exhaustive<V: ValueFunction + ?Sized>(v: &V) -> Result<usize> {
    let n = check_arity(v)?;
    if n > EXHAUSTIVE_CAP {
        return Err(Error::Capacity { what: "exhaustive permutation enumeration", n, cap: EXHAUSTIVE_CAP });
    }
    Ok(n)
}

/// `(1/n!) * sum over orderings of marginal(i, prefix) * weight(prefix, i)`.
pub(crate) fn exhaustive_average<W>(n: usize, table: &[f64], weight: W) -> Vec<f64>
where
    W: Fn(Coalition, usize) -> f64 + Sync,
{
    let partials: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut sums = vec![0.0; n];
            let mut rest: Vec<usize> = (0..n).filter(|&j| j != first).collect();
            loop {
                let mut prefix = Coalition::EMPTY;
                for &i in std::iter::once(&first).chain(rest.iter()) {
                    let marginal = table[prefix.with(i).bits() as usize] - table[prefix.bits() as usize];
                    sums[i] += marginal * weight(prefix, i);
                    prefix = prefix.with(i);
                }
                if !next_permutation(&mut rest) {
                    break;
                }
            }
            sums
        })
        .collect();

    let count: f64 = (1..=n).map(|k| k as f64).product();
    let mut phi = vec![0.0; n];
    for sums in &partials {
        for (total, s) in phi.iter_mut().zip(sums) {
            *total += s;
        }
    }
    phi.iter_mut().for_each(|p| *p /= count);
    phi
}

/// Sample mean (and standard error) of weighted marginals over `count` uniform orderings.
pub(crate) fn sampled_average<V, W>(v: &V, count: usize, seed: u64, weight: W) -> Result<(Vec<f64>, Option<Vec<f64>>)>
where
    V: ValueFunction + ?Sized,
    W: Fn(Coalition, usize) -> f64 + Sync,
{
    let n = check_arity(v)?;
    if count == 0 {
        return Err(Error::validation("sampled mode needs at least one permutation"));
    }
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = rng::stream(seed, chunk as u64);
            let size = SAMPLE_CHUNK.min(count - chunk * SAMPLE_CHUNK);
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..size {
                order.sort_unstable();
                order.shuffle(&mut rng);
                let mut prefix = Coalition::EMPTY;
                let mut before = checked_value(v, prefix)?;
                for &i in &order {
                    let next = prefix.with(i);
                    let after = checked_value(v, next)?;
                    let x = (after - before) * weight(prefix, i);
                    sum[i] += x;
                    sum_sq[i] += x * x;
                    prefix = next;
                    before = after;
                }
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<_>>()?;

    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for (s, q) in &partials {
        for i in 0..n {
            sum[i] += s[i];
            sum_sq[i] += q[i];
        }
    }
    let c = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
    let se = (count > 1).then(|| {
        (0..n)
            .map(|i| {
                let var = ((sum_sq[i] - c * mean[i] * mean[i]) / (c - 1.0)).max(0.0);
                (var / c).sqrt()
            })
            .collect()
    });
    Ok((mean, se))
}

/// Advances to the next lexicographic permutation; false once the last one is reached.
fn next_permutation(items: &mut [usize]) -> bool {
    if items.len() < 2 {
        return false;
    }
    let mut i = items.len() - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = items.len() - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}
