//! Coalitions, value functions and attribution rules.

mod game;
mod realexp;
mod shapley;
mod similarity;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use game::{DilutionGame, TableGame};
pub use realexp::{adjustment_factor, interaction_weights, realexp_decoupled, realexp_permutation, InteractionWeights};
pub use shapley::{dilution_demo, exact_shapley, permutation_shapley, EXACT_CAP, EXHAUSTIVE_CAP};
pub use similarity::{estimate_similarity, pearson_similarity};

/// Largest feature count a [`Coalition`] bit mask can hold.
pub const MAX_FEATURES: usize = 64;

/// The feature set a game is played over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    n: usize,
    labels: Option<Vec<String>>,
}

impl FeatureSet {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("feature set must contain at least one feature"));
        }
        Ok(Self { n, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::validation("feature set must contain at least one feature"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::validation(format!("duplicate feature label {label:?}")));
            }
        }
        Ok(Self { n: labels.len(), labels: Some(labels) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn full(&self) -> Coalition {
        Coalition::full(self.n)
    }
}

/// A subset of the feature indices `0..n`, stored as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_FEATURES);
        if n >= 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        Coalition(1u64 << i)
    }

    pub fn pair(i: usize, j: usize) -> Self {
        Coalition((1u64 << i) | (1u64 << j))
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Self {
        members.into_iter().fold(Coalition::EMPTY, |c, i| c.with(i))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 & (1u64 << i) != 0
    }

    #[must_use]
    pub fn with(self, i: usize) -> Self {
        Coalition(self.0 | (1u64 << i))
    }

    #[must_use]
    pub fn without(self, i: usize) -> Self {
        Coalition(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Whether every member lies in `0..n`.
    pub fn fits(self, n: usize) -> bool {
        n >= 64 || self.0 >> n == 0
    }

    /// Members in increasing order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coalition{self}")
    }
}

/// A cooperative game: a deterministic payoff for every coalition of `n_features()` players.
pub trait ValueFunction: Sync {
    fn n_features(&self) -> usize;

    fn value(&self, coalition: Coalition) -> f64;
}

impl<V: ValueFunction + ?Sized> ValueFunction for &V {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn value(&self, coalition: Coalition) -> f64 {
        (**self).value(coalition)
    }
}

/// Evaluates `v` and rejects non-finite payoffs.
pub(crate) fn checked_value<V: ValueFunction + ?Sized>(v: &V, coalition: Coalition) -> Result<f64> {
    let value = v.value(coalition);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteValue { coalition, value })
    }
}

/// Symmetric matrix of pairwise feature similarities in `[0, 1]` with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    /// All off-diagonal similarities zero.
    pub fn independent(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::validation("similarity matrix must be non-empty"));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "similarity row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let matrix = Self { n, data };
        matrix.validate()?;
        Ok(matrix)
    }

    /// Builds a matrix from the upper triangle given by `f(i, j)` for `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut matrix = Self::independent(n);
        for i in 0..n {
            for j in i + 1..n {
                let s = f(i, j);
                matrix.data[i * n + j] = s;
                matrix.data[j * n + i] = s;
            }
        }
        matrix.validate()?;
        Ok(matrix)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 1.0 {
                return Err(Error::validation(format!("similarity diagonal s[{i}][{i}] must be 1")));
            }
            for j in 0..n {
                let s = self.get(i, j);
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::validation(format!("similarity s[{i}][{j}] = {s} outside [0, 1]")));
                }
                if s != self.get(j, i) {
                    return Err(Error::validation(format!("similarity matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

impl Serialize for SimilarityMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SimilarityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SimilarityMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactShapley,
    PermExhaustiveShapley,
    PermSampledShapley,
    RealexpDecoupled,
    RealexpPermutation,
    TreeGain,
}

/// How permutations are visited by the permutation-form estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

/// Per-feature scores together with how they were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub phi: Vec<f64>,
    pub phi_independent: Option<Vec<f64>>,
    pub phi_margin: Option<Vec<f64>>,
    pub labels: Option<Vec<String>>,
    /// Standard error of each entry, for sampled estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    /// Features whose interaction weights were undefined (similar to every other feature).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<Vec<usize>>,
}

impl Attribution {
    pub fn new(method: Method, phi: Vec<f64>) -> Self {
        Self {
            method,
            phi,
            phi_independent: None,
            phi_margin: None,
            labels: None,
            std_error: None,
            degenerate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    #[must_use]
    pub fn with_labels(mut self, features: &FeatureSet) -> Self {
        self.labels = features.labels().map(<[String]>::to_vec);
        self
    }

    /// Feature indices by descending score; ties go to the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        descending_order(&self.phi)
    }
}

/// Stable argsort by descending value, ties broken by lower index.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

pub(crate) fn check_arity<V: ValueFunction + ?Sized>(v: &V) -> Result<usize> {
    let n = v.n_features();
    if n == 0 {
        return Err(Error::validation("value function has no features"));
    }
    if n > MAX_FEATURES {
        return Err(Error::Capacity { what: "coalition bit mask", n, cap: MAX_FEATURES });
    }
    Ok(n)
}
