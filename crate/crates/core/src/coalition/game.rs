use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Coalition, ValueFunction};
use crate::error::{Error, Result};

/// Largest game a [`TableGame`] will materialize.
const TABLE_CAP: usize = 24;

/// A game given by its full table of `2^n` payoffs, indexed by coalition bit mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableGameFile {
    n: usize,
    values: BTreeMap<String, f64>,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > TABLE_CAP {
            return Err(Error::Capacity { what: "table game", n, cap: TABLE_CAP });
        }
        if values.len() != 1 << n {
            return Err(Error::validation(format!(
                "table game over {n} features needs {} values, got {}",
                1usize << n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    /// Tabulates `f` over every coalition of `n` features.
    pub fn from_fn(n: usize, f: impl Fn(Coalition) -> f64) -> Result<Self> {
        if n == 0 || n > TABLE_CAP {
            return Err(Error::Capacity { what: "table game", n, cap: TABLE_CAP });
        }
        let values = (0..1u64 << n).map(|bits| f(Coalition::from_bits(bits))).collect();
        Self::new(n, values)
    }

    /// Tabulates any value function.
    pub fn from_value_function<V: ValueFunction + ?Sized>(v: &V) -> Result<Self> {
        Self::from_fn(v.n_features(), |c| v.value(c))
    }

    /// `v(S) = sum of c_i over S`.
    pub fn additive(contributions: &[f64]) -> Result<Self> {
        Self::from_fn(contributions.len(), |c| c.members().map(|i| contributions[i]).sum())
    }

    /// `v(S) = 1` when the weights of `S` reach `quota`, else 0.
    pub fn weighted_majority(weights: &[f64], quota: f64) -> Result<Self> {
        Self::from_fn(weights.len(), |c| {
            if c.members().map(|i| weights[i]).sum::<f64>() >= quota {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableGameFile = serde_json::from_str(text)?;
        let n = file.n;
        if n == 0 || n > TABLE_CAP {
            return Err(Error::Capacity { what: "table game", n, cap: TABLE_CAP });
        }
        let mut values = vec![f64::NAN; 1 << n];
        for (key, value) in file.values {
            let bits: u64 = key
                .parse()
                .map_err(|_| Error::Format(format!("game key {key:?} is not a decimal bit mask")))?;
            let slot = values
                .get_mut(bits as usize)
                .filter(|_| bits < 1 << n)
                .ok_or_else(|| Error::Format(format!("game key {key} out of range for n = {n}")))?;
            *slot = value;
        }
        if let Some(missing) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Format(format!("game table is missing coalition key {missing}")));
        }
        Self::new(n, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = TableGameFile {
            n: self.n,
            values: self.values.iter().enumerate().map(|(k, &v)| (k.to_string(), v)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("table game serializes")
    }
}

impl ValueFunction for TableGame {
    fn n_features(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: Coalition) -> f64 {
        self.values[coalition.bits() as usize]
    }
}

/// Two interchangeable features `0` and `1` plus null players.
///
/// Adding feature 0 gains `delta` while its duplicate 1 is absent and
/// `epsilon` once 1 is already present (and symmetrically for 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilutionGame {
    pub n: usize,
    pub delta: f64,
    pub epsilon: f64,
}

impl ValueFunction for DilutionGame {
    fn n_features(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: Coalition) -> f64 {
        match (coalition.contains(0), coalition.contains(1)) {
            (false, false) => 0.0,
            (true, true) => self.delta + self.epsilon,
            _ => self.delta,
        }
    }
}
