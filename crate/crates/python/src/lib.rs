//! Python bindings for the `realexp` attribution library.

use pyo3::exceptions::{PyArithmeticError, PyConnectionError, PyValueError};
use pyo3::prelude::*;

use realexp::coalition::{exact_shapley, permutation_shapley, realexp_decoupled, realexp_permutation};
use realexp::evaluation::{jaccard_stability, kendall_tau, r_squared, ExpertAnnotation, ModelRanking};
use realexp::perturbation::generate_masks;
use realexp::pipeline::{consistency_eval, explain};
use realexp::{Error, MaskPolicy, PermutationMode, SimilarityMatrix};

fn to_py(e: Error) -> PyErr {
    let message = e.to_string();
    match e.exit_code() {
        3 => PyConnectionError::new_err(message),
        4 => PyArithmeticError::new_err(message),
        _ => PyValueError::new_err(message),
    }
}

fn permutation_mode(samples: Option<usize>, seed: u64) -> PermutationMode {
    match samples {
        Some(count) => PermutationMode::Sampled { count, seed },
        None => PermutationMode::Exhaustive,
    }
}

/// A coalitional game given by its full value table, indexed by member bitmask.
#[pyclass(frozen)]
#[derive(Clone)]
struct TableGame {
    inner: realexp::TableGame,
}

#[pymethods]
impl TableGame {
    #[new]
    fn new(n: usize, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: realexp::TableGame::new(n, values).map_err(to_py)? })
    }

    #[staticmethod]
    fn weighted_majority(weights: Vec<f64>, quota: f64) -> PyResult<Self> {
        Ok(Self { inner: realexp::TableGame::weighted_majority(&weights, quota).map_err(to_py)? })
    }

    #[staticmethod]
    fn additive(contributions: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: realexp::TableGame::additive(&contributions).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: realexp::TableGame::load(path).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        realexp::ValueFunction::n_features(&self.inner)
    }

    fn value(&self, members: Vec<usize>) -> PyResult<f64> {
        let n = self.n();
        if let Some(bad) = members.iter().find(|&&i| i >= n) {
            return Err(PyValueError::new_err(format!("member {bad} is outside 0..{n}")));
        }
        Ok(realexp::ValueFunction::value(&self.inner, realexp::Coalition::from_members(members)))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

#[pyclass(frozen)]
struct Attribution {
    inner: realexp::Attribution,
}

#[pymethods]
impl Attribution {
    #[getter]
    fn method(&self) -> String {
        serde_json::to_value(self.inner.method).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.inner.phi.clone()
    }

    #[getter]
    fn phi_independent(&self) -> Option<Vec<f64>> {
        self.inner.phi_independent.clone()
    }

    #[getter]
    fn phi_margin(&self) -> Option<Vec<f64>> {
        self.inner.phi_margin.clone()
    }

    #[getter]
    fn std_error(&self) -> Option<Vec<f64>> {
        self.inner.std_error.clone()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<String>> {
        self.inner.labels.clone()
    }

    fn ranking(&self) -> Vec<usize> {
        self.inner.ranking()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Attribution(method={:?}, phi={:?})", self.method(), self.inner.phi)
    }
}

fn similarity(rows: Vec<Vec<f64>>) -> PyResult<SimilarityMatrix> {
    SimilarityMatrix::from_rows(rows).map_err(to_py)
}

#[pyfunction(name = "exact_shapley")]
fn py_exact_shapley(game: &TableGame) -> PyResult<Attribution> {
    Ok(Attribution { inner: exact_shapley(&game.inner).map_err(to_py)? })
}

/// Averages marginal contributions over every order, or over `samples` random orders.
#[pyfunction(name = "permutation_shapley")]
#[pyo3(signature = (game, samples=None, seed=0))]
fn py_permutation_shapley(game: &TableGame, samples: Option<usize>, seed: u64) -> PyResult<Attribution> {
    Ok(Attribution { inner: permutation_shapley(&game.inner, permutation_mode(samples, seed)).map_err(to_py)? })
}

#[pyfunction(name = "realexp_decoupled")]
fn py_realexp_decoupled(game: &TableGame, similarity_rows: Vec<Vec<f64>>) -> PyResult<Attribution> {
    let s = similarity(similarity_rows)?;
    Ok(Attribution { inner: realexp_decoupled(&game.inner, &s).map_err(to_py)? })
}

#[pyfunction(name = "realexp_permutation")]
#[pyo3(signature = (game, similarity_rows, samples=None, seed=0))]
fn py_realexp_permutation(
    game: &TableGame,
    similarity_rows: Vec<Vec<f64>>,
    samples: Option<usize>,
    seed: u64,
) -> PyResult<Attribution> {
    let s = similarity(similarity_rows)?;
    let mode = permutation_mode(samples, seed);
    Ok(Attribution { inner: realexp_permutation(&game.inner, &s, mode).map_err(to_py)? })
}

/// Masks as lists of kept flags. `policy` is "fixed_count", "bernoulli" or "monte_carlo_rate".
#[pyfunction(name = "generate_masks")]
#[pyo3(signature = (n, count, alpha, policy="fixed_count", seed=0, sigma_q2=0.05))]
fn py_generate_masks(
    n: usize,
    count: usize,
    alpha: f64,
    policy: &str,
    seed: u64,
    sigma_q2: f64,
) -> PyResult<Vec<Vec<bool>>> {
    let policy = match policy {
        "fixed_count" => MaskPolicy::FixedCount,
        "bernoulli" => MaskPolicy::Bernoulli,
        "monte_carlo_rate" => MaskPolicy::MonteCarloRate { sigma_q2 },
        other => return Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
    };
    let masks = generate_masks(n, count, alpha, policy, seed).map_err(to_py)?;
    Ok(masks.iter().map(|m| m.as_slice().to_vec()).collect())
}

#[pyclass(frozen)]
#[derive(Clone)]
struct RunConfig {
    inner: realexp::RunConfig,
}

#[pymethods]
impl RunConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: realexp::RunConfig::from_json(text).map_err(to_py)? })
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: realexp::RunConfig::load(path).map_err(to_py)? })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { inner: realexp::RunConfig { seed, ..self.inner.clone() } }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyclass(frozen)]
struct ImportanceReport {
    inner: realexp::ImportanceReport,
}

#[pymethods]
impl ImportanceReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: realexp::ImportanceReport::from_json(text).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn attribution(&self) -> Attribution {
        Attribution { inner: self.inner.attribution.clone() }
    }

    #[getter]
    fn ranking(&self) -> Vec<usize> {
        self.inner.ranking.clone()
    }

    #[getter]
    fn heldout_r2(&self) -> Option<f64> {
        self.inner.heldout_r2
    }

    #[getter]
    fn r2_train(&self) -> f64 {
        self.inner.fit.r2_train
    }

    #[getter]
    fn similarity(&self) -> Vec<Vec<f64>> {
        let m = &self.inner.similarity.matrix;
        (0..m.len()).map(|i| (0..m.len()).map(|j| m.get(i, j)).collect()).collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// JSON without timings; equal configs give equal text.
    fn canonical_json(&self) -> String {
        self.inner.canonical_json()
    }

    /// `(match_count, accuracy, tau)` of the top features against the expert's picks.
    fn consistency(&self, expert: Vec<usize>) -> PyResult<(usize, f64, f64)> {
        let expert = ExpertAnnotation::new(expert).map_err(to_py)?;
        let r = consistency_eval(&self.inner, &expert).map_err(to_py)?;
        Ok((r.match_count, r.accuracy, r.tau))
    }
}

/// Runs perturbation, scoring, surrogate fit and attribution. The GIL is released meanwhile.
#[pyfunction(name = "explain")]
fn py_explain(py: Python<'_>, config: &RunConfig) -> PyResult<ImportanceReport> {
    let inner = config.inner.clone();
    let report = py.detach(move || explain(&inner)).map_err(to_py)?;
    Ok(ImportanceReport { inner: report })
}

#[pyfunction(name = "kendall_tau")]
fn py_kendall_tau(expert: Vec<usize>, model: Vec<usize>) -> PyResult<(usize, f64, f64)> {
    let expert = ExpertAnnotation::new(expert).map_err(to_py)?;
    let model = ModelRanking::new(model).map_err(to_py)?;
    let r = kendall_tau(&expert, &model).map_err(to_py)?;
    Ok((r.match_count, r.accuracy, r.tau))
}

#[pyfunction(name = "jaccard_stability")]
fn py_jaccard_stability(runs: Vec<Vec<usize>>) -> PyResult<f64> {
    jaccard_stability(&runs).map_err(to_py)
}

#[pyfunction(name = "r_squared")]
fn py_r_squared(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    Ok(r_squared(&actual, &predicted).map_err(to_py)?.value)
}

#[pymodule]
fn pyrealexp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TableGame>()?;
    m.add_class::<Attribution>()?;
    m.add_class::<RunConfig>()?;
    m.add_class::<ImportanceReport>()?;
    m.add_function(wrap_pyfunction!(py_exact_shapley, m)?)?;
    m.add_function(wrap_pyfunction!(py_permutation_shapley, m)?)?;
    m.add_function(wrap_pyfunction!(py_realexp_decoupled, m)?)?;
    m.add_function(wrap_pyfunction!(py_realexp_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(py_generate_masks, m)?)?;
    m.add_function(wrap_pyfunction!(py_explain, m)?)?;
    m.add_function(wrap_pyfunction!(py_kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(py_jaccard_stability, m)?)?;
    m.add_function(wrap_pyfunction!(py_r_squared, m)?)?;
    Ok(())
}
