//! Access to the model being explained.

mod protocol;

use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{apply_mask, AdaptedInstance, Payload};
use crate::error::{Error, Result};
use crate::forest::TreeNode;
use crate::perturbation::Mask;

pub use protocol::{parse_response, Request, Response};
use protocol::{Exchange, HttpTransport, SubprocessTransport};

/// Attempts after a timeout before giving up.
const TIMEOUT_RETRIES: usize = 2;

/// In-process reference models over a numeric feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinModel {
    Linear { w: Vec<f64>, b: f64 },
    Logistic { w: Vec<f64>, b: f64 },
    LookupTree { tree: TreeNode },
}

impl BuiltinModel {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let dot = |w: &[f64]| -> Result<f64> {
            if w.len() != x.len() {
                return Err(Error::validation(format!(
                    "model expects {} features, got {}",
                    w.len(),
                    x.len()
                )));
            }
            Ok(w.iter().zip(x).map(|(a, b)| a * b).sum())
        };
        let score = match self {
            BuiltinModel::Linear { w, b } => dot(w)? + b,
            BuiltinModel::Logistic { w, b } => 1.0 / (1.0 + (-(dot(w)? + b)).exp()),
            BuiltinModel::LookupTree { tree } => {
                if let Some(f) = tree.max_feature().filter(|&f| f >= x.len()) {
                    return Err(Error::validation(format!("tree splits on feature {f} of {}", x.len())));
                }
                tree.predict(x)
            }
        };
        if score.is_finite() {
            Ok(score)
        } else {
            Err(Error::Evaluation(format!("builtin model produced {score}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointKind {
    /// A process speaking the line protocol on stdin/stdout.
    Subprocess { command: Vec<String> },
    /// An HTTP server answering a POSTed request line with a response line.
    Http { url: String },
    Builtin { model: BuiltinModel },
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_batch_size() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    #[serde(flatten)]
    pub kind: EndpointKind,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Allows several batches in flight at once (HTTP only).
    #[serde(default)]
    pub stateless: bool,
}

impl ModelEndpoint {
    pub fn builtin(model: BuiltinModel) -> Self {
        Self {
            kind: EndpointKind::Builtin { model },
            timeout_ms: default_timeout_ms(),
            batch_size: default_batch_size(),
            stateless: true,
        }
    }

    pub fn subprocess(command: Vec<String>) -> Self {
        Self {
            kind: EndpointKind::Subprocess { command },
            timeout_ms: default_timeout_ms(),
            batch_size: default_batch_size(),
            stateless: false,
        }
    }

    pub fn http(url: impl Into<String>) -> Self {
        Self {
            kind: EndpointKind::Http { url: url.into() },
            timeout_ms: default_timeout_ms(),
            batch_size: default_batch_size(),
            stateless: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if self.timeout_ms == 0 {
            return Err(Error::validation("timeout must be positive"));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn connect(&self) -> Result<Connection> {
        self.connect_in(None)
    }

    /// Like [`connect`](Self::connect), starting a subprocess model in `dir`.
    pub fn connect_in(&self, dir: Option<&Path>) -> Result<Connection> {
        self.validate()?;
        let transport = match &self.kind {
            EndpointKind::Builtin { model } => Transport::Builtin(model.clone()),
            EndpointKind::Subprocess { command } => Transport::Subprocess(SubprocessTransport::spawn(command, dir)?),
            EndpointKind::Http { url } => Transport::Http(HttpTransport::new(url, self.timeout())),
        };
        Ok(Connection { endpoint: self.clone(), transport, next_id: 0 })
    }
}

enum Transport {
    Builtin(BuiltinModel),
    Subprocess(SubprocessTransport),
    Http(HttpTransport),
}

/// An open endpoint. Subprocess endpoints keep their child process for the
/// lifetime of the connection.
pub struct Connection {
    endpoint: ModelEndpoint,
    transport: Transport,
    next_id: u64,
}

impl Connection {
    /// One score per payload, in input order.
    pub fn score_batch(&mut self, payloads: &[Payload]) -> Result<Vec<f64>> {
        if payloads.is_empty() {
            return Err(Error::validation("cannot score an empty batch"));
        }
        if let Transport::Builtin(model) = &self.transport {
            return payloads.par_iter().map(|p| model.score(&p.features())).collect();
        }

        let chunks: Vec<(u64, &[Payload])> = payloads
            .chunks(self.endpoint.batch_size)
            .map(|chunk| {
                self.next_id += 1;
                (self.next_id, chunk)
            })
            .collect();
        let timeout = self.endpoint.timeout();

        match &mut self.transport {
            Transport::Http(http) if self.endpoint.stateless => {
                let url = http.url().to_owned();
                let scored: Vec<Vec<f64>> = chunks
                    .par_iter()
                    .map(|&(id, chunk)| {
                        let mut own = HttpTransport::new(&url, timeout);
                        exchange_with_retry(id, chunk, |line| own.exchange(line))
                    })
                    .collect::<Result<_>>()?;
                Ok(scored.concat())
            }
            Transport::Http(http) => {
                let mut out = Vec::with_capacity(payloads.len());
                for &(id, chunk) in &chunks {
                    out.extend(exchange_with_retry(id, chunk, |line| http.exchange(line))?);
                }
                Ok(out)
            }
            Transport::Subprocess(process) => {
                let mut out = Vec::with_capacity(payloads.len());
                for &(id, chunk) in &chunks {
                    let mut stalled = false;
                    let scores = exchange_with_retry(id, chunk, |line| {
                        if stalled {
                            process.restart()?;
                        }
                        let result = process.exchange(line, timeout);
                        stalled = matches!(result, Ok(Exchange::TimedOut));
                        result
                    })?;
                    out.extend(scores);
                }
                Ok(out)
            }
            Transport::Builtin(_) => unreachable!("handled above"),
        }
    }
}

fn exchange_with_retry(
    id: u64,
    chunk: &[Payload],
    mut send: impl FnMut(&str) -> Result<Exchange>,
) -> Result<Vec<f64>> {
    let line = Request { id, instances: chunk.iter().map(Payload::to_wire).collect() }.to_line();
    for _ in 0..=TIMEOUT_RETRIES {
        match send(&line)? {
            Exchange::Line(response) => return parse_response(&response, id, chunk.len()),
            Exchange::TimedOut => continue,
        }
    }
    Err(Error::Transport(format!(
        "request {id} timed out {} times",
        TIMEOUT_RETRIES + 1
    )))
}

/// Connects, scores one batch and disconnects.
pub fn score_batch(endpoint: &ModelEndpoint, payloads: &[Payload]) -> Result<Vec<f64>> {
    endpoint.connect()?.score_batch(payloads)
}

/// Renders every mask over `instance` and scores the results in mask order.
pub fn mask_and_score(connection: &mut Connection, instance: &AdaptedInstance, masks: &[Mask]) -> Result<Vec<f64>> {
    let payloads = masks.iter().map(|m| apply_mask(instance, m)).collect::<Result<Vec<_>>>()?;
    connection.score_batch(&payloads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_builtin() {
        let endpoint = ModelEndpoint::builtin(BuiltinModel::Linear { w: vec![1.0, 2.0], b: 0.0 });
        let payloads = vec![Payload::Tabular(vec![1.0, 1.0]), Payload::Tabular(vec![0.0, 3.0])];
        assert_eq!(score_batch(&endpoint, &payloads).unwrap(), vec![3.0, 6.0]);
    }

    #[test]
    fn logistic_zero_is_half() {
        let model = BuiltinModel::Logistic { w: vec![0.0; 3], b: 0.0 };
        assert_eq!(model.score(&[4.0, -2.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn arity_and_empty_batch() {
        let endpoint = ModelEndpoint::builtin(BuiltinModel::Linear { w: vec![1.0], b: 0.0 });
        assert!(score_batch(&endpoint, &[Payload::Tabular(vec![1.0, 2.0])]).is_err());
        assert!(score_batch(&endpoint, &[]).is_err());
    }

    #[test]
    fn masking_drops_linear_term() {
        let endpoint = ModelEndpoint::builtin(BuiltinModel::Linear { w: vec![0.5, 2.0, -1.0], b: 1.0 });
        let instance = AdaptedInstance::tabular(vec![2.0, 3.0, 4.0], vec![0.0; 3]).unwrap();
        let mut conn = endpoint.connect().unwrap();
        let masks = vec![Mask::all_kept(3), Mask::with_masked(3, &[1])];
        let scores = mask_and_score(&mut conn, &instance, &masks).unwrap();
        assert_eq!(scores[0], 1.0 + 1.0 + 6.0 - 4.0);
        assert_eq!(scores[0] - scores[1], 2.0 * 3.0);
    }

    #[test]
    fn endpoint_json() {
        let json = r#"{"kind": "builtin", "model": {"linear": {"w": [1.0], "b": 0.5}}}"#;
        let endpoint: ModelEndpoint = serde_json::from_str(json).unwrap();
        assert_eq!(endpoint.batch_size, 64);
        assert!(matches!(endpoint.kind, EndpointKind::Builtin { .. }));
        let json = r#"{"kind": "subprocess", "command": ["python3", "model.py"], "batch_size": 8}"#;
        let endpoint: ModelEndpoint = serde_json::from_str(json).unwrap();
        assert_eq!(endpoint.batch_size, 8);
    }
}
