//! Line-delimited JSON protocol shared by the subprocess and HTTP transports.
//!
//! Request:  `{"id": 7, "instances": [<payload>, ...]}`
//! Response: `{"id": 7, "scores": [0.31, ...]}`

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub instances: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub scores: Vec<Option<f64>>,
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

/// Parses and checks one response line against the request it answers.
pub fn parse_response(line: &str, id: u64, expected: usize) -> Result<Vec<f64>> {
    let line = line.trim_end_matches(['\r', '\n']);
    let response: Response = serde_json::from_str(line).map_err(|e| {
        if line.contains("NaN") || line.contains("Infinity") {
            Error::Evaluation(format!("model returned a non-finite score: {line}"))
        } else {
            Error::Protocol { message: e.to_string(), line: line.to_owned() }
        }
    })?;
    if response.id != id {
        return Err(Error::Protocol {
            message: format!("expected response id {id}, got {}", response.id),
            line: line.to_owned(),
        });
    }
    if response.scores.len() != expected {
        return Err(Error::Protocol {
            message: format!("expected {expected} scores, got {}", response.scores.len()),
            line: line.to_owned(),
        });
    }
    response
        .scores
        .into_iter()
        .enumerate()
        .map(|(k, s)| match s {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Evaluation(format!("model returned a non-finite score for instance {k}"))),
        })
        .collect()
}

pub(crate) enum Exchange {
    Line(String),
    TimedOut,
}

/// A long-lived child process answering one request line with one response line.
pub(crate) struct SubprocessTransport {
    command: Vec<String>,
    dir: Option<PathBuf>,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl SubprocessTransport {
    pub(crate) fn spawn(command: &[String], dir: Option<&Path>) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::validation("subprocess endpoint needs a command"))?;
        let mut cmd = Command::new(program);
        if let Some(dir) = dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { command: command.to_vec(), dir: dir.map(Path::to_path_buf), child, stdin, lines })
    }

    pub(crate) fn exchange(&mut self, line: &str, timeout: Duration) -> Result<Exchange> {
        writeln!(self.stdin, "{line}")
            .and_then(|()| self.stdin.flush())
            .map_err(|e| Error::Transport(format!("writing to model process: {e}")))?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(Exchange::Line(line)),
            Ok(Err(e)) => Err(Error::Transport(format!("reading from model process: {e}"))),
            Err(RecvTimeoutError::Timeout) => Ok(Exchange::TimedOut),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("model process closed its output".into())),
        }
    }

    /// Replaces a stalled process with a fresh one.
    pub(crate) fn restart(&mut self) -> Result<()> {
        let _ = self.child.kill();
        let _ = self.child.wait();
        *self = Self::spawn(&self.command.clone(), self.dir.clone().as_deref())?;
        Ok(())
    }
}

impl Drop for SubprocessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub(crate) struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub(crate) fn new(url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { url: url.to_owned(), agent }
    }

    pub(crate) fn url(&self) -> &str {
        &self.url
    }

    pub(crate) fn exchange(&mut self, line: &str) -> Result<Exchange> {
        let result = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(line);
        match result {
            Ok(mut response) => response
                .body_mut()
                .read_to_string()
                .map(Exchange::Line)
                .map_err(|e| Error::Transport(format!("reading response from {}: {e}", self.url))),
            Err(ureq::Error::Timeout(_)) => Ok(Exchange::TimedOut),
            Err(e) => Err(Error::Transport(format!("POST {}: {e}", self.url))),
        }
    }
}
