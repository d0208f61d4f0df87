//! Protocol for handing models to an external trainer.
//!
//! Requests and results are JSON lines. They travel either over the standard
//! streams of an evaluator process or through a pair of files.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::record::{ModelRecord, Source};
use crate::archspace::Regime;
use crate::error::{Error, Result};
use crate::space::Architecture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub run_id: String,
    pub arch: Architecture,
    pub seed: u64,
    #[serde(default)]
    pub regime: Regime,
}

impl EvalRequest {
    pub fn from_record(r: &ModelRecord) -> Self {
        EvalRequest {
            run_id: r.run_id.clone(),
            arch: r.arch.clone(),
            seed: r.seed,
            regime: r.regime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub run_id: String,
    pub error: f64,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metadata: serde_json::Value,
}

/// Results in arrival order plus whatever could not be matched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOutcome {
    pub results: Vec<EvalResult>,
    /// Run ids still without a valid result.
    pub missing: Vec<String>,
    /// Lines that were ignored, with the reason.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvaluatorConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Longest wait for the next result line before the process is killed.
    pub timeout: Duration,
    /// Extra attempts for requests left unanswered.
    pub retries: u32,
}

/// Matches result lines against outstanding requests. Results for unknown
/// run ids are ignored; repeats of a finished run id are dropped.
struct Collector {
    outstanding: HashSet<String>,
    done: HashSet<String>,
    outcome: EvalOutcome,
}

impl Collector {
    fn new(requests: &[EvalRequest]) -> Self {
        Collector {
            outstanding: requests.iter().map(|r| r.run_id.clone()).collect(),
            done: HashSet::new(),
            outcome: EvalOutcome::default(),
        }
    }

    fn accept_line(&mut self, line: &str) {
        let line = line.trim();
        if line.is_empty() {
            return;
        }
        let res: EvalResult = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                self.outcome.warnings.push(format!("malformed result: {e}"));
                return;
            }
        };
        if self.done.contains(&res.run_id) {
            return;
        }
        if !self.outstanding.contains(&res.run_id) {
            self.outcome.warnings.push(format!("unknown run_id `{}`", res.run_id));
            return;
        }
        if !(0.0..=100.0).contains(&res.error) {
            self.outcome
                .warnings
                .push(format!("run `{}`: error {} outside [0, 100]", res.run_id, res.error));
            return;
        }
        self.outstanding.remove(&res.run_id);
        self.done.insert(res.run_id.clone());
        self.outcome.results.push(res);
    }

    fn finish(mut self, order: &[EvalRequest]) -> EvalOutcome {
        self.outcome.missing = order
            .iter()
            .filter(|r| self.outstanding.contains(&r.run_id))
            .map(|r| r.run_id.clone())
            .collect();
        self.outcome
    }
}

/// One evaluator process run over `requests`. Returns once every request is
/// answered, the process closes its output, or the timeout expires.
fn run_once(cfg: &EvaluatorConfig, requests: &[EvalRequest], col: &mut Collector) -> Result<()> {
    let (prog, args) = cfg
        .command
        .split_first()
        .ok_or_else(|| Error::Evaluator("empty evaluator command".into()))?;
    let mut child = Command::new(prog)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Evaluator(format!("cannot start `{prog}`: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let payload: Vec<String> = requests
        .iter()
        .map(|r| serde_json::to_string(r).expect("requests serialize"))
        .collect();
    let writer = thread::spawn(move || {
        for line in payload {
            if writeln!(stdin, "{line}").is_err() {
                break;
            }
        }
    });

    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            match line {
                Ok(l) => {
                    if tx.send(l).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });

    while !col.outstanding.is_empty() {
        match rx.recv_timeout(cfg.timeout) {
            Ok(line) => col.accept_line(&line),
            Err(RecvTimeoutError::Timeout) => {
                col.outcome.warnings.push(format!("timed out after {:?}", cfg.timeout));
                break;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    let _ = child.kill();
    let _ = child.wait();
    let _ = writer.join();
    Ok(())
}

/// Sends `requests` to an evaluator process, retrying unanswered ones.
pub fn run_subprocess(cfg: &EvaluatorConfig, requests: &[EvalRequest]) -> Result<EvalOutcome> {
    let mut col = Collector::new(requests);
    for _ in 0..=cfg.retries {
        let pending: Vec<EvalRequest> = requests
            .iter()
            .filter(|r| col.outstanding.contains(&r.run_id))
            .cloned()
            .collect();
        if pending.is_empty() {
            break;
        }
        run_once(cfg, &pending, &mut col)?;
    }
    let outcome = col.finish(requests);
    if !outcome.missing.is_empty() {
        return Err(Error::Evaluator(format!(
            "{} of {} requests unanswered after {} attempt(s)",
            outcome.missing.len(),
            requests.len(),
            cfg.retries + 1
        )));
    }
    Ok(outcome)
}

/// Writes requests as JSON lines for a file-based evaluator.
pub fn write_requests(path: &Path, requests: &[EvalRequest]) -> Result<()> {
    let mut out = String::new();
    for r in requests {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a results file written in response to `requests`.
pub fn read_results(path: &Path, requests: &[EvalRequest]) -> Result<EvalOutcome> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut col = Collector::new(requests);
    for line in text.lines() {
        col.accept_line(line);
    }
    Ok(col.finish(requests))
}

/// Copies result errors onto the matching records and marks them external.
/// Returns how many records were updated.
pub fn apply_results(records: &mut [ModelRecord], results: &[EvalResult]) -> usize {
    let by_id: HashMap<&str, f64> = results.iter().map(|r| (r.run_id.as_str(), r.error)).collect();
    let mut n = 0;
    for r in records.iter_mut() {
        if let Some(&e) = by_id.get(r.run_id.as_str()) {
            r.error = Some(e);
            r.source = Source::External;
            n += 1;
        }
    }
    n
}
