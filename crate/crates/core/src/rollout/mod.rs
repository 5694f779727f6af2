//! Rollout sources, records, and feature extraction.
//!
//! A rollout is one sampled continuation from a reasoning prefix down to a
//! final answer. This module defines the record type, the two-dimensional
//! (confidence, complexity) feature space, the z-score standardization that
//! is fitted once per node and frozen, and the source abstraction with its
//! simulated and remote implementations.

mod answer;
mod remote;
mod sim;

pub use answer::check_answer;
pub use remote::{RemoteConfig, RemoteSource, API_KEY_ENV, BASE_URL_ENV};
pub use sim::{MixtureComponent, SimNodeSpec, SimScriptNode, SimSource, SimWorld};

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard added to the token count before taking the log, so a length of one
/// does not map to exactly zero.
pub const LENGTH_GUARD: f64 = 1e-6;

/// Guard added to the standard deviation when standardizing, so constant
/// features divide cleanly.
pub const STD_GUARD: f64 = 1e-8;

/// A problem instance: statement, gold answer, and its token length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
    /// Whitespace token count of the statement; always at least 1.
    pub statement_tokens: usize,
}

impl Problem {
    pub fn new(
        id: impl Into<String>,
        statement: impl Into<String>,
        gold_answer: impl Into<String>,
    ) -> Result<Self> {
        let id = id.into();
        let statement = statement.into();
        if id.is_empty() {
            return Err(Error::InvalidProblem("problem id is empty".into()));
        }
        let statement_tokens = whitespace_tokens(&statement);
        if statement_tokens == 0 {
            return Err(Error::InvalidProblem(format!(
                "problem `{id}` has an empty statement"
            )));
        }
        Ok(Problem {
            id,
            statement,
            gold_answer: gold_answer.into(),
            statement_tokens,
        })
    }
}

/// Whitespace-delimited token count, the deterministic local rule used for
/// all plain-text lengths in this crate.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Which kind of source produced a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Simulated,
    Remote,
}

impl std::fmt::Display for SourceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceTag::Simulated => write!(f, "simulated"),
            SourceTag::Remote => write!(f, "remote"),
        }
    }
}

/// One sampled continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    /// Step texts of the continuation, in order. Never empty.
    pub steps: Vec<String>,
    /// Total token count of the continuation. Always at least 1.
    pub token_count: usize,
    /// Average per-token negative log-likelihood, in nats. Non-negative.
    pub mean_nll: f64,
    /// Whether the continuation reached the gold answer.
    pub success: bool,
    /// `[mean_nll, ln(token_count + 1e-6)]`.
    pub raw_features: [f64; 2],
    /// Raw features after z-score standardization; present once the node's
    /// stats were fitted.
    pub std_features: Option<[f64; 2]>,
    pub source_tag: SourceTag,
    /// Set when the source could not report log-probabilities and the
    /// documented fallback (`mean_nll = 0`) was used.
    #[serde(default)]
    pub degraded: bool,
}

impl RolloutRecord {
    /// Build a record and populate its raw features.
    pub fn new(
        steps: Vec<String>,
        token_count: usize,
        mean_nll: f64,
        success: bool,
        source_tag: SourceTag,
    ) -> Result<Self> {
        let mut record = RolloutRecord {
            steps,
            token_count,
            mean_nll,
            success,
            raw_features: [0.0, 0.0],
            std_features: None,
            source_tag,
            degraded: false,
        };
        if record.steps.is_empty() {
            return Err(Error::InvalidRollout("steps list is empty".into()));
        }
        if record.mean_nll < 0.0 {
            return Err(Error::InvalidRollout("mean_nll is negative".into()));
        }
        extract_features(&mut record)?;
        Ok(record)
    }
}

/// Extract the (confidence, complexity) feature pair and write it back onto
/// the record: `[mean_nll, ln(token_count + 1e-6)]`.
pub fn extract_features(rollout: &mut RolloutRecord) -> Result<[f64; 2]> {
    if rollout.token_count == 0 {
        return Err(Error::InvalidRollout("token_count is zero".into()));
    }
    let features = [
        rollout.mean_nll,
        (rollout.token_count as f64 + LENGTH_GUARD).ln(),
    ];
    rollout.raw_features = features;
    Ok(features)
}

/// Per-dimension mean and population standard deviation of a feature sample.
///
/// Stats are fitted once on a node's initial rollouts and then frozen: every
/// later rollout of the same node is standardized with the same parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats<const D: usize> {
    pub mean: [f64; D],
    pub std: [f64; D],
}

/// Stats over the two rollout features.
pub type FeatureStats = Stats<2>;

impl<const D: usize> Stats<D> {
    /// Fit population (1/n) mean and standard deviation per dimension.
    pub fn fit(points: &[[f64; D]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample("cannot fit stats on zero points".into()));
        }
        let n = points.len() as f64;
        let mut mean = [0.0; D];
        for p in points {
            for d in 0..D {
                mean[d] += p[d];
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = [0.0; D];
        for p in points {
            for d in 0..D {
                let diff = p[d] - mean[d];
                var[d] += diff * diff;
            }
        }
        let mut std = [0.0; D];
        for d in 0..D {
            std[d] = (var[d] / n).sqrt();
        }
        Ok(Stats { mean, std })
    }

    /// `(v - mean) / (std + 1e-8)` per dimension.
    pub fn standardize(&self, v: [f64; D]) -> [f64; D] {
        let mut out = [0.0; D];
        for d in 0..D {
            out[d] = (v[d] - self.mean[d]) / (self.std[d] + STD_GUARD);
        }
        out
    }
}

/// Fit feature stats over the raw features of a set of rollouts.
pub fn fit_feature_stats(rollouts: &[RolloutRecord]) -> Result<FeatureStats> {
    let points: Vec<[f64; 2]> = rollouts.iter().map(|r| r.raw_features).collect();
    Stats::fit(&points)
}

/// Standardize one feature pair with frozen stats.
pub fn standardize(v: [f64; 2], stats: &FeatureStats) -> [f64; 2] {
    stats.standardize(v)
}

/// A source of rollouts from a reasoning prefix.
///
/// Sources expose an indexed stream: record `i` of a given
/// `(prefix, problem, rng_seed)` stream is a pure function of those inputs
/// and `i`. `generate` returns the stream prefix `0..count`, and batched
/// callers can continue the same stream with `generate_indexed`, so any
/// partition of `0..n` into batches yields the identical record list.
pub trait RolloutSource {
    /// Generate `count` records at stream positions `start..start + count`.
    fn generate_indexed(
        &self,
        prefix: &[String],
        problem: &Problem,
        start: u64,
        count: usize,
        rng_seed: u64,
    ) -> Result<Vec<RolloutRecord>>;

    /// Generate the first `count` records of the stream.
    fn generate(
        &self,
        prefix: &[String],
        problem: &Problem,
        count: usize,
        rng_seed: u64,
    ) -> Result<Vec<RolloutRecord>> {
        self.generate_indexed(prefix, problem, 0, count, rng_seed)
    }

    fn tag(&self) -> SourceTag;
}

/// Load problems from a JSONL file with fields `id`, `problem`, `answer`.
pub fn load_problems_jsonl(path: &Path) -> Result<Vec<Problem>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        problem: String,
        answer: String,
    }

    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut problems = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut offset = 0u64;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            offset,
            message: e.to_string(),
        })?;
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::Validation {
                line: line_no,
                message: format!("duplicate problem id `{}`", parsed.id),
            });
        }
        problems.push(Problem::new(parsed.id, parsed.problem, parsed.answer)?);
        offset += line.len() as u64 + 1;
    }
    Ok(problems)
}
