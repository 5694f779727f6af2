//! Run configuration: a TOML file with one section per subsystem.
//!
//! Unknown keys anywhere in the file are rejected, and every constraint
//! violation names the offending key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimatorConfig;
use crate::harness::ForestSpec;
use crate::rollout::{Problem, RemoteConfig, SimNodeSpec, SimWorld};
use crate::search::SearchConfig;
use crate::trainer::TrainConfig;

/// Which rollout source a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Sim,
    Remote,
}

/// The `run.*` section: global seed, output, parallelism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: String,
    pub log_level: String,
    pub max_parallel_problems: usize,
    pub source: SourceKind,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            out_dir: "out".to_string(),
            log_level: "info".to_string(),
            max_parallel_problems: 4,
            source: SourceKind::Sim,
        }
    }
}

/// How simulated ground truth is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// A strategy tree derived deterministically from the problem id.
    Procedural,
    /// One flat node with a pinned success probability.
    Single,
}

/// The `sim.*` section: simulated-world shape for sim-source runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub mode: SimMode,
    /// Success probability of the single-node world.
    pub true_p: f64,
    /// Draw features from spread mixtures; constant features collapse the
    /// world to one strategy cluster.
    pub varied_features: bool,
    /// Script depth of procedural worlds.
    pub depth: usize,
    /// Branches per scripted node of procedural worlds.
    pub fanout: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            mode: SimMode::Procedural,
            true_p: 0.5,
            varied_features: true,
            depth: 3,
            fanout: 3,
        }
    }
}

impl SimSection {
    pub fn world_for(&self, problem: &Problem, seed: u64) -> SimWorld {
        match self.mode {
            SimMode::Procedural => SimWorld::procedural(problem, self.depth, self.fanout, seed),
            SimMode::Single => {
                let spec = if self.varied_features {
                    SimNodeSpec::varied(self.true_p)
                } else {
                    SimNodeSpec::constant(self.true_p, 0.9, 4.8)
                };
                SimWorld::single(spec)
            }
        }
    }
}

/// The `harness.*` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    pub node_count: usize,
    pub bucket_weights: [f64; 5],
    /// Baseline rollout count per node.
    pub fixed_n: usize,
    /// Number of comparison seeds derived from the run seed.
    pub num_seeds: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            node_count: 500,
            bucket_weights: [0.2; 5],
            fixed_n: 16,
            num_seeds: 20,
        }
    }
}

impl HarnessSection {
    pub fn forest_spec(&self, seed: u64) -> ForestSpec {
        ForestSpec {
            node_count: self.node_count,
            bucket_weights: self.bucket_weights,
            seed,
            ..ForestSpec::default()
        }
    }
}

/// Parsed configuration for one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub estimator: EstimatorConfig,
    pub search: SearchConfig,
    pub harness: HarnessSection,
    pub remote: RemoteConfig,
    pub trainer: TrainConfig,
    pub sim: SimSection,
}

impl RunConfig {
    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parse and validate config text.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig {
            key: "config".to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.search.validate()?;
        self.trainer.validate()?;
        if self.run.max_parallel_problems == 0 {
            return Err(Error::config(
                "run.max_parallel_problems",
                "must be at least 1",
            ));
        }
        if self.harness.node_count == 0 {
            return Err(Error::config("harness.node_count", "must be at least 1"));
        }
        if self.harness.fixed_n == 0 {
            return Err(Error::config("harness.fixed_n", "must be at least 1"));
        }
        if self.harness.num_seeds == 0 {
            return Err(Error::config("harness.num_seeds", "must be at least 1"));
        }
        let total: f64 = self.harness.bucket_weights.iter().sum();
        if self.harness.bucket_weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "harness.bucket_weights",
                "must be non-negative and sum to 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.sim.true_p) {
            return Err(Error::config("sim.true_p", "must be within [0, 1]"));
        }
        if self.sim.depth == 0 {
            return Err(Error::config("sim.depth", "must be at least 1"));
        }
        if self.sim.fanout == 0 {
            return Err(Error::config("sim.fanout", "must be at least 1"));
        }
        // The remote section is validated only when a remote run starts, so
        // sim-only configs need no model name.
        Ok(())
    }
}
