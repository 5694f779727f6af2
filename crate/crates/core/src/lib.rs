//! Adaptive Monte Carlo estimation and search for step-level process
//! supervision data.
//!
//! The crate estimates the value of reasoning prefixes (the probability that
//! a continuation reaches a correct answer) with an uncertainty-driven
//! adaptive sampler built on Wilson score intervals and strategy clustering,
//! expands reasoning trees under a time-decaying exploration schedule, and
//! exports the resulting step-level supervision records. A benchmark harness
//! compares the adaptive estimator against the fixed-budget baseline on
//! synthetic node forests, and a desk-scale trainer fits a soft-label scorer
//! on the exported records.

pub mod clustering;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod rollout;
pub mod search;
pub mod seeding;
pub mod trainer;

pub use config::{RunConfig, SourceKind};
pub use error::{Error, Result};
