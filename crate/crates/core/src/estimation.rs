//! Uncertainty-driven adaptive node value estimation.
//!
//! A node's value is the probability that a continuation from its prefix
//! reaches a correct answer. The estimator draws a small initial batch,
//! clusters it by strategy features, and then iterates: pick the most
//! uncertain active cluster, size the next batch by that uncertainty, draw,
//! assign, update, and stop on confidence, budget exhaustion, or universal
//! cluster convergence. The fixed-budget baseline estimates the same quantity
//! with a constant number of rollouts.

use serde::{Deserialize, Serialize};

use crate::clustering::{assign, update_cluster, ClusterSet};
use crate::error::{Error, Result};
use crate::rollout::{extract_features, fit_feature_stats, Problem, RolloutRecord, RolloutSource};
use crate::seeding::mix;

/// Tag mixed into the node seed for the k-means RNG, keeping it off the
/// rollout stream.
const KMEANS_SEED_TAG: u64 = 0x6b6d;

/// Estimator parameters (the `estimator.*` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Size of the exploratory initial batch.
    pub k_init: usize,
    /// Total rollout budget per node, checked between batches.
    pub k_max: usize,
    /// Number of strategy clusters requested from k-means.
    pub k_clusters: usize,
    /// Node-level confidence threshold.
    pub eps_node: f64,
    /// Per-cluster convergence threshold.
    pub eps_cluster: f64,
    /// Per-cluster sampling budget.
    pub n_max_cluster: usize,
    /// Scale from uncertainty to batch size.
    pub gamma: f64,
    /// Batch size bounds.
    pub m_min: usize,
    pub m_max: usize,
    /// Critical value for the Wilson interval.
    pub z: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k_init: 6,
            k_max: 32,
            k_clusters: 3,
            eps_node: 0.1,
            eps_cluster: 0.1,
            n_max_cluster: 22,
            gamma: 10.0,
            m_min: 1,
            m_max: 8,
            z: 1.96,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_init == 0 {
            return Err(Error::config("estimator.k_init", "must be at least 1"));
        }
        if self.k_init > self.k_max {
            return Err(Error::config(
                "estimator.k_max",
                "must be at least estimator.k_init",
            ));
        }
        if self.k_clusters == 0 {
            return Err(Error::config("estimator.k_clusters", "must be at least 1"));
        }
        for (key, value) in [
            ("estimator.eps_node", self.eps_node),
            ("estimator.eps_cluster", self.eps_cluster),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::config(key, "must lie strictly inside (0, 1)"));
            }
        }
        if self.n_max_cluster == 0 {
            return Err(Error::config("estimator.n_max_cluster", "must be at least 1"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::config("estimator.gamma", "must be positive"));
        }
        if self.m_min == 0 {
            return Err(Error::config("estimator.m_min", "must be at least 1"));
        }
        if self.m_min > self.m_max {
            return Err(Error::config("estimator.m_max", "must be at least estimator.m_min"));
        }
        if self.z <= 0.0 {
            return Err(Error::config("estimator.z", "must be positive"));
        }
        Ok(())
    }
}

/// Why estimation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// Node-level uncertainty went below `eps_node`.
    Confidence,
    /// The total or remaining per-cluster budget ran out.
    Budget,
    /// Every cluster's uncertainty went below `eps_cluster`.
    ClusterConvergence,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TerminationReason::Confidence => write!(f, "confidence"),
            TerminationReason::Budget => write!(f, "budget"),
            TerminationReason::ClusterConvergence => write!(f, "cluster_convergence"),
        }
    }
}

/// Per-cluster summary carried on a node estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n: u64,
    pub s: u64,
    pub p_hat: f64,
    pub delta: f64,
}

/// Final value estimate of a reasoning prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    pub mu_hat: f64,
    pub delta_node: f64,
    pub n_total: u64,
    pub per_cluster: Vec<ClusterSummary>,
    pub termination_reason: TerminationReason,
    /// Refinement batches drawn after the initial batch.
    pub iterations: u64,
}

/// Half the width of the Wilson score interval for `s` successes in `n`
/// trials at critical value `z`. An empty cluster gets the maximal
/// uncertainty sentinel 1.0.
pub fn wilson_delta(s: u64, n: u64, z: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let p = s as f64 / nf;
    let z2 = z * z;
    (z / (1.0 + z2 / nf)) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt()
}

/// Aggregate node-level uncertainty: the sample-size-weighted quadrature
/// `sqrt(sum (n_j / n_total)^2 * delta_j^2)`.
pub fn node_delta(per_cluster: &[(u64, f64)]) -> Result<f64> {
    let n_total: u64 = per_cluster.iter().map(|(n, _)| n).sum();
    if n_total == 0 {
        return Err(Error::EmptySample("node_delta over zero samples".into()));
    }
    let nf = n_total as f64;
    let sum: f64 = per_cluster
        .iter()
        .map(|(n, delta)| {
            let w = *n as f64 / nf;
            w * w * delta * delta
        })
        .sum();
    Ok(sum.sqrt())
}

/// Clusters still eligible for sampling: below the per-cluster budget and
/// above the convergence threshold.
pub fn active_set(set: &ClusterSet, cfg: &EstimatorConfig) -> Vec<usize> {
    set.clusters
        .iter()
        .filter(|c| c.total < cfg.n_max_cluster as u64 && c.delta > cfg.eps_cluster)
        .map(|c| c.id)
        .collect()
}

/// The most uncertain active cluster, ties to the lowest id. `None` when no
/// cluster is active.
pub fn select_target(set: &ClusterSet, cfg: &EstimatorConfig) -> Option<usize> {
    let mut best: Option<usize> = None;
    for id in active_set(set, cfg) {
        match best {
            Some(b) if set.clusters[id].delta <= set.clusters[b].delta => {}
            _ => best = Some(id),
        }
    }
    best
}

/// Batch size for a target uncertainty: `min(m_max, max(m_min, ceil(gamma * delta)))`.
pub fn sample_count(delta: f64, cfg: &EstimatorConfig) -> usize {
    let scaled = (cfg.gamma * delta).ceil() as usize;
    scaled.clamp(cfg.m_min, cfg.m_max)
}

/// Check the three termination conditions in order: confidence, budget,
/// universal cluster convergence.
pub fn should_terminate(
    delta_node: f64,
    n_total: u64,
    cluster_deltas: &[f64],
    cfg: &EstimatorConfig,
) -> Option<TerminationReason> {
    if delta_node <= cfg.eps_node {
        Some(TerminationReason::Confidence)
    } else if n_total >= cfg.k_max as u64 {
        Some(TerminationReason::Budget)
    } else if cluster_deltas.iter().all(|d| *d <= cfg.eps_cluster) {
        Some(TerminationReason::ClusterConvergence)
    } else {
        None
    }
}

/// Sample-size-weighted success estimate `sum (n_j / n_total) * p_hat_j`.
pub fn final_estimate(set: &ClusterSet) -> Result<f64> {
    let n_total = set.n_total();
    if n_total == 0 {
        return Err(Error::EmptySample("final_estimate over zero samples".into()));
    }
    let nf = n_total as f64;
    Ok(set
        .clusters
        .iter()
        .map(|c| (c.total as f64 / nf) * c.p_hat)
        .sum())
}

fn summaries(set: &ClusterSet) -> Vec<ClusterSummary> {
    set.clusters
        .iter()
        .map(|c| ClusterSummary {
            n: c.total,
            s: c.successes,
            p_hat: c.p_hat,
            delta: c.delta,
        })
        .collect()
}

/// Run the full adaptive estimation loop for one node.
pub fn estimate_node(
    prefix: &[String],
    problem: &Problem,
    source: &dyn RolloutSource,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<NodeEstimate> {
    estimate_node_with_preseed(prefix, problem, source, cfg, seed, Vec::new())
}

/// Adaptive estimation that accepts already-sampled rollouts of this prefix
/// as the start of the initial batch (used by tree expansion to reuse the
/// continuations that created a child). Preseeded records count toward the
/// budget exactly like drawn ones; fresh draws consume the node's seeded
/// stream from index 0.
pub fn estimate_node_with_preseed(
    prefix: &[String],
    problem: &Problem,
    source: &dyn RolloutSource,
    cfg: &EstimatorConfig,
    seed: u64,
    preseed: Vec<RolloutRecord>,
) -> Result<NodeEstimate> {
    cfg.validate()?;

    let mut records = preseed;
    let mut stream_pos = 0u64;
    if records.len() < cfg.k_init {
        let fresh = cfg.k_init - records.len();
        records.extend(source.generate_indexed(prefix, problem, stream_pos, fresh, seed)?);
        stream_pos += fresh as u64;
    }
    for record in records.iter_mut() {
        extract_features(record)?;
    }

    let stats = fit_feature_stats(&records)?;
    let mut std_points = Vec::with_capacity(records.len());
    for record in records.iter_mut() {
        let z = stats.standardize(record.raw_features);
        record.std_features = Some(z);
        std_points.push(z);
    }
    let outcomes: Vec<bool> = records.iter().map(|r| r.success).collect();

    let mut set = ClusterSet::from_initial(
        &std_points,
        &outcomes,
        cfg.k_clusters,
        mix(seed, KMEANS_SEED_TAG),
        stats,
        cfg.z,
    )?;

    let mut iterations = 0u64;
    let reason = loop {
        let per: Vec<(u64, f64)> = set.clusters.iter().map(|c| (c.total, c.delta)).collect();
        let d_node = node_delta(&per)?;
        if let Some(reason) = should_terminate(d_node, set.n_total(), &set.deltas(), cfg) {
            break reason;
        }
        let Some(target) = select_target(&set, cfg) else {
            // Every unconverged cluster is at its per-cluster budget, so no
            // further sampling is possible: budget exhaustion.
            break TerminationReason::Budget;
        };

        let batch_size = sample_count(set.clusters[target].delta, cfg);
        let batch = source
            .generate_indexed(prefix, problem, stream_pos, batch_size, seed)
            .map_err(|e| match e {
                Error::Transport(message) => Error::Transport(format!(
                    "{message} (node had {} rollouts over {} clusters when the source failed)",
                    set.n_total(),
                    set.clusters.len()
                )),
                other => other,
            })?;
        stream_pos += batch_size as u64;
        iterations += 1;

        for mut record in batch {
            extract_features(&mut record)?;
            let z = set.feature_stats.standardize(record.raw_features);
            record.std_features = Some(z);
            let cluster_id = assign(z, &set);
            let rollout_index = records.len();
            update_cluster(&mut set, cluster_id, rollout_index, record.success, z)?;
            records.push(record);
        }
    };

    let per: Vec<(u64, f64)> = set.clusters.iter().map(|c| (c.total, c.delta)).collect();
    Ok(NodeEstimate {
        mu_hat: final_estimate(&set)?,
        delta_node: node_delta(&per)?,
        n_total: set.n_total(),
        per_cluster: summaries(&set),
        termination_reason: reason,
        iterations,
    })
}

/// Fixed-budget baseline: the plain success fraction over `n` rollouts.
pub fn fixed_budget_estimate(
    prefix: &[String],
    problem: &Problem,
    source: &dyn RolloutSource,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySample("fixed budget of zero rollouts".into()));
    }
    let records = source.generate_indexed(prefix, problem, 0, n, seed)?;
    let successes = records.iter().filter(|r| r.success).count();
    Ok(successes as f64 / n as f64)
}
