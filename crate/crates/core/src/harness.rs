//! Desk-scale benchmark harness: synthetic node forests and adaptive versus
//! fixed-budget comparison on error, budget, and allocation shape.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{bucket_index, BUCKETS};
use crate::error::{Error, Result};
use crate::estimation::{estimate_node, fixed_budget_estimate, EstimatorConfig};
use crate::rollout::{MixtureComponent, Problem, SimNodeSpec, SimSource};
use crate::seeding::mix;

/// Specification of a synthetic forest of estimation nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSpec {
    pub node_count: usize,
    /// Probability of assigning a node to each value bucket.
    pub bucket_weights: [f64; 5],
    /// Feature mixtures shared by every node.
    pub nll_mixture: Vec<MixtureComponent>,
    pub length_mixture: Vec<MixtureComponent>,
    pub seed: u64,
}

impl Default for ForestSpec {
    fn default() -> Self {
        let template = SimNodeSpec::varied(0.5);
        ForestSpec {
            node_count: 500,
            bucket_weights: [0.2; 5],
            nll_mixture: template.nll_mixture,
            length_mixture: template.length_mixture,
            seed: 0,
        }
    }
}

impl ForestSpec {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::config("harness.node_count", "must be at least 1"));
        }
        let total: f64 = self.bucket_weights.iter().sum();
        if self.bucket_weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "harness.bucket_weights",
                "must be non-negative and sum to 1",
            ));
        }
        Ok(())
    }
}

/// Sample a forest: each node gets a bucket by weight and a true success
/// probability uniform within that bucket.
pub fn make_forest(spec: &ForestSpec) -> Result<Vec<SimNodeSpec>> {
    spec.validate()?;
    let mut nodes = Vec::with_capacity(spec.node_count);
    for i in 0..spec.node_count {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, i as u64));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut bucket = 4usize;
        for (b, w) in spec.bucket_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                bucket = b;
                break;
            }
        }
        let (lo, hi) = BUCKETS[bucket];
        let p = lo + rng.random::<f64>() * (hi - lo);
        nodes.push(SimNodeSpec {
            true_success_prob: p,
            nll_mixture: spec.nll_mixture.clone(),
            length_mixture: spec.length_mixture.clone(),
        });
    }
    Ok(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Adaptive,
    Fixed,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Adaptive => write!(f, "adaptive"),
            Policy::Fixed => write!(f, "fixed"),
        }
    }
}

/// One estimation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node_id: usize,
    pub true_p: f64,
    pub policy: Policy,
    pub estimate: f64,
    pub abs_error: f64,
    pub rollouts: u64,
    pub seed: u64,
}

/// Aggregates for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub mean_abs_error: f64,
    pub mean_rollouts: f64,
    /// Mean rollouts per true-value bucket; `None` for empty buckets.
    pub per_bucket_mean_rollouts: [Option<f64>; 5],
}

/// Paired comparison of adaptive and fixed-budget estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub adaptive: PolicySummary,
    pub fixed: PolicySummary,
    /// Mid/extreme mean-rollout ratio of the adaptive policy, pooled over
    /// extreme records.
    pub adaptive_mid_extreme_ratio: Option<f64>,
    /// Per seed: (seed, adaptive MAE, fixed MAE).
    pub per_seed_mae: Vec<(u64, f64, f64)>,
    pub seeds: Vec<u64>,
    pub fixed_n: usize,
    pub rows: Vec<NodeRow>,
}

/// Run both policies over every (node, seed) pair with common random
/// numbers: both consume the same seeded rollout stream per node.
pub fn run_comparison(
    forest: &[SimNodeSpec],
    estimator_cfg: &EstimatorConfig,
    fixed_n: usize,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if forest.is_empty() {
        return Err(Error::EmptySample("empty forest".into()));
    }
    if seeds.is_empty() {
        return Err(Error::EmptySample("at least one seed required".into()));
    }
    if fixed_n == 0 {
        return Err(Error::config("harness.fixed_n", "must be at least 1"));
    }
    estimator_cfg.validate()?;

    let mut rows = Vec::with_capacity(forest.len() * seeds.len() * 2);
    let mut per_seed_mae = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut adaptive_err = 0.0;
        let mut fixed_err = 0.0;
        for (node_id, spec) in forest.iter().enumerate() {
            let problem = Problem::new(
                format!("node-{node_id}"),
                "synthetic forest node with a fixed eight token statement",
                "1",
            )?;
            let source = SimSource::single(spec.clone())?;
            let node_seed = mix(seed, node_id as u64);

            let est = estimate_node(&[], &problem, &source, estimator_cfg, node_seed)?;
            let adaptive_abs = (est.mu_hat - spec.true_success_prob).abs();
            adaptive_err += adaptive_abs;
            rows.push(NodeRow {
                node_id,
                true_p: spec.true_success_prob,
                policy: Policy::Adaptive,
                estimate: est.mu_hat,
                abs_error: adaptive_abs,
                rollouts: est.n_total,
                seed,
            });

            let fixed = fixed_budget_estimate(&[], &problem, &source, fixed_n, node_seed)?;
            let fixed_abs = (fixed - spec.true_success_prob).abs();
            fixed_err += fixed_abs;
            rows.push(NodeRow {
                node_id,
                true_p: spec.true_success_prob,
                policy: Policy::Fixed,
                estimate: fixed,
                abs_error: fixed_abs,
                rollouts: fixed_n as u64,
                seed,
            });
        }
        per_seed_mae.push((
            seed,
            adaptive_err / forest.len() as f64,
            fixed_err / forest.len() as f64,
        ));
    }

    let adaptive = summarize(&rows, Policy::Adaptive);
    let fixed = summarize(&rows, Policy::Fixed);
    let adaptive_mid_extreme_ratio = mid_extreme_ratio(&rows, Policy::Adaptive);
    Ok(ComparisonReport {
        adaptive,
        fixed,
        adaptive_mid_extreme_ratio,
        per_seed_mae,
        seeds: seeds.to_vec(),
        fixed_n,
        rows,
    })
}

fn summarize(rows: &[NodeRow], policy: Policy) -> PolicySummary {
    let mine: Vec<&NodeRow> = rows.iter().filter(|r| r.policy == policy).collect();
    let n = mine.len() as f64;
    let mut bucket_sum = [0.0f64; 5];
    let mut bucket_count = [0u64; 5];
    for row in &mine {
        let b = bucket_index(row.true_p);
        bucket_sum[b] += row.rollouts as f64;
        bucket_count[b] += 1;
    }
    PolicySummary {
        mean_abs_error: mine.iter().map(|r| r.abs_error).sum::<f64>() / n,
        mean_rollouts: mine.iter().map(|r| r.rollouts as f64).sum::<f64>() / n,
        per_bucket_mean_rollouts: std::array::from_fn(|b| {
            (bucket_count[b] > 0).then(|| bucket_sum[b] / bucket_count[b] as f64)
        }),
    }
}

/// Pooled mid/extreme mean-rollout ratio over raw rows of one policy.
pub fn mid_extreme_ratio(rows: &[NodeRow], policy: Policy) -> Option<f64> {
    let mut mid = (0.0f64, 0u64);
    let mut extreme = (0.0f64, 0u64);
    for row in rows.iter().filter(|r| r.policy == policy) {
        match bucket_index(row.true_p) {
            2 => {
                mid.0 += row.rollouts as f64;
                mid.1 += 1;
            }
            0 | 4 => {
                extreme.0 += row.rollouts as f64;
                extreme.1 += 1;
            }
            _ => {}
        }
    }
    if mid.1 == 0 || extreme.1 == 0 {
        return None;
    }
    Some((mid.0 / mid.1 as f64) / (extreme.0 / extreme.1 as f64))
}

/// One-sided sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips. Ties are excluded by the caller.
pub fn sign_test_p_value(wins: u32, losses: u32) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut p = 0.0;
    let mut coeff = 1.0f64; // C(n, 0)
    let mut tail = Vec::with_capacity(n as usize + 1);
    for j in 0..=n {
        tail.push(coeff);
        coeff = coeff * (n - j) as f64 / (j + 1) as f64;
    }
    for j in wins..=n {
        p += tail[j as usize];
    }
    p * 0.5f64.powi(n as i32)
}

/// Per-node rows as CSV: `node_id,true_p,policy,estimate,abs_error,rollouts,seed`.
pub fn rows_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("node_id,true_p,policy,estimate,abs_error,rollouts,seed\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.node_id, row.true_p, row.policy, row.estimate, row.abs_error, row.rollouts,
            row.seed
        ));
    }
    out
}

/// Summary rows as CSV, one per policy plus per-bucket means.
pub fn summary_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(
        "policy,mean_abs_error,mean_rollouts,bucket_lo,bucket_hi,bucket_mean_rollouts\n",
    );
    for (policy, summary) in [
        (Policy::Adaptive, &report.adaptive),
        (Policy::Fixed, &report.fixed),
    ] {
        for (b, mean) in summary.per_bucket_mean_rollouts.iter().enumerate() {
            if let Some(mean) = mean {
                let (lo, hi) = BUCKETS[b];
                out.push_str(&format!(
                    "{},{},{},{lo},{hi},{mean}\n",
                    policy, summary.mean_abs_error, summary.mean_rollouts
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forest_respects_bucket_assignment() {
        let spec = ForestSpec {
            node_count: 5,
            bucket_weights: [0.0, 0.0, 0.0, 0.0, 1.0],
            seed: 3,
            ..ForestSpec::default()
        };
        let forest = make_forest(&spec).unwrap();
        assert_eq!(forest.len(), 5);
        assert!(forest.iter().all(|n| n.true_success_prob >= 0.8));
    }

    #[test]
    fn forest_deterministic_per_seed() {
        let spec = ForestSpec {
            node_count: 40,
            seed: 11,
            ..ForestSpec::default()
        };
        assert_eq!(make_forest(&spec).unwrap(), make_forest(&spec).unwrap());
        let other = ForestSpec { seed: 12, ..spec.clone() };
        assert_ne!(make_forest(&spec).unwrap(), make_forest(&other).unwrap());
    }

    #[test]
    fn forest_uniform_weights_balance_buckets() {
        let spec = ForestSpec {
            node_count: 500,
            seed: 7,
            ..ForestSpec::default()
        };
        let forest = make_forest(&spec).unwrap();
        let mut counts = [0usize; 5];
        for node in &forest {
            counts[bucket_index(node.true_success_prob)] += 1;
        }
        // Binomial(500, 0.2): sigma ~ 8.9, allow 3 sigma.
        for count in counts {
            assert!((73..=127).contains(&count), "counts {counts:?}");
        }
    }

    #[test]
    fn forest_rejects_bad_weights() {
        let spec = ForestSpec {
            bucket_weights: [0.5, 0.5, 0.5, 0.0, 0.0],
            ..ForestSpec::default()
        };
        assert!(make_forest(&spec).is_err());
    }

    #[test]
    fn degenerate_thresholds_run_to_budget() {
        // Thresholds too small to ever fire leave only budget exhaustion, so
        // the adaptive budget lands within one batch of k_max.
        let forest = make_forest(&ForestSpec {
            node_count: 12,
            seed: 5,
            ..ForestSpec::default()
        })
        .unwrap();
        let cfg = EstimatorConfig {
            eps_node: 1e-9,
            eps_cluster: 1e-9,
            n_max_cluster: 64,
            ..EstimatorConfig::default()
        };
        let report = run_comparison(&forest, &cfg, cfg.k_max, &[1]).unwrap();
        for row in report.rows.iter().filter(|r| r.policy == Policy::Adaptive) {
            assert!(row.rollouts >= cfg.k_max as u64);
            assert!(row.rollouts < (cfg.k_max + cfg.m_max) as u64);
        }
        let diff = (report.adaptive.mean_rollouts - report.fixed.mean_rollouts).abs();
        assert!(diff < cfg.m_max as f64);
    }

    #[test]
    fn extreme_forest_terminates_early() {
        // True p at the degenerate corners: confidence fires as soon as the
        // Wilson half-width crosses the threshold.
        let forest: Vec<SimNodeSpec> = (0..10)
            .map(|i| SimNodeSpec::constant(if i % 2 == 0 { 0.0 } else { 1.0 }, 0.5, 4.0))
            .collect();
        let cfg = EstimatorConfig::default();
        let report = run_comparison(&forest, &cfg, 32, &[1, 2]).unwrap();
        for row in report.rows.iter().filter(|r| r.policy == Policy::Adaptive) {
            assert_eq!(row.rollouts, 16);
            assert_eq!(row.abs_error, 0.0);
        }
        assert!(report.adaptive.mean_rollouts < report.fixed.mean_rollouts);
    }

    #[test]
    fn fixed_policy_rollouts_constant_adaptive_peaks_mid() {
        let forest = make_forest(&ForestSpec {
            node_count: 150,
            seed: 23,
            ..ForestSpec::default()
        })
        .unwrap();
        let cfg = EstimatorConfig::default();
        let report = run_comparison(&forest, &cfg, 16, &[4, 5]).unwrap();
        for row in report.rows.iter().filter(|r| r.policy == Policy::Fixed) {
            assert_eq!(row.rollouts, 16);
        }
        let per_bucket = report.adaptive.per_bucket_mean_rollouts;
        let mid = per_bucket[2].unwrap();
        for b in [0usize, 4] {
            assert!(mid > per_bucket[b].unwrap(), "{per_bucket:?}");
        }
    }

    #[test]
    fn sign_test_values() {
        // P(X >= 15 | n = 20) = 0.02069...
        assert!((sign_test_p_value(15, 5) - 0.02069).abs() < 1e-4);
        assert!((sign_test_p_value(10, 10) - 0.588).abs() < 1e-2);
        assert_eq!(sign_test_p_value(0, 0), 1.0);
        assert!(sign_test_p_value(20, 0) < 1e-5);
    }

    #[test]
    fn csv_shapes() {
        let forest = make_forest(&ForestSpec {
            node_count: 6,
            seed: 9,
            ..ForestSpec::default()
        })
        .unwrap();
        let report =
            run_comparison(&forest, &EstimatorConfig::default(), 16, &[1]).unwrap();
        let rows = rows_csv(&report);
        assert_eq!(rows.lines().count(), 1 + 12);
        assert!(rows.lines().nth(1).unwrap().split(',').count() == 7);
        let summary = summary_csv(&report);
        assert!(summary.lines().any(|l| l.starts_with("adaptive,")));
        assert!(summary.lines().any(|l| l.starts_with("fixed,")));
    }
}
