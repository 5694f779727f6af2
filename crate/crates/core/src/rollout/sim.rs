//! Simulated rollout source with scripted ground truth.
//!
//! A `SimWorld` is a small scripted tree of solution strategies. Each node
//! carries a `SimNodeSpec`: the true success probability of continuations
//! from that prefix plus feature mixtures for the synthetic confidence and
//! length signals. Prefixes that walk off the script inherit the spec of the
//! deepest matching node, so node values stay stable below scripted depth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::mix;

use super::{Problem, RolloutRecord, RolloutSource, SourceTag};

/// One component of a Gaussian mixture: `(weight, mean, stddev)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl MixtureComponent {
    pub fn new(weight: f64, mean: f64, stddev: f64) -> Self {
        MixtureComponent {
            weight,
            mean,
            stddev,
        }
    }
}

/// Ground truth for one simulated node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNodeSpec {
    /// Probability that a rollout from this node succeeds.
    pub true_success_prob: f64,
    /// Mixture for the mean negative log-likelihood feature.
    pub nll_mixture: Vec<MixtureComponent>,
    /// Mixture for the log token length; lengths are exponentiated and
    /// rounded to a positive integer token count.
    pub length_mixture: Vec<MixtureComponent>,
}

impl SimNodeSpec {
    /// Spec with degenerate single-point mixtures. All rollouts share the
    /// same feature vector, so the effective cluster count is one.
    pub fn constant(true_success_prob: f64, nll: f64, log_length: f64) -> Self {
        SimNodeSpec {
            true_success_prob,
            nll_mixture: vec![MixtureComponent::new(1.0, nll, 0.0)],
            length_mixture: vec![MixtureComponent::new(1.0, log_length, 0.0)],
        }
    }

    /// Bimodal mixtures: a confident/short mode and an uncertain/long mode.
    pub fn varied(true_success_prob: f64) -> Self {
        SimNodeSpec {
            true_success_prob,
            nll_mixture: vec![
                MixtureComponent::new(0.5, 0.8, 0.15),
                MixtureComponent::new(0.5, 1.6, 0.25),
            ],
            length_mixture: vec![
                MixtureComponent::new(0.6, 4.8, 0.30),
                MixtureComponent::new(0.4, 5.8, 0.35),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.true_success_prob) {
            return Err(Error::config(
                "true_success_prob",
                "must be within [0, 1]",
            ));
        }
        for (name, mixture) in [
            ("nll_mixture", &self.nll_mixture),
            ("length_mixture", &self.length_mixture),
        ] {
            if mixture.is_empty() {
                return Err(Error::config(name, "must have at least one component"));
            }
            let mut total = 0.0;
            for c in mixture {
                if c.weight <= 0.0 {
                    return Err(Error::config(name, "weights must be positive"));
                }
                total += c.weight;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::config(name, "weights must sum to 1"));
            }
        }
        Ok(())
    }

    fn sample_mixture(mixture: &[MixtureComponent], rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = mixture[mixture.len() - 1];
        for c in mixture {
            acc += c.weight;
            if u < acc {
                chosen = *c;
                break;
            }
        }
        if chosen.stddev == 0.0 {
            chosen.mean
        } else {
            Normal::new(chosen.mean, chosen.stddev)
                .expect("stddev is finite and non-negative")
                .sample(rng)
        }
    }
}

/// A scripted strategy step reachable from its parent prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScriptNode {
    /// Step text appended when a continuation takes this branch.
    pub step: String,
    /// Sampling weight among siblings.
    pub weight: f64,
    pub spec: SimNodeSpec,
    pub children: Vec<SimScriptNode>,
}

impl SimScriptNode {
    pub fn leaf(step: impl Into<String>, weight: f64, spec: SimNodeSpec) -> Self {
        SimScriptNode {
            step: step.into(),
            weight,
            spec,
            children: Vec::new(),
        }
    }
}

/// Scripted ground truth for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    /// Spec for the empty prefix.
    pub root_spec: SimNodeSpec,
    /// Strategy branches below the root.
    pub children: Vec<SimScriptNode>,
    /// Maximum scripted steps included in one sampled continuation, before
    /// the final answer step.
    pub max_continuation_steps: usize,
}

impl SimWorld {
    /// A world with no intermediate steps: every continuation is a single
    /// answer step drawn from `spec`.
    pub fn single(spec: SimNodeSpec) -> Self {
        SimWorld {
            root_spec: spec,
            children: Vec::new(),
            max_continuation_steps: 3,
        }
    }

    pub fn with_children(root_spec: SimNodeSpec, children: Vec<SimScriptNode>) -> Self {
        SimWorld {
            root_spec,
            children,
            max_continuation_steps: 3,
        }
    }

    /// Procedurally scripted world derived from the problem id: a strategy
    /// tree whose branch values drift from a root value, for desk-scale
    /// generation runs over arbitrary problem files.
    pub fn procedural(problem: &Problem, depth: usize, fanout: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, crate::seeding::mix_str(0, &problem.id)));
        let root_p = 0.15 + 0.7 * rng.random::<f64>();
        let children = Self::procedural_children(&mut rng, root_p, depth, fanout, &[]);
        SimWorld {
            root_spec: SimNodeSpec::varied(root_p),
            children,
            max_continuation_steps: depth.max(1),
        }
    }

    fn procedural_children(
        rng: &mut ChaCha8Rng,
        parent_p: f64,
        depth: usize,
        fanout: usize,
        path: &[usize],
    ) -> Vec<SimScriptNode> {
        if depth == 0 {
            return Vec::new();
        }
        (0..fanout)
            .map(|i| {
                let drift: f64 = rng.random::<f64>() * 0.5 - 0.25;
                let p = (parent_p + drift).clamp(0.02, 0.98);
                let mut child_path: Vec<usize> = path.to_vec();
                child_path.push(i);
                let label: Vec<String> =
                    child_path.iter().map(|n| (n + 1).to_string()).collect();
                let step = format!(
                    "Apply transformation {} to rewrite the current expression.",
                    label.join(".")
                );
                let children =
                    Self::procedural_children(rng, p, depth - 1, fanout, &child_path);
                SimScriptNode {
                    step,
                    weight: 1.0,
                    spec: SimNodeSpec::varied(p),
                    children,
                }
            })
            .collect()
    }

    /// Locate the deepest scripted node matching the prefix. Returns its spec
    /// and the scripted branches below it (empty once off script).
    fn locate(&self, prefix: &[String]) -> (&SimNodeSpec, &[SimScriptNode]) {
        let mut spec = &self.root_spec;
        let mut children: &[SimScriptNode] = &self.children;
        for step in prefix {
            match children.iter().find(|c| &c.step == step) {
                Some(node) => {
                    spec = &node.spec;
                    children = &node.children;
                }
                None => return (spec, &[]),
            }
        }
        (spec, children)
    }
}

/// Simulated oracle implementing the rollout-source contract.
pub struct SimSource {
    world: SimWorld,
}

impl SimSource {
    pub fn new(world: SimWorld) -> Result<Self> {
        fn validate_tree(nodes: &[SimScriptNode]) -> Result<()> {
            for n in nodes {
                n.spec.validate()?;
                validate_tree(&n.children)?;
            }
            Ok(())
        }
        world.root_spec.validate()?;
        validate_tree(&world.children)?;
        Ok(SimSource { world })
    }

    /// Source over a single node with no intermediate steps.
    pub fn single(spec: SimNodeSpec) -> Result<Self> {
        Self::new(SimWorld::single(spec))
    }

    fn sample_one(
        &self,
        prefix: &[String],
        problem: &Problem,
        child_seed: u64,
    ) -> RolloutRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed);
        let (spec, mut branches) = self.world.locate(prefix);
        let success = rng.random_bool(spec.true_success_prob);

        let mut steps = Vec::new();
        while !branches.is_empty() && steps.len() < self.world.max_continuation_steps {
            let total: f64 = branches.iter().map(|c| c.weight).sum();
            let mut u: f64 = rng.random::<f64>() * total;
            let mut pick = branches.len() - 1;
            for (i, c) in branches.iter().enumerate() {
                if u < c.weight {
                    pick = i;
                    break;
                }
                u -= c.weight;
            }
            steps.push(branches[pick].step.clone());
            branches = &branches[pick].children;
        }
        if success {
            steps.push(format!("The answer is {}.", problem.gold_answer));
        } else {
            steps.push("No valid answer was reached.".to_string());
        }

        let mean_nll = SimNodeSpec::sample_mixture(&spec.nll_mixture, &mut rng).max(0.0);
        let log_len = SimNodeSpec::sample_mixture(&spec.length_mixture, &mut rng);
        let token_count = (log_len.exp().round() as i64).max(1) as usize;

        RolloutRecord::new(steps, token_count, mean_nll, success, SourceTag::Simulated)
            .expect("simulated records satisfy rollout invariants")
    }
}

impl RolloutSource for SimSource {
    fn generate_indexed(
        &self,
        prefix: &[String],
        problem: &Problem,
        start: u64,
        count: usize,
        rng_seed: u64,
    ) -> Result<Vec<RolloutRecord>> {
        Ok((0..count)
            .map(|i| self.sample_one(prefix, problem, mix(rng_seed, start + i as u64)))
            .collect())
    }

    fn tag(&self) -> SourceTag {
        SourceTag::Simulated
    }
}
