//! Adaptive path expansion over a reasoning tree.
//!
//! Children are scored by a time-weighted mix of an exploitation value tied
//! to the adaptive node estimate and a UCT-style exploration bonus. The mix
//! starts exploration-heavy and decays exponentially with the global tree
//! iteration counter, so late iterations exploit the most promising steps.
//! Q is always re-read from a node's estimate; there is no incremental value
//! backpropagation.

use serde::{Deserialize, Serialize};

use crate::dataset::SupervisionRecord;
use crate::error::{Error, Result};
use crate::estimation::{estimate_node_with_preseed, EstimatorConfig, NodeEstimate};
use crate::rollout::{whitespace_tokens, Problem, RolloutRecord, RolloutSource};
use crate::seeding::{mix, mix_path};

const EXPAND_SEED_TAG: u64 = 0x6578;
const ESTIMATE_SEED_TAG: u64 = 0x6573;

/// Search parameters (the `search.*` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Base of the value exponent; smaller alpha punishes low estimates harder.
    pub alpha: f64,
    /// Base of the length exponent; smaller beta punishes long continuations harder.
    pub beta: f64,
    /// Exploration strength.
    pub c_puct: f64,
    /// Time constant of the exploration decay.
    #[serde(rename = "temperature_T")]
    pub temperature_t: f64,
    pub max_iterations: usize,
    pub max_depth: usize,
    /// Continuations sampled per expansion.
    pub branching: usize,
    /// Delimiter between steps in continuation text.
    pub step_delimiter: String,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: 0.5,
            beta: 0.9,
            c_puct: 1.0,
            temperature_t: 16.0,
            max_iterations: 48,
            max_depth: 12,
            branching: 4,
            step_delimiter: "\n\n".to_string(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, value) in [("search.alpha", self.alpha), ("search.beta", self.beta)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::config(key, "must lie strictly inside (0, 1)"));
            }
        }
        if self.c_puct <= 0.0 {
            return Err(Error::config("search.c_puct", "must be positive"));
        }
        if self.temperature_t <= 0.0 {
            return Err(Error::config("search.temperature_T", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("search.max_iterations", "must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::config("search.max_depth", "must be at least 1"));
        }
        if self.branching == 0 {
            return Err(Error::config("search.branching", "must be at least 1"));
        }
        Ok(())
    }
}

/// One node of the search tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchNode {
    /// Step text added by this node; empty at the root.
    pub step: String,
    /// Full step path from the root, including this node's step.
    pub prefix_steps: Vec<String>,
    /// Whitespace token count of this node's step.
    pub continuation_tokens: usize,
    pub depth: usize,
    pub estimate: Option<NodeEstimate>,
    /// Exploitation value derived from the estimate at expansion time.
    pub q: Option<f64>,
    /// Selection visits N(s, r).
    pub visit_count: u64,
    pub terminal: bool,
    pub children: Vec<SearchNode>,
}

impl SearchNode {
    pub fn root() -> Self {
        SearchNode {
            step: String::new(),
            prefix_steps: Vec::new(),
            continuation_tokens: 0,
            depth: 0,
            estimate: None,
            q: None,
            visit_count: 0,
            terminal: false,
            children: Vec::new(),
        }
    }

    /// Sum of child visit counts, i.e. N(s).
    pub fn parent_visits(&self) -> u64 {
        self.children.iter().map(|c| c.visit_count).sum()
    }

    pub fn node(&self, path: &[usize]) -> &SearchNode {
        let mut current = self;
        for &idx in path {
            current = &current.children[idx];
        }
        current
    }

    pub fn node_mut(&mut self, path: &[usize]) -> &mut SearchNode {
        let mut current = self;
        for &idx in path {
            current = &mut current.children[idx];
        }
        current
    }
}

/// Score components of one selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub child: usize,
    pub q: f64,
    pub u: f64,
    pub weight: f64,
    pub score: f64,
    /// True when a sibling with strictly larger Q existed.
    pub exploratory: bool,
}

/// One iteration's descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: u64,
    /// Child indices from the root to the selected leaf.
    pub path: Vec<usize>,
    pub selections: Vec<SelectionStep>,
}

/// Selection log of a whole search; iterations strictly increase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub entries: Vec<TraceEntry>,
}

/// Result of a search run. `failure` carries a source error that interrupted
/// the run; the tree, trace, and records hold everything produced before it.
#[derive(Debug)]
pub struct SearchOutcome {
    pub tree: SearchNode,
    pub trace: SearchTrace,
    pub records: Vec<SupervisionRecord>,
    pub failure: Option<String>,
}

/// Exploitation value `alpha^(1 - mu_hat) * beta^(len_r / L_p)`.
pub fn q_value(mu_hat: f64, len_r: usize, l_p: usize, cfg: &SearchConfig) -> Result<f64> {
    if l_p == 0 {
        return Err(Error::InvalidProblem(
            "problem statement length is zero".into(),
        ));
    }
    Ok(cfg.alpha.powf(1.0 - mu_hat) * cfg.beta.powf(len_r as f64 / l_p as f64))
}

/// UCT-style exploration bonus `c_puct * sqrt(ln(N_s) / (1 + N_sr))`.
pub fn u_value(parent_visits: u64, child_visits: u64, c_puct: f64) -> Result<f64> {
    if parent_visits == 0 {
        return Err(Error::InvalidState(
            "selection requires at least one prior visit at the parent".into(),
        ));
    }
    Ok(c_puct * ((parent_visits as f64).ln() / (1.0 + child_visits as f64)).sqrt())
}

/// Time-weighted expansion score `(1 - w) q + w u` with `w = exp(-t / T)`.
pub fn expansion_score(q: f64, u: f64, t: u64, temperature: f64) -> f64 {
    let w = (-(t as f64) / temperature).exp();
    (1.0 - w) * q + w * u
}

fn scored_children(node: &SearchNode, t: u64, cfg: &SearchConfig) -> Result<SelectionStep> {
    if node.children.is_empty() {
        return Err(Error::MustExpand);
    }
    // Right after expansion no child has been visited; with N(s) treated as 1
    // the bonus is zero for every child and the value term decides.
    let parent_visits = node.parent_visits().max(1);
    let mut best: Option<SelectionStep> = None;
    let mut best_q = f64::NEG_INFINITY;
    for (idx, child) in node.children.iter().enumerate() {
        let q = child.q.ok_or_else(|| {
            Error::InvalidState(format!("child {idx} has no estimate attached"))
        })?;
        let u = u_value(parent_visits, child.visit_count, cfg.c_puct)?;
        let score = expansion_score(q, u, t, cfg.temperature_t);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(SelectionStep {
                child: idx,
                q,
                u,
                weight: (-(t as f64) / cfg.temperature_t).exp(),
                score,
                exploratory: false,
            });
        }
        if q > best_q {
            best_q = q;
        }
    }
    let mut step = best.expect("children non-empty");
    step.exploratory = node.children[step.child]
        .q
        .is_some_and(|q| q < best_q);
    Ok(step)
}

/// Pick the child maximizing the expansion score at iteration `t` and count
/// the visit. Ties keep the lowest child index.
pub fn select_child(node: &mut SearchNode, t: u64, cfg: &SearchConfig) -> Result<usize> {
    let step = scored_children(node, t, cfg)?;
    node.children[step.child].visit_count += 1;
    Ok(step.child)
}

/// Split continuation text into trimmed, non-empty steps.
pub fn segment_steps(text: &str, delimiter: &str) -> Vec<String> {
    text.split(delimiter)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Re-root a continuation sampled at the parent so it reads as a rollout of
/// the child reached by its first step. Single-step continuations have no
/// residual trajectory and yield `None`.
fn re_root(mut record: RolloutRecord, first_step_tokens: usize) -> Option<RolloutRecord> {
    if record.steps.len() <= 1 {
        return None;
    }
    record.steps.remove(0);
    record.token_count = record.token_count.saturating_sub(first_step_tokens).max(1);
    record.std_features = None;
    Some(record)
}

/// Expand a node: sample `branching` continuations, turn their distinct
/// first steps into children, and estimate each child (reusing the sampled
/// continuations as its first rollouts). Returns the new child indices;
/// a node that yields none is marked terminal.
pub fn expand(
    node: &mut SearchNode,
    problem: &Problem,
    source: &dyn RolloutSource,
    cfg: &SearchConfig,
    estimator_cfg: &EstimatorConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if node.depth >= cfg.max_depth {
        node.terminal = true;
        return Ok(Vec::new());
    }
    let continuations = source.generate(
        &node.prefix_steps,
        problem,
        cfg.branching,
        mix(seed, EXPAND_SEED_TAG),
    )?;

    // Deduplicate by exact first-step text, keeping first-seen order.
    let mut candidates: Vec<(String, Vec<RolloutRecord>)> = Vec::new();
    for record in continuations {
        let Some(first) = record.steps.first().cloned() else {
            continue;
        };
        match candidates.iter_mut().find(|(step, _)| *step == first) {
            Some((_, group)) => group.push(record),
            None => candidates.push((first, vec![record])),
        }
    }
    if candidates.is_empty() {
        node.terminal = true;
        return Ok(Vec::new());
    }

    let mut new_indices = Vec::new();
    for (step, group) in candidates {
        let step_tokens = whitespace_tokens(&step);
        let mut prefix = node.prefix_steps.clone();
        prefix.push(step.clone());
        // A step that only ever ended continuations cannot be continued.
        let terminal = group.iter().all(|r| r.steps.len() == 1);
        let preseed: Vec<RolloutRecord> = group
            .into_iter()
            .filter_map(|r| re_root(r, step_tokens))
            .collect();

        let child_index = node.children.len();
        let estimate_seed = mix(mix(seed, ESTIMATE_SEED_TAG), child_index as u64);
        let estimate = estimate_node_with_preseed(
            &prefix,
            problem,
            source,
            estimator_cfg,
            estimate_seed,
            preseed,
        )?;
        let q = q_value(estimate.mu_hat, step_tokens, problem.statement_tokens, cfg)?;
        node.children.push(SearchNode {
            step,
            prefix_steps: prefix,
            continuation_tokens: step_tokens,
            depth: node.depth + 1,
            estimate: Some(estimate),
            q: Some(q),
            visit_count: 0,
            terminal,
            children: Vec::new(),
        });
        new_indices.push(child_index);
    }
    Ok(new_indices)
}

/// Run the full search for one problem: iterate descend-and-expand under a
/// global iteration counter, emitting one supervision record per estimated
/// node.
pub fn run_search(
    problem: &Problem,
    source: &dyn RolloutSource,
    cfg: &SearchConfig,
    estimator_cfg: &EstimatorConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    estimator_cfg.validate()?;

    let mut tree = SearchNode::root();
    let mut trace = SearchTrace::default();
    let mut records = Vec::new();
    let mut failure = None;

    'iterations: for t in 0..cfg.max_iterations as u64 {
        let mut path: Vec<usize> = Vec::new();
        let mut selections = Vec::new();
        loop {
            let node = tree.node(&path);
            if node.children.is_empty() || node.terminal {
                break;
            }
            let step = scored_children(node, t, cfg)?;
            tree.node_mut(&path).children[step.child].visit_count += 1;
            path.push(step.child);
            selections.push(step);
        }
        trace.entries.push(TraceEntry {
            iteration: t,
            path: path.clone(),
            selections,
        });

        let leaf = tree.node_mut(&path);
        if leaf.terminal || leaf.depth >= cfg.max_depth {
            leaf.terminal = true;
            continue;
        }
        let expand_seed = mix_path(seed, &path);
        match expand(leaf, problem, source, cfg, estimator_cfg, expand_seed) {
            Ok(new_children) => {
                let leaf = tree.node(&path);
                for idx in new_children {
                    let child = &leaf.children[idx];
                    let estimate = child.estimate.as_ref().expect("expanded with estimate");
                    records.push(SupervisionRecord {
                        problem_id: problem.id.clone(),
                        problem: problem.statement.clone(),
                        prefix_steps: child.prefix_steps.clone(),
                        step_index: child.prefix_steps.len(),
                        mu_hat: estimate.mu_hat,
                        n_total: estimate.n_total,
                        termination_reason: estimate.termination_reason,
                        per_cluster: estimate.per_cluster.clone(),
                        search_depth: child.depth,
                        generator_tag: source.tag().to_string(),
                        seed,
                    });
                }
            }
            Err(Error::Transport(message)) => {
                failure = Some(message);
                break 'iterations;
            }
            Err(other) => return Err(other),
        }
    }

    Ok(SearchOutcome {
        tree,
        trace,
        records,
        failure,
    })
}
