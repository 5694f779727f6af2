//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured values (visible with `--nocapture`).
//!
//! Run with: `cargo test --test acceptance -- --nocapture`

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use amcs_core::estimation::{
    estimate_node, fixed_budget_estimate, wilson_delta, EstimatorConfig, TerminationReason,
};
use amcs_core::harness::{
    make_forest, mid_extreme_ratio, run_comparison, sign_test_p_value, ForestSpec, Policy,
};
use amcs_core::rollout::{Problem, SimNodeSpec, SimScriptNode, SimSource, SimWorld};
use amcs_core::search::{
    run_search, select_child, u_value, SearchConfig, SearchNode,
};
use amcs_core::seeding::mix;
use amcs_core::trainer::{bce_soft_loss, loss_gradient, score, LinearScorer, TrainingExample};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn problem() -> Problem {
    Problem::new("acceptance", "a forest problem statement of eight tokens", "1").unwrap()
}

/// 1. Wilson coverage: p-hat +/- delta covers the true p in at least 90%
///    of 10,000 trials for every (p, n) pair.
#[test]
fn c1_wilson_coverage() {
    let mut worst = 1.0f64;
    let mut worst_pair = (0.0, 0usize);
    let mut worst_recentered = 1.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(20_260_101);
    let z = 1.96f64;
    for &p in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        for &n in &[8usize, 16, 32] {
            let mut covered = 0u32;
            let mut covered_recentered = 0u32;
            for _ in 0..10_000 {
                let s = (0..n).filter(|_| rng.random_bool(p)).count() as u64;
                let p_hat = s as f64 / n as f64;
                let delta = wilson_delta(s, n as u64, 1.96);
                if (p_hat - p).abs() <= delta {
                    covered += 1;
                }
                // Diagnostic: the Wilson interval proper is centered at the
                // score midpoint, not at the sample proportion.
                let nf = n as f64;
                let center = (p_hat + z * z / (2.0 * nf)) / (1.0 + z * z / nf);
                if (center - p).abs() <= delta {
                    covered_recentered += 1;
                }
            }
            let coverage = covered as f64 / 10_000.0;
            if coverage < worst {
                worst = coverage;
                worst_pair = (p, n);
            }
            worst_recentered = worst_recentered.min(covered_recentered as f64 / 10_000.0);
        }
    }
    let pass = worst >= 0.90;
    report(
        "1 (wilson coverage)",
        pass,
        &format!(
            "worst p-hat +/- delta coverage {worst:.4} at (p={}, n={}); \
             worst recentered Wilson-interval coverage {worst_recentered:.4}",
            worst_pair.0, worst_pair.1
        ),
    );
    assert!(pass, "worst coverage {worst} below 0.90");
}

/// 2. Allocation shape: on a 500-node forest under the default config,
///    mean adaptive rollouts for true p in [0.4, 0.6] at least 2x the mean
///    for p < 0.2 and p > 0.8, over 20 seeds.
#[test]
fn c2_allocation_shape() {
    let forest = make_forest(&ForestSpec {
        seed: 41,
        ..ForestSpec::default()
    })
    .unwrap();
    let seeds: Vec<u64> = (0..20).map(|i| mix(41, 100 + i)).collect();
    let cfg = EstimatorConfig::default();
    let report_data = run_comparison(&forest, &cfg, 16, &seeds).unwrap();
    let ratio = mid_extreme_ratio(&report_data.rows, Policy::Adaptive).unwrap();
    let pass = ratio >= 2.0;
    report(
        "2 (allocation shape)",
        pass,
        &format!(
            "mid/extreme adaptive rollout ratio {ratio:.3} (mid {:?}, extremes pooled)",
            report_data.adaptive.per_bucket_mean_rollouts[2]
        ),
    );
    assert!(pass, "mid/extreme ratio {ratio:.3} below 2.0");
}

/// 3. Efficiency: (a) paired sign test at matched mean budget on the mixed
///    forest; (b) on an extreme-p forest, adaptive budget at most 0.8 * 16
///    with MAE within 0.01 of the fixed-16 baseline.
#[test]
fn c3_efficiency() {
    let cfg = EstimatorConfig::default();

    // (a) Matched-budget paired comparison.
    let forest = make_forest(&ForestSpec {
        seed: 43,
        ..ForestSpec::default()
    })
    .unwrap();
    let seeds: Vec<u64> = (0..20).map(|i| mix(43, 7 + i)).collect();
    let unmatched = run_comparison(&forest, &cfg, 16, &seeds).unwrap();
    let matched_n = unmatched.adaptive.mean_rollouts.round() as usize;
    let matched = run_comparison(&forest, &cfg, matched_n, &seeds).unwrap();
    let wins = matched.per_seed_mae.iter().filter(|(_, a, f)| a < f).count() as u32;
    let losses = matched.per_seed_mae.iter().filter(|(_, a, f)| a > f).count() as u32;
    let p_value = sign_test_p_value(wins, losses);
    let part_a = p_value <= 0.05;

    // (b) Extreme-value forest.
    let extreme_forest: Vec<SimNodeSpec> = (0..200)
        .map(|i| SimNodeSpec::constant(if i % 2 == 0 { 0.02 } else { 0.98 }, 0.9, 4.8))
        .collect();
    let extreme = run_comparison(&extreme_forest, &cfg, 16, &seeds).unwrap();
    let budget_ok = extreme.adaptive.mean_rollouts <= 0.8 * 16.0;
    let mae_ok = extreme.adaptive.mean_abs_error <= extreme.fixed.mean_abs_error + 0.01;

    let pass = part_a && budget_ok && mae_ok;
    report(
        "3 (efficiency)",
        pass,
        &format!(
            "matched n={matched_n}: adaptive MAE {:.4} vs fixed {:.4}, wins {wins}/{} (sign p={p_value:.4}); \
             extreme forest: adaptive budget {:.2} (limit 12.8), MAE {:.4} vs fixed {:.4}",
            matched.adaptive.mean_abs_error,
            matched.fixed.mean_abs_error,
            wins + losses,
            extreme.adaptive.mean_rollouts,
            extreme.adaptive.mean_abs_error,
            extreme.fixed.mean_abs_error,
        ),
    );
    assert!(
        pass,
        "sign test p {p_value:.4} (need <= 0.05), extreme budget {:.2} (need <= 12.8), \
         extreme MAE gap {:.4} (need <= 0.01)",
        extreme.adaptive.mean_rollouts,
        extreme.adaptive.mean_abs_error - extreme.fixed.mean_abs_error,
    );
}

/// 4. Oracle equivalence: with one effective cluster the adaptive estimate
///    is bit-identical to the fixed-budget estimate on the same stream and
///    count.
#[test]
fn c4_oracle_equivalence() {
    let source = SimSource::single(SimNodeSpec::constant(0.7, 0.9, 4.8)).unwrap();
    let cfg = EstimatorConfig::default();
    let p = problem();
    let mut checked = 0;
    for seed in [3u64, 17, 91, 404, 9000] {
        let est = estimate_node(&[], &p, &source, &cfg, seed).unwrap();
        assert_eq!(est.per_cluster.len(), 1);
        let fixed = fixed_budget_estimate(&[], &p, &source, est.n_total as usize, seed).unwrap();
        assert_eq!(
            est.mu_hat.to_bits(),
            fixed.to_bits(),
            "seed {seed}: {} vs {}",
            est.mu_hat,
            fixed
        );
        checked += 1;
    }
    report(
        "4 (oracle equivalence)",
        true,
        &format!("bit-identical on {checked} seeded runs"),
    );
}

/// 5. Scheduling: argmax U exactly at t = 0, argmax Q exactly at t = 20T,
///    and exploration fraction non-increasing across thirds of the budget.
#[test]
fn c5_scheduling() {
    let cfg = SearchConfig::default();

    let child = |q: f64, visits: u64| SearchNode {
        step: "s".into(),
        prefix_steps: vec!["s".into()],
        continuation_tokens: 1,
        depth: 1,
        estimate: None,
        q: Some(q),
        visit_count: visits,
        terminal: false,
        children: Vec::new(),
    };

    // Distinct U through visit counts; Q ordered against U.
    let mut node = SearchNode::root();
    node.children = vec![child(0.9, 2), child(0.2, 0), child(0.5, 1)];
    let parent_visits = 3;
    let argmax_u = (0..3)
        .max_by(|&a, &b| {
            u_value(parent_visits, node.children[a].visit_count, cfg.c_puct)
                .unwrap()
                .partial_cmp(&u_value(parent_visits, node.children[b].visit_count, cfg.c_puct).unwrap())
                .unwrap()
        })
        .unwrap();
    let at_zero = select_child(&mut node, 0, &cfg).unwrap();
    assert_eq!(at_zero, argmax_u, "t=0 must follow the exploration bonus");

    let mut node = SearchNode::root();
    node.children = vec![child(0.3, 0), child(0.8, 5), child(0.55, 1)];
    let late = select_child(&mut node, (20.0 * cfg.temperature_t) as u64, &cfg).unwrap();
    assert_eq!(late, 1, "t=20T must follow the value");

    // Exploration fraction by thirds, averaged over 20 seeds.
    let world = SimWorld::with_children(
        SimNodeSpec::varied(0.5),
        vec![
            SimScriptNode::leaf("strategy one", 1.0, SimNodeSpec::varied(0.85)),
            SimScriptNode::leaf("strategy two", 1.0, SimNodeSpec::varied(0.3)),
            SimScriptNode::leaf("strategy three", 1.0, SimNodeSpec::varied(0.15)),
            SimScriptNode::leaf("strategy four", 1.0, SimNodeSpec::varied(0.5)),
        ],
    );
    let est_cfg = EstimatorConfig::default();
    let mut fractions = [0.0f64; 3];
    let mut counts = [0u64; 3];
    for seed in 0..20 {
        let source = SimSource::new(world.clone()).unwrap();
        let outcome = run_search(&problem(), &source, &cfg, &est_cfg, seed).unwrap();
        let third = cfg.max_iterations as u64 / 3;
        for entry in &outcome.trace.entries {
            let bucket = ((entry.iteration / third) as usize).min(2);
            for sel in &entry.selections {
                counts[bucket] += 1;
                if sel.exploratory {
                    fractions[bucket] += 1.0;
                }
            }
        }
    }
    for b in 0..3 {
        fractions[b] /= counts[b].max(1) as f64;
    }
    let monotone = fractions[0] >= fractions[1] && fractions[1] >= fractions[2];
    report(
        "5 (scheduling)",
        monotone,
        &format!(
            "t=0 argmax U ok, t=20T argmax Q ok, exploration fractions by thirds {:.3}/{:.3}/{:.3}",
            fractions[0], fractions[1], fractions[2]
        ),
    );
    assert!(monotone, "exploration fractions {fractions:?} not non-increasing");
}

/// 6. Gradient fidelity: analytic vs central finite differences under 1e-5
///    relative error on 100 random cases; BCE at (0.5, 0.5) equals ln 2.
#[test]
fn c6_gradient_fidelity() {
    let ln2_error = (bce_soft_loss(0.5, 0.5) - std::f64::consts::LN_2).abs();
    assert!(ln2_error < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut max_rel = 0.0f64;
    for _ in 0..100 {
        let dim = 4;
        let model = LinearScorer {
            weights: (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            bias: rng.random::<f64>() * 2.0 - 1.0,
        };
        let batch: Vec<TrainingExample> = (0..3)
            .map(|_| TrainingExample {
                features: (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
                target: rng.random::<f64>(),
            })
            .collect();
        let (grad_w, grad_b) = loss_gradient(&model, &batch).unwrap();

        let h = 1e-6;
        let loss_of = |m: &LinearScorer| -> f64 {
            batch
                .iter()
                .map(|e| bce_soft_loss(score(m, &e.features).unwrap(), e.target))
                .sum::<f64>()
                / batch.len() as f64
        };
        for (i, grad) in grad_w.iter().enumerate() {
            let mut plus = model.clone();
            plus.weights[i] += h;
            let mut minus = model.clone();
            minus.weights[i] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let rel = (grad - numeric).abs() / grad.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        let mut plus = model.clone();
        plus.bias += h;
        let mut minus = model.clone();
        minus.bias -= h;
        let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
        let rel = (grad_b - numeric).abs() / grad_b.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    let pass = max_rel < 1e-5;
    report(
        "6 (gradient fidelity)",
        pass,
        &format!("max relative error {max_rel:.2e}, bce(0.5,0.5)-ln2 = {ln2_error:.2e}"),
    );
    assert!(pass, "max relative error {max_rel}");
}

/// 8. Termination: every node of a 1,000-node randomized forest halts
///    within the iteration bound with a valid estimate, and a degenerate
///    p = 1 node stops with reason confidence at exactly 16 rollouts.
#[test]
fn c8_termination() {
    let cfg = EstimatorConfig::default();
    let bound = ((cfg.k_max - cfg.k_init) / cfg.m_min) as u64 + 1;
    let forest = make_forest(&ForestSpec {
        node_count: 1000,
        seed: 88,
        ..ForestSpec::default()
    })
    .unwrap();
    let p = problem();
    let mut max_iterations = 0u64;
    for (i, spec) in forest.iter().enumerate() {
        let source = SimSource::single(spec.clone()).unwrap();
        let est = estimate_node(&[], &p, &source, &cfg, mix(88, i as u64)).unwrap();
        assert!(est.iterations <= bound, "node {i} took {} iterations", est.iterations);
        assert!((0.0..=1.0).contains(&est.mu_hat));
        assert!(matches!(
            est.termination_reason,
            TerminationReason::Confidence
                | TerminationReason::Budget
                | TerminationReason::ClusterConvergence
        ));
        max_iterations = max_iterations.max(est.iterations);
    }

    let source = SimSource::single(SimNodeSpec::constant(1.0, 0.9, 4.8)).unwrap();
    let degenerate = estimate_node(&[], &p, &source, &cfg, 7).unwrap();
    let degenerate_ok = degenerate.termination_reason == TerminationReason::Confidence
        && degenerate.n_total == 16
        && degenerate.mu_hat == 1.0;
    report(
        "8 (termination)",
        degenerate_ok,
        &format!(
            "1000 nodes halted within {max_iterations} <= {bound} iterations; degenerate node: \
             reason {}, n_total {}",
            degenerate.termination_reason, degenerate.n_total
        ),
    );
    assert!(degenerate_ok);
}
