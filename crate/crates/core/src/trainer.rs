//! Soft-label scorer training at desk scale.
//!
//! A linear-plus-sigmoid scorer over four record features is trained with
//! binary cross-entropy against continuous value targets. The continuous
//! target serves directly as the probability in the loss, so confident
//! targets near 0 or 1 drive strong gradients while targets near 0.5
//! contribute weakly. Gradients are analytic and checked against central
//! finite differences in the tests.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SupervisionRecord;
use crate::error::{Error, Result};
use crate::rollout::{whitespace_tokens, Stats};

/// Clamp bound keeping predictions off exact 0 and 1 inside the loss.
pub const PROB_GUARD: f64 = 1e-12;

/// Names of the four features, in order.
pub const FEATURE_NAMES: [&str; 4] = ["step_index", "prefix_tokens", "search_depth", "n_total"];

/// Linear scorer with a sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearScorer {
    pub fn zeros(dim: usize) -> Self {
        LinearScorer {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }
}

/// Training hyperparameters (the `trainer.*` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("trainer.learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("trainer.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("trainer.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// One featurized training instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    /// Soft target in [0, 1].
    pub target: f64,
}

/// Sigmoid of the linear score.
pub fn score(model: &LinearScorer, features: &[f64]) -> Result<f64> {
    if features.len() != model.weights.len() {
        return Err(Error::Shape {
            expected: model.weights.len(),
            got: features.len(),
        });
    }
    let logit: f64 = model
        .weights
        .iter()
        .zip(features)
        .map(|(w, x)| w * x)
        .sum::<f64>()
        + model.bias;
    Ok(1.0 / (1.0 + (-logit).exp()))
}

/// Binary cross-entropy with a soft target:
/// `-(target * ln(pred) + (1 - target) * ln(1 - pred))`.
/// Predictions are clamped away from exact 0 and 1.
pub fn bce_soft_loss(pred: f64, target: f64) -> f64 {
    let p = pred.clamp(PROB_GUARD, 1.0 - PROB_GUARD);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean analytic gradient over a batch: `(pred - target) * x` for the
/// weights and `pred - target` for the bias.
pub fn loss_gradient(
    model: &LinearScorer,
    batch: &[TrainingExample],
) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptySample("gradient over an empty batch".into()));
    }
    let dim = model.weights.len();
    let mut grad_w = vec![0.0; dim];
    let mut grad_b = 0.0;
    for example in batch {
        let pred = score(model, &example.features)?;
        let diff = pred - example.target;
        for (g, x) in grad_w.iter_mut().zip(&example.features) {
            *g += diff * x;
        }
        grad_b += diff;
    }
    let n = batch.len() as f64;
    for g in grad_w.iter_mut() {
        *g /= n;
    }
    Ok((grad_w, grad_b / n))
}

fn mean_loss(model: &LinearScorer, examples: &[TrainingExample]) -> Result<f64> {
    let mut total = 0.0;
    for example in examples {
        total += bce_soft_loss(score(model, &example.features)?, example.target);
    }
    Ok(total / examples.len() as f64)
}

/// Mini-batch gradient descent from a zero-initialized model. Returns the
/// model and the loss curve: the pre-training loss followed by the full-set
/// mean loss after each epoch.
pub fn train(examples: &[TrainingExample], cfg: &TrainConfig) -> Result<(LinearScorer, Vec<f64>)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = examples[0].features.len();
    for example in examples {
        if example.features.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: example.features.len(),
            });
        }
        if !(0.0..=1.0).contains(&example.target) {
            return Err(Error::Validation {
                line: 0,
                message: format!("target {} outside [0, 1]", example.target),
            });
        }
    }

    let mut model = LinearScorer::zeros(dim);
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    curve.push(mean_loss(&model, examples)?);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingExample> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            let (grad_w, grad_b) = loss_gradient(&model, &batch)?;
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= cfg.learning_rate * g;
            }
            model.bias -= cfg.learning_rate * grad_b;
        }
        curve.push(mean_loss(&model, examples)?);
    }
    Ok((model, curve))
}

/// Featurize supervision records: `[step_index, prefix token count,
/// search_depth, n_total]`, z-scored with stats fitted on the set.
pub fn featurize(records: &[SupervisionRecord]) -> Result<(Vec<TrainingExample>, Stats<4>)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let raw: Vec<[f64; 4]> = records
        .iter()
        .map(|r| {
            [
                r.step_index as f64,
                r.prefix_steps
                    .iter()
                    .map(|s| whitespace_tokens(s))
                    .sum::<usize>() as f64,
                r.search_depth as f64,
                r.n_total as f64,
            ]
        })
        .collect();
    let stats = Stats::fit(&raw)?;
    let examples = raw
        .iter()
        .zip(records)
        .map(|(features, record)| TrainingExample {
            features: stats.standardize(*features).to_vec(),
            target: record.mu_hat,
        })
        .collect();
    Ok((examples, stats))
}

/// Write a plain-text key-value checkpoint: feature names, weights, bias,
/// and the standardization stats.
pub fn save_checkpoint(model: &LinearScorer, stats: &Stats<4>, path: &Path) -> Result<()> {
    let join = |values: &[f64]| {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let text = format!(
        "feature_names = {}\nweights = {}\nbias = {}\nstats_mean = {}\nstats_std = {}\n",
        FEATURE_NAMES.join(","),
        join(&model.weights),
        model.bias,
        join(&stats.mean),
        join(&stats.std),
    );
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(LinearScorer, Stats<4>)> {
    let text = std::fs::read_to_string(path)?;
    let mut weights = None;
    let mut bias = None;
    let mut mean = None;
    let mut std = None;
    for (idx, line) in text.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let parse_list = |value: &str| -> Result<Vec<f64>> {
            value
                .trim()
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        offset: 0,
                        message: e.to_string(),
                    })
                })
                .collect()
        };
        match key.trim() {
            "weights" => weights = Some(parse_list(value)?),
            "bias" => bias = Some(parse_list(value)?[0]),
            "stats_mean" => mean = Some(parse_list(value)?),
            "stats_std" => std = Some(parse_list(value)?),
            _ => {}
        }
    }
    let to_array = |v: Vec<f64>| -> Result<[f64; 4]> {
        v.try_into().map_err(|_| Error::Shape {
            expected: 4,
            got: 0,
        })
    };
    match (weights, bias, mean, std) {
        (Some(w), Some(b), Some(m), Some(s)) => Ok((
            LinearScorer {
                weights: w,
                bias: b,
            },
            Stats {
                mean: to_array(m)?,
                std: to_array(s)?,
            },
        )),
        _ => Err(Error::Validation {
            line: 0,
            message: "checkpoint is missing required keys".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn example(features: Vec<f64>, target: f64) -> TrainingExample {
        TrainingExample { features, target }
    }

    #[test]
    fn score_zero_model_is_half() {
        let model = LinearScorer::zeros(3);
        assert_eq!(score(&model, &[5.0, -2.0, 0.3]).unwrap(), 0.5);
    }

    #[test]
    fn score_log_three_gives_three_quarters() {
        let model = LinearScorer {
            weights: vec![3.0f64.ln()],
            bias: 0.0,
        };
        assert!((score(&model, &[1.0]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn score_saturates_and_checks_shape() {
        let model = LinearScorer {
            weights: vec![0.0],
            bias: 60.0,
        };
        assert!(score(&model, &[0.0]).unwrap() > 1.0 - 1e-12);
        assert!(matches!(
            score(&LinearScorer::zeros(2), &[1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn bce_known_values() {
        assert!((bce_soft_loss(0.5, 0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_soft_loss(0.8, 1.0) - 0.2231435513).abs() < 1e-9);
        assert!(bce_soft_loss(1.0, 1.0) < 1e-10);
        // Minimized at pred = target.
        let target = 0.3;
        let at_target = bce_soft_loss(target, target);
        for pred in [0.1, 0.2, 0.4, 0.7, 0.95] {
            assert!(bce_soft_loss(pred, target) > at_target);
        }
    }

    #[test]
    fn gradient_zero_at_optimum() {
        let model = LinearScorer::zeros(2);
        let batch = vec![example(vec![1.0, -1.0], 0.5), example(vec![0.2, 3.0], 0.5)];
        let (grad_w, grad_b) = loss_gradient(&model, &batch).unwrap();
        assert!(grad_w.iter().all(|g| g.abs() < 1e-15));
        assert!(grad_b.abs() < 1e-15);
    }

    #[test]
    fn gradient_single_example() {
        // pred = 0.5 at zero model; target 0.3 gives diff 0.2.
        let model = LinearScorer::zeros(2);
        let batch = vec![example(vec![1.0, 0.0], 0.3)];
        let (grad_w, grad_b) = loss_gradient(&model, &batch).unwrap();
        assert!((grad_w[0] - 0.2).abs() < 1e-12);
        assert!(grad_w[1].abs() < 1e-15);
        assert!((grad_b - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gradient_mean_invariant_under_duplication() {
        let model = LinearScorer {
            weights: vec![0.4, -0.7],
            bias: 0.1,
        };
        let once = vec![example(vec![1.5, 2.0], 0.8)];
        let many: Vec<TrainingExample> = vec![once[0].clone(); 5];
        let (gw1, gb1) = loss_gradient(&model, &once).unwrap();
        let (gw5, gb5) = loss_gradient(&model, &many).unwrap();
        for (a, b) in gw1.iter().zip(&gw5) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((gb1 - gb5).abs() < 1e-15);
    }

    /// Central finite differences over every parameter.
    fn numeric_gradient(
        model: &LinearScorer,
        batch: &[TrainingExample],
        h: f64,
    ) -> (Vec<f64>, f64) {
        let loss_of = |m: &LinearScorer| -> f64 {
            batch
                .iter()
                .map(|e| bce_soft_loss(score(m, &e.features).unwrap(), e.target))
                .sum::<f64>()
                / batch.len() as f64
        };
        let mut grad_w = Vec::with_capacity(model.weights.len());
        for i in 0..model.weights.len() {
            let mut plus = model.clone();
            plus.weights[i] += h;
            let mut minus = model.clone();
            minus.weights[i] -= h;
            grad_w.push((loss_of(&plus) - loss_of(&minus)) / (2.0 * h));
        }
        let mut plus = model.clone();
        plus.bias += h;
        let mut minus = model.clone();
        minus.bias -= h;
        (grad_w, (loss_of(&plus) - loss_of(&minus)) / (2.0 * h))
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let dim = 4;
            let model = LinearScorer {
                weights: (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                bias: rng.random::<f64>() * 2.0 - 1.0,
            };
            let batch = vec![TrainingExample {
                features: (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
                target: rng.random::<f64>(),
            }];
            let (gw, gb) = loss_gradient(&model, &batch).unwrap();
            let (nw, nb) = numeric_gradient(&model, &batch, 1e-6);
            for (a, n) in gw.iter().zip(&nw) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel < 1e-5, "analytic {a} numeric {n}");
            }
            let rel = (gb - nb).abs() / gb.abs().max(nb.abs()).max(1e-8);
            assert!(rel < 1e-5);
        }
    }

    #[test]
    fn soft_targets_weaken_gradients_near_half() {
        // At a fixed prediction 0.5 the per-example gradient magnitude is
        // |0.5 - target|: maximal for hard targets, zero at 0.5.
        let model = LinearScorer::zeros(1);
        let magnitude = |target: f64| -> f64 {
            let (g, _) = loss_gradient(&model, &[example(vec![1.0], target)]).unwrap();
            g[0].abs()
        };
        assert!(magnitude(0.0) > magnitude(0.25));
        assert!(magnitude(0.25) > magnitude(0.45));
        assert!(magnitude(0.5) < 1e-15);
        assert!(magnitude(1.0) > magnitude(0.75));
        assert!((magnitude(0.0) - magnitude(1.0)).abs() < 1e-15);
    }

    #[test]
    fn train_stays_at_optimum_for_uniform_half_targets() {
        let examples: Vec<TrainingExample> = (0..20)
            .map(|i| example(vec![i as f64, -(i as f64)], 0.5))
            .collect();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let (model, curve) = train(&examples, &cfg).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-12));
        for loss in curve {
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn train_separable_soft_targets() {
        // Targets split on the sign of one feature.
        let examples: Vec<TrainingExample> = (0..40)
            .map(|i| {
                let x = if i % 2 == 0 { 1.0 } else { -1.0 };
                example(vec![x, 0.3], if x > 0.0 { 0.95 } else { 0.05 })
            })
            .collect();
        let (model, curve) = train(&examples, &TrainConfig::default()).unwrap();
        assert!(*curve.last().unwrap() < 0.3, "final loss {}", curve.last().unwrap());
        assert!(*curve.last().unwrap() <= curve[0]);
        assert!(model.weights[0] > 1.0);
    }

    #[test]
    fn train_rejects_bad_config_and_empty_data() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&[example(vec![1.0], 0.5)], &cfg),
            Err(Error::InvalidConfig { .. })
        ));
        assert!(matches!(
            train(&[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn train_loss_non_increasing_at_small_learning_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let examples: Vec<TrainingExample> = (0..32)
            .map(|_| {
                let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
                example(vec![x, x * x], (x + 1.0) / 2.0)
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            ..TrainConfig::default()
        };
        let (_, curve) = train(&examples, &cfg).unwrap();
        for pair in curve.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn train_deterministic_per_seed() {
        let examples: Vec<TrainingExample> = (0..10)
            .map(|i| example(vec![i as f64 / 10.0], if i < 5 { 0.1 } else { 0.9 }))
            .collect();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let (m1, c1) = train(&examples, &cfg).unwrap();
        let (m2, c2) = train(&examples, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let model = LinearScorer {
            weights: vec![0.123456789012345, -4.5e-3, 2.0, 0.0],
            bias: -0.987654321,
        };
        let stats = Stats {
            mean: [1.0, 2.5, 3.0, 18.0],
            std: [0.5, 1.5, 2.25, 6.0],
        };
        save_checkpoint(&model, &stats, &path).unwrap();
        let (model2, stats2) = load_checkpoint(&path).unwrap();
        assert_eq!(model, model2);
        assert_eq!(stats, stats2);
    }
}
