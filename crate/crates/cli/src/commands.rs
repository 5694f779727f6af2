//! Subcommand implementations.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use amcs_core::config::{RunConfig, SourceKind};
use amcs_core::dataset::{
    allocation_csv, allocation_report, compute_stats, export_jsonl, import_jsonl, BUCKETS,
};
use amcs_core::error::{Error, Result};
use amcs_core::estimation::estimate_node;
use amcs_core::harness::{make_forest, run_comparison, rows_csv, sign_test_p_value, summary_csv};
use amcs_core::rollout::{
    load_problems_jsonl, Problem, RemoteSource, RolloutSource, SimSource,
};
use amcs_core::search::run_search;
use amcs_core::seeding::{mix, mix_str};
use amcs_core::trainer::{featurize, save_checkpoint, train as train_model};

const WORLD_SEED_TAG: u64 = 0x776f;
const FOREST_SEED_TAG: u64 = 0x666f;
const BENCH_SEED_TAG: u64 = 0x6263;

/// SHA-256 of the raw config file, or of the empty string when running on
/// defaults. Part of the run manifest.
pub fn config_hash(path: Option<&Path>) -> String {
    let bytes = path
        .and_then(|p| std::fs::read(p).ok())
        .unwrap_or_default();
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn source_for(config: &RunConfig, problem: &Problem) -> Result<Box<dyn RolloutSource>> {
    match config.run.source {
        SourceKind::Sim => {
            let world_seed = mix(config.run.seed, WORLD_SEED_TAG);
            let world = config.sim.world_for(problem, world_seed);
            Ok(Box::new(SimSource::new(world)?))
        }
        SourceKind::Remote => Ok(Box::new(RemoteSource::new(config.remote.clone())?)),
    }
}

fn out_dir(config: &RunConfig) -> Result<std::path::PathBuf> {
    let dir = std::path::PathBuf::from(&config.run.out_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct ManifestProblem {
    id: String,
    records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

#[derive(Serialize)]
struct Manifest {
    config_hash: String,
    seed: u64,
    source: String,
    problem_count: usize,
    record_count: usize,
    problems: Vec<ManifestProblem>,
}

/// `amcs generate`: search every problem, export records and a manifest.
pub fn generate(config: &RunConfig, problems_path: &Path, config_hash: &str) -> Result<()> {
    let problems = load_problems_jsonl(problems_path)?;
    if problems.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dir = out_dir(config)?;

    type ProblemResult = (String, Vec<amcs_core::dataset::SupervisionRecord>, Option<String>);
    let results: Mutex<Vec<ProblemResult>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = config.run.max_parallel_problems.min(problems.len());
    let worker_error: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= problems.len() {
                    break;
                }
                let problem = &problems[i];
                let seed = mix_str(config.run.seed, &problem.id);
                let run = source_for(config, problem).and_then(|source| {
                    run_search(problem, source.as_ref(), &config.search, &config.estimator, seed)
                });
                match run {
                    Ok(outcome) => {
                        if let Some(failure) = &outcome.failure {
                            log::error!("problem `{}` failed: {failure}", problem.id);
                        }
                        results.lock().expect("results lock").push((
                            problem.id.clone(),
                            outcome.records,
                            outcome.failure,
                        ));
                    }
                    Err(error) => {
                        log::error!("problem `{}` failed: {error}", problem.id);
                        let mut slot = worker_error.lock().expect("error lock");
                        if slot.is_none() {
                            *slot = Some(error);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(error) = worker_error.into_inner().expect("error lock") {
        return Err(error);
    }

    let mut results = results.into_inner().expect("results lock");
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut records = Vec::new();
    let mut manifest_problems = Vec::new();
    let mut failures = 0usize;
    for (id, problem_records, failure) in results {
        manifest_problems.push(ManifestProblem {
            id,
            records: problem_records.len(),
            failure: failure.clone(),
        });
        if failure.is_some() {
            failures += 1;
        }
        records.extend(problem_records);
    }

    let dataset_path = dir.join("dataset.jsonl");
    let written = export_jsonl(&records, &dataset_path)?;
    let manifest = Manifest {
        config_hash: config_hash.to_string(),
        seed: config.run.seed,
        source: match config.run.source {
            SourceKind::Sim => "sim".to_string(),
            SourceKind::Remote => "remote".to_string(),
        },
        problem_count: manifest_problems.len(),
        record_count: written,
        problems: manifest_problems,
    };
    let manifest_path = dir.join("manifest.json");
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    std::fs::write(&manifest_path, manifest_text)?;

    println!(
        "wrote {written} records for {} problems to {}",
        manifest.problem_count,
        dataset_path.display()
    );
    if failures > 0 {
        return Err(Error::Transport(format!(
            "{failures} problem(s) failed; see {}",
            manifest_path.display()
        )));
    }
    Ok(())
}

/// `amcs estimate`: estimate one node and print the estimate as JSON.
pub fn estimate(
    config: &RunConfig,
    problems_path: &Path,
    problem_id: Option<&str>,
    steps: &[String],
) -> Result<()> {
    config.estimator.validate()?;
    let problems = load_problems_jsonl(problems_path)?;
    let problem = match problem_id {
        Some(id) => problems
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::InvalidProblem(format!("no problem with id `{id}`")))?,
        None => problems
            .first()
            .ok_or_else(|| Error::InvalidProblem("problems file is empty".into()))?,
    };
    let source = source_for(config, problem)?;
    let seed = mix_str(config.run.seed, &problem.id);
    let estimate = estimate_node(steps, problem, source.as_ref(), &config.estimator, seed)?;
    println!("{}", serde_json::to_string(&estimate).expect("estimate serializes"));
    Ok(())
}

/// `amcs benchmark`: adaptive versus fixed-budget comparison on a forest.
pub fn benchmark(config: &RunConfig) -> Result<()> {
    let dir = out_dir(config)?;
    let forest_spec = config
        .harness
        .forest_spec(mix(config.run.seed, FOREST_SEED_TAG));
    let forest = make_forest(&forest_spec)?;
    let seeds: Vec<u64> = (0..config.harness.num_seeds)
        .map(|i| mix(config.run.seed, BENCH_SEED_TAG + i as u64))
        .collect();
    let report = run_comparison(&forest, &config.estimator, config.harness.fixed_n, &seeds)?;

    std::fs::write(dir.join("benchmark_nodes.csv"), rows_csv(&report))?;
    std::fs::write(dir.join("benchmark_summary.csv"), summary_csv(&report))?;

    println!(
        "adaptive: MAE {:.4}, mean rollouts {:.2}",
        report.adaptive.mean_abs_error, report.adaptive.mean_rollouts
    );
    println!(
        "fixed(n={}): MAE {:.4}, mean rollouts {:.2}",
        report.fixed_n, report.fixed.mean_abs_error, report.fixed.mean_rollouts
    );
    match report.adaptive_mid_extreme_ratio {
        Some(ratio) => println!("adaptive mid/extreme rollout ratio: {ratio:.3}"),
        None => println!("adaptive mid/extreme rollout ratio: undefined (empty bucket)"),
    }
    if report.seeds.len() < 2 {
        println!("single seed: paired sign test skipped");
    } else {
        let wins = report
            .per_seed_mae
            .iter()
            .filter(|(_, a, f)| a < f)
            .count() as u32;
        let losses = report
            .per_seed_mae
            .iter()
            .filter(|(_, a, f)| a > f)
            .count() as u32;
        println!(
            "paired seeds: adaptive wins {wins}/{} (sign test p = {:.4})",
            wins + losses,
            sign_test_p_value(wins, losses)
        );
    }
    println!("rows: {}", dir.join("benchmark_nodes.csv").display());
    Ok(())
}

/// `amcs stats`: dataset statistics plus the allocation table.
pub fn stats(config: &RunConfig, dataset_path: &Path) -> Result<()> {
    let records = import_jsonl(dataset_path)?;
    let stats = compute_stats(&records)?;
    let report = allocation_report(&records)?;
    let dir = out_dir(config)?;

    println!("records: {}", records.len());
    println!(
        "mean steps: {:.2}, mean tokens/step: {:.2}",
        stats.mean_steps, stats.mean_tokens_per_step
    );
    println!("value bucket | mean rollouts | mean depth | mean nodes | count");
    for (i, bucket) in report.buckets.iter().enumerate() {
        let (lo, hi) = BUCKETS[i];
        match bucket {
            Some(b) => println!(
                "[{lo:.1}, {hi:.1}) | {:13.2} | {:10.2} | {:10.2} | {:5}",
                b.mean_rollouts, b.mean_depth, b.mean_nodes, b.count
            ),
            None => println!("[{lo:.1}, {hi:.1}) | {:>13} | {:>10} | {:>10} | {:5}", "-", "-", "-", 0),
        }
    }
    match report.mid_extreme_ratio {
        Some(ratio) => println!("mid/extreme rollout ratio: {ratio:.3}"),
        None => println!("mid/extreme rollout ratio: undefined"),
    }

    std::fs::write(dir.join("allocation.csv"), allocation_csv(&report))?;
    let mut stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    stats_json.push('\n');
    std::fs::write(dir.join("stats.json"), stats_json)?;
    Ok(())
}

/// `amcs train`: fit the scorer and write checkpoint plus loss curve.
pub fn train(config: &RunConfig, dataset_path: &Path) -> Result<()> {
    let records = import_jsonl(dataset_path)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dir = out_dir(config)?;
    let (examples, stats) = featurize(&records)?;
    let (model, curve) = train_model(&examples, &config.trainer)?;

    let checkpoint_path = dir.join("model.txt");
    save_checkpoint(&model, &stats, &checkpoint_path)?;
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in curve.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(dir.join("loss.csv"), csv)?;

    println!(
        "trained on {} examples: loss {:.4} -> {:.4}",
        examples.len(),
        curve.first().expect("curve non-empty"),
        curve.last().expect("curve non-empty")
    );
    println!("checkpoint: {}", checkpoint_path.display());
    Ok(())
}
