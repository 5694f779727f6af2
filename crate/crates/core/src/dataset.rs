//! Supervision record serialization and dataset statistics.
//!
//! Records go to JSONL with a fixed field order so identical inputs produce
//! byte-identical files. Statistics mirror the reports used to analyze
//! allocation behavior: step and token histograms plus per-value-bucket
//! means of rollout spend, depth, and node counts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ClusterSummary, TerminationReason};
use crate::rollout::whitespace_tokens;

/// The value buckets used throughout: left-closed, right-open, except the
/// last which includes 1.0.
pub const BUCKETS: [(f64, f64); 5] = [
    (0.0, 0.2),
    (0.2, 0.4),
    (0.4, 0.6),
    (0.6, 0.8),
    (0.8, 1.0),
];

/// Bucket index of a value in [0, 1]. Comparison-based: dividing by the
/// bucket width misplaces exact boundaries like 0.6 in f64.
pub fn bucket_index(value: f64) -> usize {
    if value < 0.2 {
        0
    } else if value < 0.4 {
        1
    } else if value < 0.6 {
        2
    } else if value < 0.8 {
        3
    } else {
        4
    }
}

/// One exportable training tuple: a problem, a step prefix, its estimated
/// value, and provenance. Field order here is the JSONL field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisionRecord {
    pub problem_id: String,
    pub problem: String,
    pub prefix_steps: Vec<String>,
    pub step_index: usize,
    pub mu_hat: f64,
    pub n_total: u64,
    pub termination_reason: TerminationReason,
    pub per_cluster: Vec<ClusterSummary>,
    pub search_depth: usize,
    pub generator_tag: String,
    pub seed: u64,
}

impl SupervisionRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.mu_hat) {
            return Err(format!("mu_hat {} outside [0, 1]", self.mu_hat));
        }
        if self.step_index != self.prefix_steps.len() {
            return Err(format!(
                "step_index {} does not match {} prefix steps",
                self.step_index,
                self.prefix_steps.len()
            ));
        }
        Ok(())
    }
}

/// Write records as JSONL, one line-feed-terminated object per record.
/// Returns the number written.
pub fn export_jsonl(records: &[SupervisionRecord], path: &Path) -> Result<usize> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    let mut written = 0usize;
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Validation {
                line: written + 1,
                message: e.to_string(),
            })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        written += 1;
    }
    writer.flush()?;
    Ok(written)
}

/// Read records back; parse failures name the line and byte offset, and
/// records violating their invariants are rejected.
pub fn import_jsonl(path: &Path) -> Result<Vec<SupervisionRecord>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut offset = 0u64;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let record: SupervisionRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                offset,
                message: e.to_string(),
            })?;
        record.validate().map_err(|message| Error::Validation {
            line: line_no,
            message,
        })?;
        records.push(record);
        offset += line.len() as u64 + 1;
    }
    Ok(records)
}

/// Per-bucket aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub mean_rollouts: f64,
    pub mean_depth: f64,
    /// Mean estimated nodes per problem landing in this bucket.
    pub mean_nodes: f64,
    pub count: u64,
}

/// Descriptive statistics over a record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Records per prefix step count.
    pub step_count_histogram: Vec<(usize, u64)>,
    /// Records per rounded mean tokens-per-step.
    pub tokens_per_step_histogram: Vec<(usize, u64)>,
    pub mean_steps: f64,
    /// Total tokens across all steps divided by total steps.
    pub mean_tokens_per_step: f64,
    /// Indexed by value bucket; `None` when a bucket is empty.
    pub buckets: [Option<BucketStats>; 5],
}

fn record_tokens(record: &SupervisionRecord) -> usize {
    record
        .prefix_steps
        .iter()
        .map(|s| whitespace_tokens(s))
        .sum()
}

/// Histograms and means over a non-empty record set.
pub fn compute_stats(records: &[SupervisionRecord]) -> Result<DatasetStats> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut step_hist = std::collections::BTreeMap::new();
    let mut token_hist = std::collections::BTreeMap::new();
    let mut total_steps = 0u64;
    let mut total_tokens = 0u64;
    for record in records {
        let steps = record.prefix_steps.len();
        *step_hist.entry(steps).or_insert(0u64) += 1;
        let tokens = record_tokens(record);
        let per_step = if steps > 0 {
            (tokens as f64 / steps as f64).round() as usize
        } else {
            0
        };
        *token_hist.entry(per_step).or_insert(0u64) += 1;
        total_steps += steps as u64;
        total_tokens += tokens as u64;
    }

    Ok(DatasetStats {
        step_count_histogram: step_hist.into_iter().collect(),
        tokens_per_step_histogram: token_hist.into_iter().collect(),
        mean_steps: total_steps as f64 / records.len() as f64,
        mean_tokens_per_step: if total_steps > 0 {
            total_tokens as f64 / total_steps as f64
        } else {
            0.0
        },
        buckets: bucket_stats(records),
    })
}

fn bucket_stats(records: &[SupervisionRecord]) -> [Option<BucketStats>; 5] {
    let mut sums = [(0.0f64, 0.0f64, 0u64); 5];
    let mut problems: [std::collections::BTreeSet<&str>; 5] = Default::default();
    for record in records {
        let b = bucket_index(record.mu_hat);
        sums[b].0 += record.n_total as f64;
        sums[b].1 += record.search_depth as f64;
        sums[b].2 += 1;
        problems[b].insert(record.problem_id.as_str());
    }
    std::array::from_fn(|b| {
        let (rollouts, depth, count) = sums[b];
        (count > 0).then(|| BucketStats {
            mean_rollouts: rollouts / count as f64,
            mean_depth: depth / count as f64,
            mean_nodes: count as f64 / problems[b].len() as f64,
            count,
        })
    })
}

/// Per-bucket allocation report with the mid/extreme rollout ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub buckets: [Option<BucketStats>; 5],
    /// Mean rollouts in [0.4, 0.6) divided by the pooled mean over
    /// [0, 0.2) and [0.8, 1.0]. `None` when either side is empty.
    pub mid_extreme_ratio: Option<f64>,
}

/// Group records by value bucket and compare sampling spend between the
/// middle bucket and the extremes.
pub fn allocation_report(records: &[SupervisionRecord]) -> Result<AllocationReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let buckets = bucket_stats(records);
    let mid = buckets[2];
    let extreme: Vec<f64> = records
        .iter()
        .filter(|r| {
            let b = bucket_index(r.mu_hat);
            b == 0 || b == 4
        })
        .map(|r| r.n_total as f64)
        .collect();
    let mid_extreme_ratio = match (mid, extreme.is_empty()) {
        (Some(mid), false) => {
            let extreme_mean = extreme.iter().sum::<f64>() / extreme.len() as f64;
            Some(mid.mean_rollouts / extreme_mean)
        }
        _ => None,
    };
    Ok(AllocationReport {
        buckets,
        mid_extreme_ratio,
    })
}

/// Render the allocation report as CSV rows
/// `bucket_lo,bucket_hi,mean_rollouts,mean_depth,mean_nodes,count`.
/// Empty buckets are absent.
pub fn allocation_csv(report: &AllocationReport) -> String {
    let mut out = String::from("bucket_lo,bucket_hi,mean_rollouts,mean_depth,mean_nodes,count\n");
    for (i, stats) in report.buckets.iter().enumerate() {
        if let Some(s) = stats {
            let (lo, hi) = BUCKETS[i];
            out.push_str(&format!(
                "{lo},{hi},{},{},{},{}\n",
                s.mean_rollouts, s.mean_depth, s.mean_nodes, s.count
            ));
        }
    }
    out
}
