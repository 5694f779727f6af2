//! Strategy clusters over standardized rollout features.
//!
//! Initial rollouts are partitioned by k-means (k-means++ seeding, Lloyd
//! iterations, cap 100) in standardized feature space. Later rollouts are
//! assigned to the nearest centroid and the cluster's statistics, Wilson
//! uncertainty, and centroid are updated incrementally. Centroids live in
//! standardized space only.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::wilson_delta;
use crate::rollout::FeatureStats;

const LLOYD_ITERATION_CAP: usize = 100;

/// One strategy cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    /// Rollout indices belonging to this cluster.
    pub members: Vec<usize>,
    /// Successful rollouts among members.
    pub successes: u64,
    /// Total rollouts among members.
    pub total: u64,
    /// `successes / total`, or 0 when empty.
    pub p_hat: f64,
    /// Wilson half-width of the success estimate; 1.0 sentinel when empty.
    pub delta: f64,
    /// Mean of member features in standardized space.
    pub centroid: [f64; 2],
}

impl Cluster {
    fn empty(id: usize, centroid: [f64; 2]) -> Self {
        Cluster {
            id,
            members: Vec::new(),
            successes: 0,
            total: 0,
            p_hat: 0.0,
            delta: 1.0,
            centroid,
        }
    }
}

/// The full cluster state for one node under estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    /// Frozen standardization parameters fitted on the initial rollouts.
    pub feature_stats: FeatureStats,
    pub rng_seed: u64,
    /// Critical value used for the Wilson uncertainty of every cluster.
    pub z: f64,
}

impl ClusterSet {
    /// Cluster the initial rollouts and fill in outcome statistics.
    pub fn from_initial(
        std_features: &[[f64; 2]],
        successes: &[bool],
        k: usize,
        seed: u64,
        feature_stats: FeatureStats,
        z: f64,
    ) -> Result<Self> {
        if std_features.len() != successes.len() {
            return Err(Error::Shape {
                expected: std_features.len(),
                got: successes.len(),
            });
        }
        let mut clusters = kmeans_init(std_features, k, seed)?;
        for cluster in clusters.iter_mut() {
            for &idx in &cluster.members {
                cluster.total += 1;
                if successes[idx] {
                    cluster.successes += 1;
                }
            }
            cluster.p_hat = if cluster.total > 0 {
                cluster.successes as f64 / cluster.total as f64
            } else {
                0.0
            };
            cluster.delta = wilson_delta(cluster.successes, cluster.total, z);
        }
        Ok(ClusterSet {
            clusters,
            feature_stats,
            rng_seed: seed,
            z,
        })
    }

    pub fn n_total(&self) -> u64 {
        self.clusters.iter().map(|c| c.total).sum()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.delta).collect()
    }
}

fn dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn mean_of(points: &[[f64; 2]], members: &[usize]) -> [f64; 2] {
    let mut m = [0.0, 0.0];
    for &idx in members {
        m[0] += points[idx][0];
        m[1] += points[idx][1];
    }
    let n = members.len() as f64;
    [m[0] / n, m[1] / n]
}

fn distinct_count(points: &[[f64; 2]]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for p in points {
        seen.insert((p[0].to_bits(), p[1].to_bits()));
    }
    seen.len()
}

/// Partition points into at most `k` clusters: k-means++ seeding, Lloyd
/// iterations with an iteration cap, deterministic per seed. The effective
/// cluster count is `min(k, number of distinct points)` so every returned
/// cluster is non-empty. Outcome statistics are left zeroed.
pub fn kmeans_init(std_features: &[[f64; 2]], k: usize, seed: u64) -> Result<Vec<Cluster>> {
    if k == 0 {
        return Err(Error::config("k_clusters", "must be at least 1"));
    }
    if std_features.is_empty() {
        return Err(Error::EmptySample("kmeans on zero points".into()));
    }
    let k_eff = k.min(distinct_count(std_features));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding over distinct positions.
    let mut centroids: Vec<[f64; 2]> = Vec::with_capacity(k_eff);
    let first = rng.random_range(0..std_features.len());
    centroids.push(std_features[first]);
    while centroids.len() < k_eff {
        let weights: Vec<f64> = std_features
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| dist_sq(*p, *c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // All remaining points coincide with a centroid; cannot happen
            // while centroids.len() < distinct count.
            break;
        };
        centroids.push(std_features[next]);
    }
    let k_eff = centroids.len();

    let mut assignment = vec![0usize; std_features.len()];
    for _ in 0..LLOYD_ITERATION_CAP {
        // Assignment step; ties go to the lowest cluster id.
        let mut changed = false;
        for (i, p) in std_features.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist_sq(*p, centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = dist_sq(*p, *c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }

        // Repair empty clusters: reseed to the point farthest from the
        // centroid it is currently assigned to.
        let mut counts = vec![0usize; k_eff];
        for &a in &assignment {
            counts[a] += 1;
        }
        let mut repaired = false;
        for empty in 0..k_eff {
            if counts[empty] > 0 {
                continue;
            }
            let farthest = (0..std_features.len())
                .max_by(|&a, &b| {
                    let da = dist_sq(std_features[a], centroids[assignment[a]]);
                    let db = dist_sq(std_features[b], centroids[assignment[b]]);
                    da.partial_cmp(&db).expect("finite distances")
                })
                .expect("non-empty point set");
            centroids[empty] = std_features[farthest];
            repaired = true;
        }
        if repaired {
            continue;
        }

        for (j, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..std_features.len())
                .filter(|&i| assignment[i] == j)
                .collect();
            *centroid = mean_of(std_features, &members);
        }
        if !changed {
            break;
        }
    }

    // The loop can only exit at the iteration cap with an unrepaired empty
    // cluster; give any such cluster its farthest point.
    loop {
        let mut counts = vec![0usize; k_eff];
        for &a in &assignment {
            counts[a] += 1;
        }
        let Some(empty) = (0..k_eff).find(|&j| counts[j] == 0) else {
            break;
        };
        let farthest = (0..std_features.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = dist_sq(std_features[a], centroids[assignment[a]]);
                let db = dist_sq(std_features[b], centroids[assignment[b]]);
                da.partial_cmp(&db).expect("finite distances")
            })
            .expect("a cluster with at least two members exists");
        assignment[farthest] = empty;
    }

    let mut clusters: Vec<Cluster> = (0..k_eff)
        .map(|j| Cluster::empty(j, centroids[j]))
        .collect();
    for (i, &a) in assignment.iter().enumerate() {
        clusters[a].members.push(i);
    }
    for cluster in clusters.iter_mut() {
        cluster.centroid = mean_of(std_features, &cluster.members);
    }
    Ok(clusters)
}

/// Nearest-centroid assignment in standardized space. Ties break to the
/// lowest cluster id.
pub fn assign(std_feature: [f64; 2], set: &ClusterSet) -> usize {
    let mut best = 0usize;
    let mut best_d = dist_sq(std_feature, set.clusters[0].centroid);
    for cluster in set.clusters.iter().skip(1) {
        let d = dist_sq(std_feature, cluster.centroid);
        if d < best_d {
            best_d = d;
            best = cluster.id;
        }
    }
    best
}

/// Register a new rollout in a cluster: append the member, update counts,
/// success estimate, Wilson uncertainty, and the centroid (incremental mean).
pub fn update_cluster(
    set: &mut ClusterSet,
    cluster_id: usize,
    rollout_index: usize,
    success: bool,
    std_feature: [f64; 2],
) -> Result<()> {
    if cluster_id >= set.clusters.len() {
        return Err(Error::Integrity(format!(
            "cluster id {cluster_id} out of range"
        )));
    }
    if set
        .clusters
        .iter()
        .any(|c| c.members.contains(&rollout_index))
    {
        return Err(Error::Integrity(format!(
            "rollout index {rollout_index} already assigned"
        )));
    }
    let z = set.z;
    let cluster = &mut set.clusters[cluster_id];
    cluster.members.push(rollout_index);
    cluster.total += 1;
    if success {
        cluster.successes += 1;
    }
    cluster.p_hat = cluster.successes as f64 / cluster.total as f64;
    cluster.delta = wilson_delta(cluster.successes, cluster.total, z);
    let n = cluster.total as f64;
    cluster.centroid[0] += (std_feature[0] - cluster.centroid[0]) / n;
    cluster.centroid[1] += (std_feature[1] - cluster.centroid[1]) / n;
    Ok(())
}
