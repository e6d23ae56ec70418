//! Mini-batch k-means (Sculley-style streaming centroid updates).

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::ClusterSummary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiniBatchKMeansConfig {
    pub minibatch_size: usize,
    pub max_iters: usize,
}

impl Default for MiniBatchKMeansConfig {
    fn default() -> Self {
        Self {
            minibatch_size: 64,
            max_iters: 50,
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centroids<P: AsRef<[f64]>, R: Rng + ?Sized>(points: &[P], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].as_ref().to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters `points` into `min(k, n)` groups and summarizes each.
///
/// `k == n` skips clustering (each point is its own cluster) and `k == 1`
/// is the whole batch. Empty clusters after the mini-batch phase are reseeded
/// at the point farthest from its assigned centroid.
pub fn mini_batch_kmeans<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    k: usize,
    cfg: &MiniBatchKMeansConfig,
    variance_floor: f64,
    rng: &mut R,
) -> Result<Vec<ClusterSummary>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot cluster an empty batch".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be >= 1".into()));
    }
    let dim = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::shape(dim, p.as_ref().len()));
    }
    let k = k.min(n);
    if k == n {
        return (0..n)
            .map(|i| ClusterSummary::from_members(i, points, vec![i], variance_floor))
            .collect();
    }
    if k == 1 {
        return Ok(vec![ClusterSummary::from_members(0, points, (0..n).collect(), variance_floor)?]);
    }

    let mut centroids = seed_centroids(points, k, rng);
    let mut counts = vec![0usize; k];
    let mb = cfg.minibatch_size.clamp(1, n);
    for _ in 0..cfg.max_iters {
        let picks = index::sample(rng, n, mb).into_vec();
        let assigned: Vec<usize> = picks.iter().map(|&i| nearest(points[i].as_ref(), &centroids).0).collect();
        for (&i, &c) in picks.iter().zip(&assigned) {
            counts[c] += 1;
            let lr = 1.0 / counts[c] as f64;
            for (m, x) in centroids[c].iter_mut().zip(points[i].as_ref()) {
                *m += lr * (x - *m);
            }
        }
    }

    let mut assignment: Vec<(usize, f64)> = points.iter().map(|p| nearest(p.as_ref(), &centroids)).collect();
    for _ in 0..k {
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|(c, _)| sizes[*c] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
        let far = (0..n)
            .filter(|&i| sizes[assignment[i].0] > 1)
            .max_by(|&a, &b| assignment[a].1.total_cmp(&assignment[b].1).then(b.cmp(&a)))
            .expect("k < n leaves some cluster with two members");
        centroids[empty] = points[far].as_ref().to_vec();
        assignment = points.iter().map(|p| nearest(p.as_ref(), &centroids)).collect();
    }

    let mut members = vec![Vec::new(); k];
    for (i, (c, _)) in assignment.iter().enumerate() {
        members[*c].push(i);
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty())
        .enumerate()
        .map(|(id, m)| ClusterSummary::from_members(id, points, m, variance_floor))
        .collect()
}
