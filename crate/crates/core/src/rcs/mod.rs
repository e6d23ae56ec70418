//! Retrospective coreset selection.
//!
//! An arriving batch is clustered with mini-batch k-means, and each cluster
//! is compared against the per-class summaries of the replay buffer. A batch
//! cluster whose smallest divergence to any buffer class is `<= τ` repeats
//! what the buffer already holds and is dropped; the rest survive. Survivors
//! are then thinned with a farthest-point greedy selection.

mod coreset;
mod kl;
mod kmeans;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{ClusterSummary, DEFAULT_VARIANCE_FLOOR};
use crate::error::{Error, Result};

pub use coreset::{coreset_size, farthest_point_coreset, CoresetSelection};
pub use kl::{divergence, kl_gaussian, KlMode};
pub use kmeans::{mini_batch_kmeans, MiniBatchKMeansConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcsConfig {
    /// Number of clusters `uc` per arriving batch.
    pub cluster_count: usize,
    /// Redundancy threshold `τ`.
    pub kl_threshold: f64,
    pub coreset_ratio: f64,
    pub kl_mode: KlMode,
    pub kmeans: MiniBatchKMeansConfig,
    pub variance_floor: f64,
}

impl Default for RcsConfig {
    fn default() -> Self {
        Self {
            cluster_count: 3,
            kl_threshold: 0.5,
            coreset_ratio: 0.6,
            kl_mode: KlMode::Symmetric,
            kmeans: MiniBatchKMeansConfig::default(),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

impl RcsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cluster_count == 0 {
            return Err(Error::Config("rcs.cluster_count must be >= 1".into()));
        }
        if !(self.kl_threshold >= 0.0) {
            return Err(Error::Config("rcs.kl_threshold must be >= 0".into()));
        }
        if !(self.coreset_ratio > 0.0 && self.coreset_ratio <= 1.0) {
            return Err(Error::Config("rcs.coreset_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Clusters an unlabeled batch into `min(uc, |batch|)` groups.
pub fn cluster_batch<P: AsRef<[f64]>, R: Rng + ?Sized>(batch: &[P], cfg: &RcsConfig, rng: &mut R) -> Result<Vec<ClusterSummary>> {
    mini_batch_kmeans(batch, cfg.cluster_count, &cfg.kmeans, cfg.variance_floor, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredBatch {
    pub surviving_clusters: Vec<ClusterSummary>,
    pub dropped_clusters: Vec<ClusterSummary>,
    /// `kl_matrix[b][u]`: divergence between buffer class `b` and batch cluster `u`.
    pub kl_matrix: Vec<Vec<f64>>,
    /// Smallest divergence of each batch cluster to the buffer (`+inf` when empty).
    pub min_divergence: Vec<f64>,
}

impl FilteredBatch {
    /// Batch indices of every surviving sample, ascending.
    pub fn surviving_members(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .surviving_clusters
            .iter()
            .flat_map(|c| c.member_ids.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Splits batch clusters into redundant (min divergence `<= τ`) and surviving.
pub fn filter_redundant(
    batch_clusters: Vec<ClusterSummary>,
    buffer_summaries: &[ClusterSummary],
    tau: f64,
    mode: KlMode,
) -> Result<FilteredBatch> {
    let mut kl_matrix = vec![vec![0.0; batch_clusters.len()]; buffer_summaries.len()];
    for (b, bs) in buffer_summaries.iter().enumerate() {
        for (u, us) in batch_clusters.iter().enumerate() {
            kl_matrix[b][u] = divergence(bs, us, mode)?;
        }
    }
    let min_divergence: Vec<f64> = (0..batch_clusters.len())
        .map(|u| kl_matrix.iter().map(|row| row[u]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut surviving_clusters = Vec::new();
    let mut dropped_clusters = Vec::new();
    for (u, cluster) in batch_clusters.into_iter().enumerate() {
        if min_divergence[u] <= tau {
            dropped_clusters.push(cluster);
        } else {
            surviving_clusters.push(cluster);
        }
    }
    Ok(FilteredBatch {
        surviving_clusters,
        dropped_clusters,
        kl_matrix,
        min_divergence,
    })
}
