//! Closed-form KL divergence between diagonal Gaussians.

use serde::{Deserialize, Serialize};

use crate::buffer::ClusterSummary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// `½[KL(p‖q) + KL(q‖p)]`.
    #[default]
    Symmetric,
    /// `KL(buffer ‖ batch)`.
    Directed,
}

/// `KL(p ‖ q) = ½ Σ_k [σp²/σq² + (μq − μp)²/σq² − 1 + ln(σq²/σp²)]`.
pub fn kl_gaussian(p: &ClusterSummary, q: &ClusterSummary) -> Result<f64> {
    if p.dim() != q.dim() || p.diag_variance.len() != q.diag_variance.len() {
        return Err(Error::shape(p.dim(), q.dim()));
    }
    let mut sum = 0.0;
    for k in 0..p.dim() {
        let vp = p.diag_variance[k];
        let vq = q.diag_variance[k];
        let dm = q.mean[k] - p.mean[k];
        sum += vp / vq + dm * dm / vq - 1.0 + (vq / vp).ln();
    }
    Ok((0.5 * sum).max(0.0))
}

/// Divergence used by the redundancy filter, with `buffer` as the reference.
pub fn divergence(buffer: &ClusterSummary, batch: &ClusterSummary, mode: KlMode) -> Result<f64> {
    match mode {
        KlMode::Directed => kl_gaussian(buffer, batch),
        KlMode::Symmetric => Ok(0.5 * (kl_gaussian(buffer, batch)? + kl_gaussian(batch, buffer)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(mean: Vec<f64>, var: Vec<f64>) -> ClusterSummary {
        ClusterSummary {
            id: 0,
            count: 1,
            mean,
            diag_variance: var,
            member_ids: vec![0],
        }
    }

    #[test]
    fn self_divergence_is_zero() {
        let p = g(vec![1.0, -2.0], vec![0.5, 3.0]);
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);
        assert_eq!(divergence(&p, &p, KlMode::Symmetric).unwrap(), 0.0);
    }

    #[test]
    fn unit_variance_mean_shift() {
        let p = g(vec![0.0], vec![1.0]);
        let q = g(vec![1.0], vec![1.0]);
        assert!((kl_gaussian(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let p = g(vec![0.0], vec![1.0]);
        let q = g(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(kl_gaussian(&p, &q), Err(Error::InputShape { .. })));
    }
}
