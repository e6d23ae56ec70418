//! Global balance: class-balanced coreset composition across the replay
//! buffer and the incoming batch, and the focal loss used for training.
//!
//! Selection is greedy. At every pick the class whose combined count
//! (buffer + already selected) is smallest has the largest deficit against
//! the uniform target `1/c`, so it supplies the next sample. Within a class,
//! samples are taken in farthest-point order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rcs::farthest_point_coreset;

/// Lower clamp on probabilities fed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// How negative pseudo-labels ("not class k") enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativeLabelMode {
    Ignore,
    #[default]
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalLossConfig {
    pub gamma: f64,
    /// Weight of every pseudo-labeled term.
    pub alpha: f64,
    pub negative_label_mode: NegativeLabelMode,
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.7,
            negative_label_mode: NegativeLabelMode::Complement,
        }
    }
}

impl FocalLossConfig {
    /// Plain cross-entropy with unit pseudo-label weight.
    pub fn cross_entropy() -> Self {
        Self {
            gamma: 0.0,
            alpha: 1.0,
            negative_label_mode: NegativeLabelMode::Ignore,
        }
    }
}

/// `weight · (1 − p_y)^γ · (−ln p_y)` and its gradient with respect to the
/// logits that produced `probabilities` through a softmax.
pub fn focal_loss(probabilities: &[f64], label: usize, gamma: f64, weight: f64) -> Result<(f64, Vec<f64>)> {
    if label >= probabilities.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidArgument("focal gamma must be >= 0".into()));
    }
    let p = probabilities[label];
    let q = 1.0 - p;
    let log_p = p.max(PROB_FLOOR).ln();
    let loss = weight * q.powf(gamma) * -log_p;

    // dL/dp_y · p_y, so that dL/dz_j = -weight · coef · (δ_yj − p_j)
    let coef = q.powf(gamma)
        - if gamma > 0.0 && q > 0.0 {
            gamma * q.powf(gamma - 1.0) * p * log_p
        } else {
            0.0
        };
    let grad = probabilities
        .iter()
        .enumerate()
        .map(|(j, pj)| {
            let delta = if j == label { 1.0 } else { 0.0 };
            -weight * coef * (delta - pj)
        })
        .collect();
    Ok((loss, grad))
}

/// Literal sum over buffer samples (weight 1) and coreset samples (weight α)
/// of per-sample focal terms. Inputs are `(probabilities, label)` pairs.
pub fn total_focal_loss(buffer: &[(&[f64], usize)], coreset: &[(&[f64], usize)], cfg: &FocalLossConfig) -> Result<f64> {
    let mut total = 0.0;
    for (p, y) in buffer {
        total += focal_loss(p, *y, cfg.gamma, 1.0)?.0;
    }
    for (p, y) in coreset {
        total += focal_loss(p, *y, cfg.gamma, cfg.alpha)?.0;
    }
    Ok(total)
}

/// Which per-class target the imbalance objective measures against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Uniform `1/c` (and `1/bc_t` for the buffer term).
    #[default]
    Normalized,
    /// The literal `c/s` and `bc_t/bn` targets, kept for audit output.
    Verbatim,
}

/// `(1/c) Σ |ps_l − target|`, with target `1/c` or `c/s`.
pub fn coreset_term(ps: &[f64], coreset_size: usize, mode: TargetMode) -> f64 {
    deviation_term(ps, coreset_size, mode)
}

/// `(1/bc_t) Σ |pb_l − target|`, with target `1/bc_t` or `bc_t/bn`.
pub fn buffer_term(pb: &[f64], buffer_size: usize, mode: TargetMode) -> f64 {
    deviation_term(pb, buffer_size, mode)
}

fn deviation_term(props: &[f64], size: usize, mode: TargetMode) -> f64 {
    if props.is_empty() {
        return 0.0;
    }
    let c = props.len() as f64;
    let target = match mode {
        TargetMode::Normalized => 1.0 / c,
        TargetMode::Verbatim if size > 0 => c / size as f64,
        TargetMode::Verbatim => 0.0,
    };
    props.iter().map(|p| (p - target).abs()).sum::<f64>() / c
}

/// Class-imbalance objective over coreset proportions `ps` (length `c`) and
/// buffer proportions `pb` (length `bc_t`). `lambda` scales the coreset term.
pub fn imbalance_objective(
    ps: &[f64],
    pb: &[f64],
    coreset_size: usize,
    buffer_size: usize,
    mode: TargetMode,
    lambda: f64,
) -> f64 {
    lambda * coreset_term(ps, coreset_size, mode) + buffer_term(pb, buffer_size, mode)
}

/// Proportions of `counts`, all zero when the total is zero.
pub fn proportions(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&n| n as f64 / total as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceState {
    pub coreset_class_proportions: Vec<f64>,
    pub buffer_class_proportions: Vec<f64>,
    pub target_proportion: f64,
    /// Normalized objective of the coreset against the buffer after the
    /// coreset joins it.
    pub imbalance_score: f64,
    /// Same composition measured with the literal `c/s`, `bc_t/bn` targets.
    pub verbatim_score: f64,
}

impl BalanceState {
    /// Measures a selection whose per-class counts are `selected` against a
    /// buffer holding `buffer_counts`. Both slices are indexed by class.
    pub fn measure(selected: &[usize], buffer_counts: &[usize]) -> Self {
        let c = selected.len();
        let ps = proportions(selected);
        let joint: Vec<usize> = (0..c)
            .map(|l| selected[l] + buffer_counts.get(l).copied().unwrap_or(0))
            .collect();
        let present: Vec<usize> = joint.iter().copied().filter(|&n| n > 0).collect();
        let pb_present = proportions(&present);
        let s: usize = selected.iter().sum();
        let bn: usize = present.iter().sum();
        Self {
            coreset_class_proportions: ps.clone(),
            buffer_class_proportions: proportions(&joint),
            target_proportion: if c > 0 { 1.0 / c as f64 } else { 0.0 },
            imbalance_score: imbalance_objective(&ps, &pb_present, s, bn, TargetMode::Normalized, 1.0),
            verbatim_score: imbalance_objective(&ps, &pb_present, s, bn, TargetMode::Verbatim, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BalanceCandidate<'a> {
    pub features: &'a [f64],
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedSelection {
    /// Indices into the candidate slice, in pick order.
    pub indices: Vec<usize>,
    pub state: BalanceState,
}

/// Greedy globally balanced selection of up to `target_size` candidates.
///
/// `buffer_counts[l]` is the number of buffer entries of class `l`; classes
/// beyond its length count as empty. `class_count` fixes the target `1/c`.
pub fn balanced_select(
    candidates: &[BalanceCandidate<'_>],
    buffer_counts: &[usize],
    class_count: usize,
    target_size: usize,
) -> Result<BalancedSelection> {
    if let Some(bad) = candidates.iter().find(|c| c.class >= class_count) {
        return Err(Error::InvalidArgument(format!(
            "candidate class {} outside {class_count} classes",
            bad.class
        )));
    }
    // Farthest-point order within each class.
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for class in 0..class_count {
        let members: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].class == class).collect();
        if members.is_empty() {
            continue;
        }
        let points: Vec<&[f64]> = members.iter().map(|&i| candidates[i].features).collect();
        let order = farthest_point_coreset(&points, points.len()).indices;
        queues[class] = order.into_iter().rev().map(|k| members[k]).collect();
    }

    let mut selected = vec![0usize; class_count];
    let mut indices = Vec::with_capacity(target_size.min(candidates.len()));
    while indices.len() < target_size {
        // Largest deficit below 1/c is the smallest joint count.
        let pick = (0..class_count)
            .filter(|&l| !queues[l].is_empty())
            .min_by_key(|&l| (buffer_counts.get(l).copied().unwrap_or(0) + selected[l], l));
        let Some(class) = pick else { break };
        indices.push(queues[class].pop().expect("non-empty queue"));
        selected[class] += 1;
    }
    Ok(BalancedSelection {
        state: BalanceState::measure(&selected, buffer_counts),
        indices,
    })
}
