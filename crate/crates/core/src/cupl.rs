//! Confidence- and uncertainty-gated pseudo-labels.
//!
//! Every unlabeled sample gets T MC-dropout passes. The pseudo-label is the
//! argmax of the mean prediction and the confidence is its probability. A
//! sample is accepted as a positive label when `p ≥ τ_p` and `σ̂² ≤ κ`, and
//! as a negative label ("not this class") when `p ≤ τ_n` and `σ̂² ≤ κ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{NegativeLabelMode, PROB_FLOOR};
use crate::model::{argmax, ModelState, PredictionOutput, Target};

/// Which probability the negative gate inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativeGate {
    /// The argmax class of the mean prediction.
    #[default]
    MaxClass,
    /// The least likely class; the negative label then names that class.
    AnyClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CuplConfig {
    pub tau_p: f64,
    pub tau_n: f64,
    /// Variance threshold on raw probabilities.
    pub kappa: f64,
    pub mc_passes: usize,
    pub negative_gate: NegativeGate,
}

impl Default for CuplConfig {
    fn default() -> Self {
        Self {
            tau_p: 0.9,
            tau_n: 0.45,
            kappa: 0.02,
            mc_passes: 10,
            negative_gate: NegativeGate::MaxClass,
        }
    }
}

impl CuplConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_p > 0.0 && self.tau_p <= 1.0) {
            return Err(Error::Config("cupl.tau_p must lie in (0, 1]".into()));
        }
        if !(self.tau_n >= 0.0 && self.tau_n < 1.0) {
            return Err(Error::Config("cupl.tau_n must lie in [0, 1)".into()));
        }
        if self.tau_n >= self.tau_p {
            return Err(Error::Config("cupl.tau_n must be below cupl.tau_p".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config("cupl.kappa must be >= 0".into()));
        }
        if self.mc_passes == 0 {
            return Err(Error::Config("cupl.mc_passes must be >= 1".into()));
        }
        Ok(())
    }

    /// κ expressed on a scaled axis, e.g. `with_scaled_kappa(2.0, 1e-2)`.
    pub fn with_scaled_kappa(mut self, kappa: f64, scale: f64) -> Self {
        self.kappa = kappa * scale;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledSample {
    /// Position in the batch the sample came from.
    pub index: usize,
    pub features: Vec<f64>,
    pub pseudo_label: usize,
    pub polarity: Polarity,
    pub confidence: f64,
    pub uncertainty: f64,
    pub accepted: bool,
}

impl PseudoLabeledSample {
    pub fn target(&self) -> Target {
        match self.polarity {
            Polarity::Positive => Target::Class(self.pseudo_label),
            Polarity::Negative => Target::NotClass(self.pseudo_label),
        }
    }
}

/// The acceptance rule on one (confidence, uncertainty) pair.
pub fn gate(confidence: f64, uncertainty: f64, cfg: &CuplConfig) -> Option<Polarity> {
    if uncertainty > cfg.kappa {
        return None;
    }
    if confidence >= cfg.tau_p {
        Some(Polarity::Positive)
    } else if confidence <= cfg.tau_n {
        Some(Polarity::Negative)
    } else {
        None
    }
}

/// Gates precomputed MC predictions for `batch`.
pub fn label_predictions<P: AsRef<[f64]>>(
    batch: &[P],
    predictions: &[PredictionOutput],
    cfg: &CuplConfig,
) -> Vec<PseudoLabeledSample> {
    batch
        .iter()
        .zip(predictions)
        .enumerate()
        .map(|(index, (x, pred))| {
            let top = pred.predicted_class;
            let p_top = pred.mc_mean[top];
            let (label, confidence, polarity, accepted) = match gate(p_top, pred.mc_variance, cfg) {
                Some(pol) => (top, p_top, pol, true),
                None => match cfg.negative_gate {
                    NegativeGate::AnyClass => {
                        let low = argmin(&pred.mc_mean);
                        let p_low = pred.mc_mean[low];
                        let ok = pred.mc_variance <= cfg.kappa && p_low <= cfg.tau_n;
                        if ok {
                            (low, p_low, Polarity::Negative, true)
                        } else {
                            (top, p_top, Polarity::Positive, false)
                        }
                    }
                    NegativeGate::MaxClass => {
                        let pol = if p_top <= cfg.tau_n {
                            Polarity::Negative
                        } else {
                            Polarity::Positive
                        };
                        (top, p_top, pol, false)
                    }
                },
            };
            PseudoLabeledSample {
                index,
                features: x.as_ref().to_vec(),
                pseudo_label: label,
                polarity,
                confidence,
                uncertainty: pred.mc_variance,
                accepted,
            }
        })
        .collect()
}

fn argmin(values: &[f64]) -> usize {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    argmax(&neg)
}

/// Runs `mc_passes` stochastic forwards per sample and gates the result.
pub fn pseudo_label<P: AsRef<[f64]>, R: Rng + ?Sized>(
    batch: &[P],
    model: &ModelState,
    cfg: &CuplConfig,
    rng: &mut R,
) -> Result<Vec<PseudoLabeledSample>> {
    if model.class_count() < 2 {
        return Err(Error::InvalidArgument("pseudo-labeling needs at least 2 classes".into()));
    }
    let preds = batch
        .iter()
        .map(|x| model.mc_predict(x.as_ref(), cfg.mc_passes, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(label_predictions(batch, &preds, cfg))
}

/// Loss for a negative pseudo-label on class `k` and its gradient with
/// respect to the logits. Complement mode: `−α · p_k^γ · ln(1 − p_k)`.
pub fn negative_loss_term(
    probabilities: &[f64],
    negated_class: usize,
    gamma: f64,
    alpha: f64,
    mode: NegativeLabelMode,
) -> (f64, Vec<f64>) {
    let c = probabilities.len();
    if mode == NegativeLabelMode::Ignore || negated_class >= c {
        return (0.0, vec![0.0; c]);
    }
    let p = probabilities[negated_class];
    let rest = (1.0 - p).max(PROB_FLOOR);
    let log_rest = rest.ln();
    let loss = -alpha * p.powf(gamma) * log_rest;
    // dL/dp_k · p_k
    let coef = -alpha * (gamma * p.powf(gamma) * log_rest - p.powf(gamma + 1.0) / rest);
    let grad = probabilities
        .iter()
        .enumerate()
        .map(|(j, pj)| {
            let delta = if j == negated_class { 1.0 } else { 0.0 };
            coef * (delta - pj)
        })
        .collect();
    (loss, grad)
}
