//! Dense softmax classifier with hand-written backpropagation.
//!
//! Hidden layers use ReLU followed by inverted dropout; the output layer is
//! linear and feeds a softmax. Weights are stored row-major with shape
//! `(out_dim, in_dim)`. Class `0` is the normal operating class.
//!
//! Training objective for one update step, with labeled set `L` and
//! pseudo-labeled set `P`:
//!
//! ```text
//! J = (1/|L|) Σ_{i∈L} ℓ_i  +  (1/|P|) Σ_{j∈P} α ℓ_j
//! ```
//!
//! where `ℓ` is the focal term for positive targets and the complement term
//! for negative ("not class k") targets. [`ModelState::sgd_step`] applies
//! `θ ← θ − η ∇J`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cupl::negative_loss_term;
use crate::error::{Error, Result};
use crate::gbt::{focal_loss, FocalLossConfig};

/// Checkpoint schema version written by [`ModelState::to_checkpoint`].
pub const CHECKPOINT_VERSION: u32 = 1;

/// How the per-class MC-dropout variance is reduced to one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceReduction {
    /// Variance of the probability assigned to the argmax class of the mean.
    #[default]
    ArgmaxClass,
    MaxOverClasses,
    MeanOverClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Multiplier on the `1/sqrt(fan_in)` uniform init bound. `0` gives zero init.
    pub init_scale: f64,
    pub variance_reduction: VarianceReduction,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 32],
            dropout_rate: 0.1,
            learning_rate: 1e-4,
            seed: 0,
            init_scale: 1.0,
            variance_reduction: VarianceReduction::ArgmaxClass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(in_dim: usize, out_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut layer = Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        };
        for row in 0..out_dim {
            layer.init_row(row, scale, rng);
        }
        layer
    }

    fn init_row(&mut self, row: usize, scale: f64, rng: &mut impl Rng) {
        let bound = scale / (self.in_dim as f64).sqrt();
        for w in &mut self.weights[row * self.in_dim..(row + 1) * self.in_dim] {
            *w = if bound > 0.0 {
                rng.random_range(-bound..=bound)
            } else {
                0.0
            };
        }
        self.bias[row] = if bound > 0.0 {
            rng.random_range(-bound..=bound)
        } else {
            0.0
        };
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, b)| {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

/// Network parameters plus the hyperparameters needed to train and sample it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Dense>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub rng_seed: u64,
    pub init_scale: f64,
    pub variance_reduction: VarianceReduction,
    /// Number of parameter updates applied so far.
    pub updates: u64,
    rng: ChaCha8Rng,
}

/// Per-class mean of T stochastic passes and the reduced variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    pub mc_variance: f64,
    pub mc_mean: Vec<f64>,
}

/// Training target for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    /// Negative pseudo-label: the sample is not of this class.
    NotClass(usize),
}

impl Target {
    pub fn class(self) -> usize {
        match self {
            Target::Class(c) | Target::NotClass(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainingSample<'a> {
    pub features: &'a [f64],
    pub target: Target,
}

impl<'a> TrainingSample<'a> {
    pub fn new(features: &'a [f64], target: Target) -> Self {
        Self { features, target }
    }
}

/// Gradient buffers shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &ModelState) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    /// Flattened in the same order as [`ModelState::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).flatten().all(|g| g.is_finite())
    }
}

/// Loss value of one update step and how many samples fed each term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub loss: f64,
    pub labeled: usize,
    pub pseudo: usize,
}

struct Trace {
    /// Input to each layer (`activations[0]` is the sample itself).
    activations: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Dropout multiplier per hidden unit (`0` or `1/(1-p)`), empty when off.
    masks: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl ModelState {
    pub fn new(input_dim: usize, class_count: usize, cfg: &ModelConfig) -> Result<Self> {
        if input_dim == 0 || class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need input_dim > 0 and at least 2 classes, got {input_dim} and {class_count}"
            )));
        }
        if cfg.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer of width 0".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate {} outside [0, 1)",
                cfg.dropout_rate
            )));
        }
        if !(cfg.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        let mut layer_dims = vec![input_dim];
        layer_dims.extend_from_slice(&cfg.hidden_dims);
        layer_dims.push(class_count);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], cfg.init_scale, &mut rng))
            .collect();
        Ok(Self {
            layer_dims,
            layers,
            dropout_rate: cfg.dropout_rate,
            learning_rate: cfg.learning_rate,
            rng_seed: cfg.seed,
            init_scale: cfg.init_scale,
            variance_reduction: cfg.variance_reduction,
            updates: 0,
            rng,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().expect("layer_dims is never empty")
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        Ok(())
    }

    fn trace<R: Rng + ?Sized>(&self, x: &[f64], mut dropout: Option<&mut R>) -> Trace {
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut masks = Vec::with_capacity(n_layers - 1);
        activations.push(x.to_vec());
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&activations[i], &mut buf);
            if i + 1 == n_layers {
                break;
            }
            let mut h: Vec<f64> = buf.iter().map(|z| z.max(0.0)).collect();
            let mask = match dropout.as_deref_mut() {
                Some(rng) if self.dropout_rate > 0.0 => {
                    let m: Vec<f64> = (0..h.len())
                        .map(|_| {
                            if rng.random::<f64>() < self.dropout_rate {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    h.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                    m
                }
                _ => Vec::new(),
            };
            pre.push(std::mem::take(&mut buf));
            masks.push(mask);
            activations.push(h);
        }
        Trace {
            activations,
            pre,
            masks,
            probabilities: softmax(&buf),
        }
    }

    /// Output logits without dropout.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut buf);
            if i + 1 < self.layers.len() {
                a = buf.iter().map(|z| z.max(0.0)).collect();
            }
        }
        Ok(buf)
    }

    /// Softmax probabilities. With `dropout_on`, hidden units are dropped
    /// with probability `dropout_rate` and survivors scaled by `1/(1-p)`.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], dropout_on: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let rng = if dropout_on { Some(rng) } else { None };
        Ok(self.trace(x, rng).probabilities)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// `T` dropout-on forward passes; see [`PredictionOutput`].
    pub fn mc_predict<R: Rng + ?Sized>(&self, x: &[f64], passes: usize, rng: &mut R) -> Result<PredictionOutput> {
        if passes == 0 {
            return Err(Error::InvalidArgument("mc passes must be >= 1".into()));
        }
        self.check_input(x)?;
        let c = self.class_count();
        if self.dropout_rate == 0.0 {
            // Every pass is the same forward; skip the rounding of averaging.
            let p = self.trace(x, None::<&mut R>).probabilities;
            return Ok(PredictionOutput {
                probabilities: p.clone(),
                predicted_class: argmax(&p),
                mc_variance: 0.0,
                mc_mean: p,
            });
        }
        let runs: Vec<Vec<f64>> = (0..passes)
            .map(|_| self.trace(x, Some(&mut *rng)).probabilities)
            .collect();
        let t = passes as f64;
        let mut mean = vec![0.0; c];
        for r in &runs {
            mean.iter_mut().zip(r).for_each(|(m, p)| *m += p);
        }
        mean.iter_mut().for_each(|m| *m /= t);
        let class_var = |k: usize| runs.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / t;
        let predicted_class = argmax(&mean);
        let mc_variance = match self.variance_reduction {
            VarianceReduction::ArgmaxClass => class_var(predicted_class),
            VarianceReduction::MaxOverClasses => (0..c).map(class_var).fold(0.0, f64::max),
            VarianceReduction::MeanOverClasses => (0..c).map(class_var).sum::<f64>() / c as f64,
        };
        Ok(PredictionOutput {
            probabilities: mean.clone(),
            predicted_class,
            mc_variance,
            mc_mean: mean,
        })
    }

    fn check_target(&self, target: Target) -> Result<()> {
        if target.class() >= self.class_count() {
            return Err(Error::InvalidArgument(format!(
                "label {} outside class universe of {}",
                target.class(),
                self.class_count()
            )));
        }
        Ok(())
    }

    /// Loss and gradient of one sample with respect to every parameter.
    fn sample_gradient<R: Rng + ?Sized>(
        &self,
        sample: &TrainingSample<'_>,
        weight: f64,
        loss_cfg: &FocalLossConfig,
        dropout: Option<&mut R>,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let trace = self.trace(sample.features, dropout);
        let (loss, mut delta) = match sample.target {
            Target::Class(y) => focal_loss(&trace.probabilities, y, loss_cfg.gamma, weight)?,
            Target::NotClass(k) => negative_loss_term(
                &trace.probabilities,
                k,
                loss_cfg.gamma,
                weight,
                loss_cfg.negative_label_mode,
            ),
        };
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.activations[l];
            let gw = &mut grads.weights[l];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
            }
            grads.bias[l].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            if l == 0 {
                break;
            }
            let mut back = vec![0.0; layer.in_dim];
            for (r, d) in delta.iter().enumerate() {
                let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
            }
            let mask = &trace.masks[l - 1];
            for (j, b) in back.iter_mut().enumerate() {
                if !mask.is_empty() {
                    *b *= mask[j];
                }
                if trace.pre[l - 1][j] <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = back;
        }
        Ok(loss)
    }

    /// Objective `J` and `∇J` for a labeled set (weight 1) and a pseudo-labeled
    /// set (weight α). Each set is averaged over its own size.
    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        labeled: &[TrainingSample<'_>],
        pseudo: &[TrainingSample<'_>],
        loss_cfg: &FocalLossConfig,
        mut dropout: Option<&mut R>,
    ) -> Result<(f64, Gradients)> {
        if labeled.is_empty() && pseudo.is_empty() {
            return Err(Error::InvalidArgument("sgd step needs at least one sample".into()));
        }
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (set, weight) in [(labeled, 1.0), (pseudo, loss_cfg.alpha)] {
            if set.is_empty() {
                continue;
            }
            let mut part = Gradients::zeros_like(self);
            let mut part_loss = 0.0;
            for s in set {
                self.check_input(s.features)?;
                self.check_target(s.target)?;
                part_loss += self.sample_gradient(s, weight, loss_cfg, dropout.as_deref_mut(), &mut part)?;
            }
            let n = set.len() as f64;
            total.add_scaled(&part, 1.0 / n);
            loss += part_loss / n;
        }
        Ok((loss, total))
    }

    /// One SGD update `θ ← θ − η(A + B)`. Dropout is active when `rng` is given.
    /// On a non-finite gradient the model is left untouched.
    pub fn sgd_step<R: Rng + ?Sized>(
        &mut self,
        labeled: &[TrainingSample<'_>],
        pseudo: &[TrainingSample<'_>],
        loss_cfg: &FocalLossConfig,
        dropout: Option<&mut R>,
    ) -> Result<StepLoss> {
        let (loss, grads) = self.loss_and_gradient(labeled, pseudo, loss_cfg, dropout)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::NumericalDivergence {
                batch_index: self.updates as usize,
            });
        }
        let eta = self.learning_rate;
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            layer.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= eta * g);
            layer.bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= eta * g);
        }
        self.updates += 1;
        Ok(StepLoss {
            loss,
            labeled: labeled.len(),
            pseudo: pseudo.len(),
        })
    }

    /// Extends the output layer to `new_class_count` classes. Existing rows are
    /// untouched; new rows draw from the model RNG with the configured init.
    pub fn grow_head(&mut self, new_class_count: usize) -> Result<()> {
        let current = self.class_count();
        if new_class_count <= current {
            return Err(Error::InvalidArgument(format!(
                "grow_head from {current} to {new_class_count} classes: can only grow"
            )));
        }
        let scale = self.init_scale;
        let out = self.layers.last_mut().expect("at least one layer");
        out.weights.resize(new_class_count * out.in_dim, 0.0);
        out.bias.resize(new_class_count, 0.0);
        out.out_dim = new_class_count;
        for row in current..new_class_count {
            out.init_row(row, scale, &mut self.rng);
        }
        *self.layer_dims.last_mut().expect("non-empty") = new_class_count;
        Ok(())
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if params.len() != expected {
            return Err(Error::shape(expected, params.len()));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.is_finite())
    }

    /// SHA-256 over layer dims and the bit patterns of every parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.layer_dims {
            h.update((*d as u64).to_le_bytes());
        }
        for p in self.parameters() {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&ckpt)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        let m = ckpt.model;
        let consistent = m.layer_dims.len() == m.layers.len() + 1
            && m.layers.iter().enumerate().all(|(i, l)| {
                l.in_dim == m.layer_dims[i]
                    && l.out_dim == m.layer_dims[i + 1]
                    && l.weights.len() == l.in_dim * l.out_dim
                    && l.bias.len() == l.out_dim
            });
        if !consistent {
            return Err(Error::Validation("checkpoint layer shapes disagree with layer_dims".into()));
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: ModelState,
}
