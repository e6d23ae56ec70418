use std::collections::HashSet;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clock::{Clock, SystemClock};
use super::scenario::{AgentBatch, LabeledSample};
use crate::buffer::{BufferEntry, EvictionPolicy, ReplayBuffer, Source, DEFAULT_CAPACITY};
use crate::cupl::{label_predictions, CuplConfig, Polarity};
use crate::error::{Error, Result};
use crate::gbt::{balanced_select, BalanceCandidate, BalanceState, FocalLossConfig};
use crate::model::{argmax, ModelConfig, ModelState, PredictionOutput, Target, TrainingSample};
use crate::rcs::{cluster_batch, coreset_size, filter_redundant, RcsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AgentKind {
    /// Pseudo-labels, redundancy filter, balanced coreset, focal loss.
    #[default]
    #[serde(rename = "SRTFD", alias = "srtfd")]
    Srtfd,
    /// Experience replay on ground truth only, cross-entropy, reservoir buffer.
    #[serde(rename = "ER", alias = "er")]
    Er,
    /// Experience replay that also trains on every unlabeled sample with its
    /// argmax label.
    #[serde(rename = "ER_all_pseudo", alias = "er_all_pseudo")]
    ErAllPseudo,
    /// The full agent with pseudo-labeling switched off.
    #[serde(rename = "labeled_only")]
    LabeledOnly,
}

impl AgentKind {
    fn uses_mc(self) -> bool {
        self == AgentKind::Srtfd
    }

    fn is_replay_baseline(self) -> bool {
        matches!(self, AgentKind::Er | AgentKind::ErAllPseudo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub model: ModelConfig,
    pub rcs: RcsConfig,
    pub cupl: CuplConfig,
    pub loss: FocalLossConfig,
    pub buffer_capacity: usize,
    /// Samples drawn from the buffer for every update.
    pub replay_size: usize,
    pub minibatch_size: usize,
    pub epochs_per_step: usize,
    /// Passes over the initialization pool before streaming starts.
    pub init_epochs: usize,
    /// Start with the classes seen at initialization and grow the output
    /// layer as new labels arrive.
    pub incremental_head: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Srtfd,
            model: ModelConfig::default(),
            rcs: RcsConfig::default(),
            cupl: CuplConfig::default(),
            loss: FocalLossConfig::default(),
            buffer_capacity: DEFAULT_CAPACITY,
            replay_size: 50,
            minibatch_size: 16,
            epochs_per_step: 1,
            init_epochs: 3,
            incremental_head: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.rcs.validate()?;
        self.cupl.validate()?;
        if self.minibatch_size == 0 {
            return Err(Error::Config("agent.minibatch_size must be >= 1".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("agent.buffer_capacity must be >= 1".into()));
        }
        Ok(())
    }

    fn effective_loss(&self) -> FocalLossConfig {
        if self.kind.is_replay_baseline() {
            FocalLossConfig::cross_entropy()
        } else {
            self.loss
        }
    }
}

/// Intermediate artifacts of one step, kept when auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    /// `kl_matrix[b][u]` between buffer class `b` and batch cluster `u`.
    pub kl_matrix: Vec<Vec<f64>>,
    pub min_divergence: Vec<f64>,
    pub dropped_cluster_sizes: Vec<usize>,
    /// Pseudo-labels of the candidates that survived the redundancy filter.
    pub pool_classes: Vec<usize>,
    pub buffer_counts_before: Vec<usize>,
    pub balance: Option<BalanceState>,
    pub confidences: Vec<f64>,
    pub uncertainties: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub task: usize,
    pub condition_id: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub accepted_positive: usize,
    pub accepted_negative: usize,
    pub rejected: usize,
    pub clusters: usize,
    pub clusters_dropped: usize,
    /// Accepted positives left after the redundancy filter.
    pub survivors: usize,
    pub coreset_ids: Vec<u64>,
    pub trained_labeled: usize,
    pub trained_replay: usize,
    /// Unlabeled samples that entered a gradient (coreset plus negatives).
    pub trained_unlabeled: usize,
    pub updated: bool,
    pub mean_loss: Option<f64>,
    pub fingerprint_before: String,
    pub fingerprint_after_predict: String,
    pub fingerprint_after: String,
    pub evicted: usize,
    pub audit: Option<StepAudit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StepTiming {
    pub predict_seconds: f64,
    pub update_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Predicted class for each unlabeled sample, made before the update.
    pub predictions: Vec<usize>,
    pub report: StepReport,
    pub timing: StepTiming,
}

pub struct Agent {
    cfg: AgentConfig,
    loss: FocalLossConfig,
    class_count: usize,
    model: ModelState,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    ledger: HashSet<u64>,
    clock: Box<dyn Clock>,
    audit: bool,
    training_time: Duration,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("kind", &self.cfg.kind)
            .field("class_count", &self.class_count)
            .field("buffer_len", &self.buffer.len())
            .field("ledger_len", &self.ledger.len())
            .finish()
    }
}

fn to_secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

impl Agent {
    /// `class_count` is the full class universe of the data. The run `seed`
    /// replaces `cfg.model.seed`.
    pub fn new(feature_dim: usize, class_count: usize, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if class_count < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        let model_cfg = ModelConfig {
            seed,
            ..cfg.model.clone()
        };
        let head = if cfg.incremental_head { 2 } else { class_count };
        let model = ModelState::new(feature_dim, head, &model_cfg)?;
        let policy = if cfg.kind.is_replay_baseline() {
            EvictionPolicy::UniformReservoir
        } else {
            EvictionPolicy::ClassBalanced
        };
        let buffer = ReplayBuffer::new(cfg.buffer_capacity, feature_dim, policy, seed.wrapping_add(1))?
            .with_variance_floor(cfg.rcs.variance_floor);
        Ok(Self {
            loss: cfg.effective_loss(),
            cfg,
            class_count,
            model,
            buffer,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(2)),
            ledger: HashSet::new(),
            clock: Box::new(SystemClock::default()),
            audit: false,
            training_time: Duration::ZERO,
        })
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Every id that has ever entered a coreset.
    pub fn ledger(&self) -> &HashSet<u64> {
        &self.ledger
    }

    /// Accumulated update time of all streamed steps.
    pub fn training_time(&self) -> Duration {
        self.training_time
    }

    fn ensure_head(&mut self, label: usize) -> Result<()> {
        if label >= self.class_count {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside class universe of {}",
                self.class_count
            )));
        }
        if label >= self.model.class_count() {
            self.model.grow_head(label + 1)?;
        }
        Ok(())
    }

    /// Pre-trains on the initialization pool and seeds the buffer with it.
    pub fn initialize(&mut self, init: &[LabeledSample]) -> Result<()> {
        for s in init {
            self.ensure_head(s.label)?;
        }
        let entries: Vec<BufferEntry> = init
            .iter()
            .map(|s| BufferEntry {
                id: s.id,
                features: s.features.clone(),
                label: s.label,
                source: Source::GroundTruth,
                step_added: 0,
            })
            .collect();
        let samples: Vec<TrainingSample<'_>> = init
            .iter()
            .map(|s| TrainingSample::new(&s.features, Target::Class(s.label)))
            .collect();
        self.train_epochs(&samples, &[], self.cfg.init_epochs)?;
        self.buffer.insert(entries)?;
        Ok(())
    }

    /// Shuffled mini-batch SGD over both groups. Each mini-batch holds a
    /// proportional slice of each group. Returns the mean loss.
    fn train_epochs(&mut self, labeled: &[TrainingSample<'_>], pseudo: &[TrainingSample<'_>], epochs: usize) -> Result<Option<f64>> {
        let total = labeled.len() + pseudo.len();
        if total == 0 || epochs == 0 {
            return Ok(None);
        }
        let chunks = total.div_ceil(self.cfg.minibatch_size);
        let mut a: Vec<usize> = (0..labeled.len()).collect();
        let mut b: Vec<usize> = (0..pseudo.len()).collect();
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let dropout = self.model.dropout_rate > 0.0;
        for _ in 0..epochs {
            a.shuffle(&mut self.rng);
            b.shuffle(&mut self.rng);
            for k in 0..chunks {
                let la: Vec<TrainingSample<'_>> = a[k * a.len() / chunks..(k + 1) * a.len() / chunks]
                    .iter()
                    .map(|&i| labeled[i])
                    .collect();
                let lb: Vec<TrainingSample<'_>> = b[k * b.len() / chunks..(k + 1) * b.len() / chunks]
                    .iter()
                    .map(|&i| pseudo[i])
                    .collect();
                if la.is_empty() && lb.is_empty() {
                    continue;
                }
                let rng = if dropout { Some(&mut self.rng) } else { None };
                let out = self.model.sgd_step(&la, &lb, &self.loss, rng)?;
                loss_sum += out.loss;
                steps += 1;
            }
        }
        Ok((steps > 0).then(|| loss_sum / steps as f64))
    }

    /// Deterministic class prediction with the current model.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.model.predict(x)?))
    }

    /// Test-then-train on one batch: predict every unlabeled sample with the
    /// current parameters, then pseudo-label, filter, select and update.
    pub fn run_step(&mut self, batch: &AgentBatch) -> Result<StepOutcome> {
        let fingerprint_before = self.model.fingerprint();

        let t0 = self.clock.now();
        let outputs: Vec<PredictionOutput> = if self.cfg.kind.uses_mc() {
            batch
                .unlabeled
                .iter()
                .map(|u| self.model.mc_predict(&u.features, self.cfg.cupl.mc_passes, &mut self.rng))
                .collect::<Result<_>>()?
        } else {
            batch
                .unlabeled
                .iter()
                .map(|u| {
                    let p = self.model.predict(&u.features)?;
                    Ok(PredictionOutput {
                        predicted_class: argmax(&p),
                        mc_variance: 0.0,
                        mc_mean: p.clone(),
                        probabilities: p,
                    })
                })
                .collect::<Result<_>>()?
        };
        let predictions: Vec<usize> = outputs.iter().map(|o| o.predicted_class).collect();
        let t1 = self.clock.now();
        let fingerprint_after_predict = self.model.fingerprint();

        let t2 = self.clock.now();
        let mut report = self.update(batch, &outputs)?;
        let t3 = self.clock.now();

        report.fingerprint_before = fingerprint_before;
        report.fingerprint_after_predict = fingerprint_after_predict;
        report.fingerprint_after = self.model.fingerprint();
        let timing = StepTiming {
            predict_seconds: to_secs(t1.saturating_sub(t0)),
            update_seconds: to_secs(t3.saturating_sub(t2)),
        };
        self.training_time += t3.saturating_sub(t2);
        Ok(StepOutcome {
            predictions,
            report,
            timing,
        })
    }

    fn update(&mut self, batch: &AgentBatch, outputs: &[PredictionOutput]) -> Result<StepReport> {
        for s in &batch.labeled {
            self.ensure_head(s.label)?;
        }
        let feats: Vec<&[f64]> = batch.unlabeled.iter().map(|u| u.features.as_slice()).collect();
        let mut report = StepReport {
            step: batch.step,
            task: batch.task,
            condition_id: batch.condition_id,
            labeled: batch.labeled.len(),
            unlabeled: batch.unlabeled.len(),
            accepted_positive: 0,
            accepted_negative: 0,
            rejected: 0,
            clusters: 0,
            clusters_dropped: 0,
            survivors: 0,
            coreset_ids: Vec::new(),
            trained_labeled: 0,
            trained_replay: 0,
            trained_unlabeled: 0,
            updated: false,
            mean_loss: None,
            fingerprint_before: String::new(),
            fingerprint_after_predict: String::new(),
            fingerprint_after: String::new(),
            evicted: 0,
            audit: None,
        };
        let mut audit = StepAudit {
            kl_matrix: Vec::new(),
            min_divergence: Vec::new(),
            dropped_cluster_sizes: Vec::new(),
            pool_classes: Vec::new(),
            buffer_counts_before: self.buffer.class_counts(),
            balance: None,
            confidences: Vec::new(),
            uncertainties: Vec::new(),
        };

        // (index into batch.unlabeled, pseudo label) for the coreset, plus negatives.
        let mut coreset: Vec<(usize, usize)> = Vec::new();
        let mut negatives: Vec<(usize, usize)> = Vec::new();

        match self.cfg.kind {
            AgentKind::Srtfd => {
                let labels = label_predictions(&feats, outputs, &self.cfg.cupl);
                if self.audit {
                    audit.confidences = labels.iter().map(|l| l.confidence).collect();
                    audit.uncertainties = labels.iter().map(|l| l.uncertainty).collect();
                }
                let mut positives = Vec::new();
                for l in &labels {
                    match (l.accepted, l.polarity) {
                        (true, Polarity::Positive) => positives.push(l.index),
                        (true, Polarity::Negative) => negatives.push((l.index, l.pseudo_label)),
                        (false, _) => report.rejected += 1,
                    }
                }
                report.accepted_positive = positives.len();
                report.accepted_negative = negatives.len();
                positives.retain(|&i| !self.ledger.contains(&batch.unlabeled[i].id));

                let survivors: Vec<usize> = if positives.is_empty() {
                    Vec::new()
                } else {
                    let points: Vec<&[f64]> = positives.iter().map(|&i| feats[i]).collect();
                    let clusters = cluster_batch(&points, &self.cfg.rcs, &mut self.rng)?;
                    report.clusters = clusters.len();
                    let filtered = filter_redundant(
                        clusters,
                        &self.buffer.class_summaries(),
                        self.cfg.rcs.kl_threshold,
                        self.cfg.rcs.kl_mode,
                    )?;
                    report.clusters_dropped = filtered.dropped_clusters.len();
                    let kept = filtered.surviving_members().into_iter().map(|k| positives[k]).collect();
                    if self.audit {
                        audit.dropped_cluster_sizes = filtered.dropped_clusters.iter().map(|c| c.count).collect();
                        audit.kl_matrix = filtered.kl_matrix;
                        audit.min_divergence = filtered.min_divergence;
                    }
                    kept
                };
                report.survivors = survivors.len();
                let s = coreset_size(self.cfg.rcs.coreset_ratio, survivors.len());
                if s > 0 {
                    let candidates: Vec<BalanceCandidate<'_>> = survivors
                        .iter()
                        .map(|&i| BalanceCandidate {
                            features: feats[i],
                            class: labels[i].pseudo_label,
                        })
                        .collect();
                    let head = self.model.class_count();
                    let sel = balanced_select(&candidates, &audit.buffer_counts_before, head, s)?;
                    coreset = sel.indices.iter().map(|&k| (survivors[k], candidates[k].class)).collect();
                    if self.audit {
                        audit.pool_classes = candidates.iter().map(|c| c.class).collect();
                        audit.balance = Some(sel.state);
                    }
                }
            }
            AgentKind::ErAllPseudo => {
                coreset = outputs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !self.ledger.contains(&batch.unlabeled[*i].id))
                    .map(|(i, o)| (i, o.predicted_class))
                    .collect();
                report.accepted_positive = coreset.len();
                report.survivors = coreset.len();
            }
            AgentKind::Er | AgentKind::LabeledOnly => {}
        }
        report.coreset_ids = coreset.iter().map(|&(i, _)| batch.unlabeled[i].id).collect();

        // Negatives only ride along with an update that happens anyway.
        if !batch.labeled.is_empty() || !coreset.is_empty() {
            let replay = self.buffer.replay_batch(self.cfg.replay_size, &mut self.rng);
            let mut group_a: Vec<TrainingSample<'_>> = batch
                .labeled
                .iter()
                .map(|s| TrainingSample::new(&s.features, Target::Class(s.label)))
                .collect();
            let mut group_b: Vec<TrainingSample<'_>> = coreset
                .iter()
                .map(|&(i, y)| TrainingSample::new(feats[i], Target::Class(y)))
                .chain(negatives.iter().map(|&(i, y)| TrainingSample::new(feats[i], Target::NotClass(y))))
                .collect();
            for e in &replay {
                let s = TrainingSample::new(&e.features, Target::Class(e.label));
                match e.source {
                    Source::GroundTruth => group_a.push(s),
                    Source::Pseudo => group_b.push(s),
                }
            }
            report.trained_labeled = batch.labeled.len();
            report.trained_replay = replay.len();
            report.trained_unlabeled = coreset.len() + negatives.len();
            report.mean_loss = self.train_epochs(&group_a, &group_b, self.cfg.epochs_per_step)?;
            report.updated = report.mean_loss.is_some();
        }

        let mut entries: Vec<BufferEntry> = batch
            .labeled
            .iter()
            .map(|s| BufferEntry {
                id: s.id,
                features: s.features.clone(),
                label: s.label,
                source: Source::GroundTruth,
                step_added: batch.step,
            })
            .collect();
        entries.extend(coreset.iter().map(|&(i, y)| BufferEntry {
            id: batch.unlabeled[i].id,
            features: feats[i].to_vec(),
            label: y,
            source: Source::Pseudo,
            step_added: batch.step,
        }));
        self.ledger.extend(report.coreset_ids.iter().copied());
        if !entries.is_empty() {
            report.evicted = self.buffer.insert(entries)?.evicted.len();
        }
        if self.audit {
            report.audit = Some(audit);
        }
        Ok(report)
    }
}
