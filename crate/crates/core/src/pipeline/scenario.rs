//! Stream construction for the class-incremental and variable-condition
//! scenarios.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledSample {
    pub id: u64,
    pub features: Vec<f64>,
}

/// Everything the agent may see of one arriving batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBatch {
    pub step: u64,
    pub task: usize,
    pub condition_id: usize,
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<UnlabeledSample>,
}

/// One arriving batch together with the labels of its unlabeled part, which
/// only the evaluator reads.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    view: AgentBatch,
    hidden_labels: Vec<usize>,
}

impl StreamBatch {
    pub fn new(view: AgentBatch, hidden_labels: Vec<usize>) -> Result<Self> {
        if hidden_labels.len() != view.unlabeled.len() {
            return Err(Error::shape(view.unlabeled.len(), hidden_labels.len()));
        }
        Ok(Self { view, hidden_labels })
    }

    pub fn view(&self) -> &AgentBatch {
        &self.view
    }

    /// True labels aligned with `view().unlabeled`.
    pub fn hidden_labels(&self) -> &[usize] {
        &self.hidden_labels
    }

    pub fn len(&self) -> usize {
        self.view.labeled.len() + self.view.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All samples with their true labels, labeled part first.
    pub fn labeled_view(&self) -> impl Iterator<Item = (&[f64], usize)> {
        let l = self.view.labeled.iter().map(|s| (s.features.as_slice(), s.label));
        let u = self
            .view
            .unlabeled
            .iter()
            .zip(&self.hidden_labels)
            .map(|(s, &y)| (s.features.as_slice(), y));
        l.chain(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    /// Fault classes appear for the first time in successive tasks.
    #[default]
    #[serde(alias = "nc")]
    ClassIncremental,
    /// The input distribution shifts over the stream.
    #[serde(alias = "vc")]
    VariableCondition,
}

/// Steps `start_step..end_step` receive additive noise of std `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSegment {
    pub start_step: u64,
    pub end_step: u64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub mode: ScenarioMode,
    pub num_tasks: usize,
    pub labeled_fraction: f64,
    pub batch_size: usize,
    /// Normal samples held out to pre-train the model and fit standardization.
    pub init_normal_count: usize,
    pub standardize: bool,
    /// Variable-condition only. Segment `i` stamps condition id `i`.
    pub noise_schedule: Vec<NoiseSegment>,
    /// With an empty schedule on single-condition data, task `k` gets noise
    /// std `k * noise_step`.
    pub noise_step: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: ScenarioMode::ClassIncremental,
            num_tasks: 1,
            labeled_fraction: 0.05,
            batch_size: 100,
            init_normal_count: 1000,
            standardize: true,
            noise_schedule: Vec::new(),
            noise_step: 0.1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::Config("scenario.num_tasks must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("scenario.batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::Config("scenario.labeled_fraction must lie in [0, 1]".into()));
        }
        let mut last_end = 0;
        for seg in &self.noise_schedule {
            if seg.end_step <= seg.start_step || seg.start_step < last_end || !(seg.sigma >= 0.0) {
                return Err(Error::Config(
                    "scenario.noise_schedule segments must be ordered, non-empty, disjoint with sigma >= 0".into(),
                ));
            }
            last_end = seg.end_step;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub init: Vec<LabeledSample>,
    pub batches: Vec<StreamBatch>,
    pub feature_dim: usize,
    pub class_count: usize,
    pub num_tasks: usize,
    pub standardizer: Option<Standardizer>,
}

impl Stream {
    /// Batches belonging to task `k`.
    pub fn task_batches(&self, task: usize) -> impl Iterator<Item = &StreamBatch> {
        self.batches.iter().filter(move |b| b.view().task == task)
    }
}

struct Prepared {
    init: Vec<LabeledSample>,
    rest: Vec<Sample>,
    standardizer: Option<Standardizer>,
}

/// Draws the initialization pool and standardizes everything with
/// statistics of that pool alone.
fn prepare<R: Rng + ?Sized>(dataset: &Dataset, cfg: &ScenarioConfig, rng: &mut R) -> Result<Prepared> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot build a stream from an empty dataset".into()));
    }
    let mut normals: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.samples[i].label == 0).collect();
    if normals.len() < cfg.init_normal_count {
        return Err(Error::InvalidArgument(format!(
            "need {} normal samples for initialization, dataset has {}",
            cfg.init_normal_count,
            normals.len()
        )));
    }
    normals.shuffle(rng);
    let mut in_init = vec![false; dataset.len()];
    normals[..cfg.init_normal_count].iter().for_each(|&i| in_init[i] = true);

    let init_rows: Vec<&Sample> = normals[..cfg.init_normal_count]
        .iter()
        .map(|&i| &dataset.samples[i])
        .collect();
    let standardizer = if cfg.standardize && !init_rows.is_empty() {
        let feats: Vec<&[f64]> = init_rows.iter().map(|s| s.features.as_slice()).collect();
        Some(Standardizer::fit(&feats)?)
    } else {
        None
    };
    let scale = |mut x: Vec<f64>| {
        if let Some(s) = &standardizer {
            s.apply(&mut x);
        }
        x
    };
    let init = init_rows
        .iter()
        .map(|s| LabeledSample {
            id: s.id,
            features: scale(s.features.clone()),
            label: s.label,
        })
        .collect();
    let rest = dataset
        .samples
        .iter()
        .zip(&in_init)
        .filter(|(_, used)| !**used)
        .map(|(s, _)| Sample {
            features: scale(s.features.clone()),
            ..s.clone()
        })
        .collect();
    Ok(Prepared {
        init,
        rest,
        standardizer,
    })
}

fn labeled_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

fn make_batch(step: u64, task: usize, condition_id: usize, samples: Vec<Sample>, fraction: f64) -> Result<StreamBatch> {
    let n_lab = labeled_count(fraction, samples.len());
    let mut labeled = Vec::with_capacity(n_lab);
    let mut unlabeled = Vec::with_capacity(samples.len() - n_lab);
    let mut hidden = Vec::with_capacity(samples.len() - n_lab);
    for (i, s) in samples.into_iter().enumerate() {
        if i < n_lab {
            labeled.push(LabeledSample {
                id: s.id,
                features: s.features,
                label: s.label,
            });
        } else {
            hidden.push(s.label);
            unlabeled.push(UnlabeledSample {
                id: s.id,
                features: s.features,
            });
        }
    }
    StreamBatch::new(
        AgentBatch {
            step,
            task,
            condition_id,
            labeled,
            unlabeled,
        },
        hidden,
    )
}

/// Task that first shows fault class `class` (1-based among `class_count`).
pub fn task_of_class(class: usize, num_tasks: usize, class_count: usize) -> usize {
    if class == 0 {
        0
    } else {
        (class * num_tasks / class_count).min(num_tasks - 1)
    }
}

/// Class-incremental stream: normals split evenly over tasks, fault class
/// `k` arriving in task `⌊k·T/c⌋`. With `T = c` class `k` lands in task `k`;
/// with `T = 1` every class is present from the start.
pub fn make_class_incremental<R: Rng + ?Sized>(dataset: &Dataset, cfg: &ScenarioConfig, rng: &mut R) -> Result<Stream> {
    let Prepared {
        init,
        rest,
        standardizer,
    } = prepare(dataset, cfg, rng)?;
    let t = cfg.num_tasks;
    let mut tasks: Vec<Vec<Sample>> = vec![Vec::new(); t];
    let (mut normals, faults): (Vec<Sample>, Vec<Sample>) = rest.into_iter().partition(|s| s.label == 0);
    normals.shuffle(rng);
    let n = normals.len();
    for (i, s) in normals.into_iter().enumerate() {
        tasks[i * t / n.max(1)].push(s);
    }
    for s in faults {
        tasks[task_of_class(s.label, t, dataset.class_count)].push(s);
    }
    let mut batches = Vec::new();
    for (task, mut items) in tasks.into_iter().enumerate() {
        items.shuffle(rng);
        while !items.is_empty() {
            let tail = items.split_off(cfg.batch_size.min(items.len()));
            let chunk = std::mem::replace(&mut items, tail);
            batches.push(make_batch(batches.len() as u64, task, 0, chunk, cfg.labeled_fraction)?);
        }
    }
    Ok(Stream {
        init,
        batches,
        feature_dim: dataset.feature_dim,
        class_count: dataset.class_count,
        num_tasks: t,
        standardizer,
    })
}

/// Variable-condition stream: all classes throughout, with additive
/// Gaussian noise following the schedule. Multi-condition data is ordered by
/// condition so batches move from one condition partition to the next.
pub fn make_variable_condition<R: Rng + ?Sized>(dataset: &Dataset, cfg: &ScenarioConfig, rng: &mut R) -> Result<Stream> {
    let Prepared {
        init,
        mut rest,
        standardizer,
    } = prepare(dataset, cfg, rng)?;
    rest.shuffle(rng);
    if dataset.condition_count > 1 {
        rest.sort_by_key(|s| s.condition);
    }
    let total_batches = rest.len().div_ceil(cfg.batch_size);
    let t = cfg.num_tasks;
    let task_of = |b: usize| (b * t / total_batches.max(1)).min(t - 1);

    let schedule: Vec<NoiseSegment> = if cfg.noise_schedule.is_empty() && dataset.condition_count == 1 {
        // One segment per task, noise growing with the task index.
        (0..t)
            .filter_map(|k| {
                let start = (0..total_batches).find(|&b| task_of(b) == k)?;
                let end = (0..total_batches).rev().find(|&b| task_of(b) == k)? + 1;
                Some(NoiseSegment {
                    start_step: start as u64,
                    end_step: end as u64,
                    sigma: k as f64 * cfg.noise_step,
                })
            })
            .collect()
    } else {
        cfg.noise_schedule.clone()
    };

    let mut batches = Vec::with_capacity(total_batches);
    let mut items = rest;
    let mut step = 0u64;
    while !items.is_empty() {
        let tail = items.split_off(cfg.batch_size.min(items.len()));
        let mut chunk = std::mem::replace(&mut items, tail);
        let segment = schedule.iter().position(|s| (s.start_step..s.end_step).contains(&step));
        let condition_id = match segment {
            Some(i) => i,
            None if schedule.is_empty() => majority_condition(&chunk),
            None => 0,
        };
        if let Some(i) = segment {
            let sigma = schedule[i].sigma;
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for s in &mut chunk {
                    s.features.iter_mut().for_each(|v| *v += noise.sample(rng));
                }
            }
        }
        batches.push(make_batch(step, task_of(step as usize), condition_id, chunk, cfg.labeled_fraction)?);
        step += 1;
    }
    Ok(Stream {
        init,
        batches,
        feature_dim: dataset.feature_dim,
        class_count: dataset.class_count,
        num_tasks: t,
        standardizer,
    })
}

fn majority_condition(samples: &[Sample]) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for s in samples {
        *counts.entry(s.condition).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(c, n)| (n, std::cmp::Reverse(c)))
        .map(|(c, _)| c)
        .unwrap_or(0)
}

/// Builds the stream for `cfg.mode`.
pub fn make_stream<R: Rng + ?Sized>(dataset: &Dataset, cfg: &ScenarioConfig, rng: &mut R) -> Result<Stream> {
    match cfg.mode {
        ScenarioMode::ClassIncremental => make_class_incremental(dataset, cfg, rng),
        ScenarioMode::VariableCondition => make_variable_condition(dataset, cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, SynthSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blobs(classes: usize, per_class: usize) -> Dataset {
        let mut spec = SynthSpec::uniform(classes, 4, per_class, 4.0);
        spec.per_class_counts[0] += 100;
        synth_blobs(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    fn cfg(tasks: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_tasks: tasks,
            batch_size: 20,
            init_normal_count: 100,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn one_task_has_every_class_in_first_batches() {
        let ds = blobs(4, 60);
        let s = make_class_incremental(&ds, &cfg(1), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut seen = [false; 4];
        for b in s.batches.iter().take(6) {
            b.labeled_view().for_each(|(_, y)| seen[y] = true);
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn class_k_first_appears_in_task_k() {
        let ds = blobs(4, 60);
        let s = make_class_incremental(&ds, &cfg(4), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for class in 1..4 {
            let first = s
                .batches
                .iter()
                .find(|b| b.labeled_view().any(|(_, y)| y == class))
                .unwrap();
            assert_eq!(first.view().task, class);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = Dataset {
            name: "e".into(),
            feature_dim: 2,
            class_count: 2,
            condition_count: 1,
            samples: vec![],
        };
        let r = make_class_incremental(&ds, &cfg(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn labeled_fraction_per_batch() {
        let ds = blobs(3, 60);
        let s = make_class_incremental(&ds, &cfg(1), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for b in &s.batches {
            if b.len() == 20 {
                assert_eq!(b.view().labeled.len(), 1);
            }
        }
        let total: usize = s.batches.iter().map(StreamBatch::len).sum();
        assert_eq!(total + s.init.len(), ds.len());
    }

    #[test]
    fn zero_sigma_matches_stationary_order() {
        let ds = blobs(3, 60);
        let mut c = cfg(2);
        c.mode = ScenarioMode::VariableCondition;
        c.noise_schedule = vec![NoiseSegment {
            start_step: 0,
            end_step: 1000,
            sigma: 0.0,
        }];
        let a = make_variable_condition(&ds, &c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        c.noise_step = 0.0;
        c.noise_schedule.clear();
        let b = make_variable_condition(&ds, &c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let fa: Vec<_> = a.batches.iter().map(|b| b.view().unlabeled.clone()).collect();
        let fb: Vec<_> = b.batches.iter().map(|b| b.view().unlabeled.clone()).collect();
        assert_eq!(fa, fb);
    }

    #[test]
    fn condition_changes_at_boundary() {
        let ds = blobs(3, 200);
        let mut c = cfg(2);
        c.mode = ScenarioMode::VariableCondition;
        c.noise_schedule = vec![
            NoiseSegment {
                start_step: 0,
                end_step: 10,
                sigma: 0.0,
            },
            NoiseSegment {
                start_step: 10,
                end_step: 40,
                sigma: 0.1,
            },
        ];
        let s = make_variable_condition(&ds, &c, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        for b in &s.batches {
            let v = b.view();
            assert_eq!(v.condition_id, usize::from(v.step >= 10), "step {}", v.step);
        }
    }
}
