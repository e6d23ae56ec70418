//! End-to-end runs, output files and parameter sweeps.
//!
//! Every output starts with a header carrying the schema version, the seed
//! and the full configuration, so any single file is enough to rerun it.
//!
//! Files written by [`write_run`]:
//!
//! * `metrics.json`: Avg-End scores, per-task confusion matrices and the
//!   prequential score. Contains no timings, so equal seeds give equal bytes.
//! * `steps.jsonl`: a header line, then one step report per line.
//! * `curve.csv`: per-step prequential scores and training counts.
//! * `timing.json`: update and prediction wall time.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, task_metrics, ConfusionMatrix, RunMetrics, TaskMetrics};
use crate::pipeline::{make_stream, Agent, AgentConfig, Clock, ScenarioConfig, StepReport, StepTiming, Stream};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    /// Keep per-step intermediate artifacts in the step reports.
    pub audit: bool,
}

impl ExperimentConfig {
    /// Reads a `.json` or `.toml` file; missing fields keep their defaults.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.agent.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub metrics: RunMetrics,
    /// Test-then-train predictions over the whole stream.
    pub prequential: ConfusionMatrix,
    /// The same predictions split by step.
    pub step_prequential: Vec<ConfusionMatrix>,
    pub reports: Vec<StepReport>,
    pub timings: Vec<StepTiming>,
    pub final_fingerprint: String,
}

impl RunResult {
    pub fn trained_unlabeled(&self) -> usize {
        self.reports.iter().map(|r| r.trained_unlabeled).sum()
    }

    pub fn trained_labeled(&self) -> usize {
        self.reports.iter().map(|r| r.trained_labeled).sum()
    }

    pub fn unlabeled_seen(&self) -> usize {
        self.reports.iter().map(|r| r.unlabeled).sum()
    }

    pub fn prequential_metrics(&self) -> Result<TaskMetrics> {
        task_metrics(&self.prequential)
    }
}

/// Initializes `agent` on the stream's pool, streams every batch and scores
/// the final model on each task.
pub fn run_stream(stream: &Stream, mut agent: Agent) -> Result<RunResult> {
    agent.initialize(&stream.init)?;
    let mut prequential = ConfusionMatrix::new(stream.class_count);
    let mut step_prequential = Vec::with_capacity(stream.batches.len());
    let mut reports = Vec::with_capacity(stream.batches.len());
    let mut timings = Vec::with_capacity(stream.batches.len());
    for batch in &stream.batches {
        let out = agent.run_step(batch.view())?;
        let mut cm = ConfusionMatrix::new(stream.class_count);
        for (&y, &p) in batch.hidden_labels().iter().zip(&out.predictions) {
            cm.record(y, p);
        }
        prequential.merge(&cm);
        step_prequential.push(cm);
        reports.push(out.report);
        timings.push(out.timing);
    }

    let mut confusions = Vec::new();
    for task in 0..stream.num_tasks {
        let mut cm = ConfusionMatrix::new(stream.class_count);
        for batch in stream.task_batches(task) {
            for (x, y) in batch.labeled_view() {
                cm.record(y, agent.classify(x)?);
            }
        }
        if cm.total() > 0 {
            confusions.push(cm);
        }
    }
    let mut metrics = compute_metrics(&confusions)?;
    metrics.training_time_seconds = agent.training_time().as_secs_f64();
    Ok(RunResult {
        metrics,
        prequential,
        step_prequential,
        reports,
        timings,
        final_fingerprint: agent.model().fingerprint(),
    })
}

/// Builds the stream and agent from `cfg` and runs them.
pub fn run_experiment(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<RunResult> {
    run_experiment_with_clock(dataset, cfg, None)
}

pub fn run_experiment_with_clock(dataset: &Dataset, cfg: &ExperimentConfig, clock: Option<Box<dyn Clock>>) -> Result<RunResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stream = make_stream(dataset, &cfg.scenario, &mut rng)?;
    let mut agent = Agent::new(stream.feature_dim, stream.class_count, cfg.agent.clone(), cfg.seed)?.with_audit(cfg.audit);
    if let Some(c) = clock {
        agent = agent.with_clock(c);
    }
    run_stream(&stream, agent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHeader {
    pub schema_version: u32,
    pub seed: u64,
    pub data: String,
    pub config: ExperimentConfig,
}

impl OutputHeader {
    pub fn new(data: &str, config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: config.seed,
            data: data.to_string(),
            config: config.clone(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_line(w: &mut impl Write, path: &Path, line: &str) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

/// The metrics document written to `metrics.json`.
pub fn metrics_document(header: &OutputHeader, result: &RunResult) -> Result<Value> {
    let mut metrics = serde_json::to_value(&result.metrics)?;
    if let Some(m) = metrics.as_object_mut() {
        m.remove("training_time_seconds");
    }
    Ok(json!({
        "header": header,
        "metrics": metrics,
        "prequential": result.prequential_metrics()?,
        "prequential_confusion": result.prequential,
        "totals": {
            "steps": result.reports.len(),
            "updates": result.reports.iter().filter(|r| r.updated).count(),
            "unlabeled_seen": result.unlabeled_seen(),
            "trained_labeled": result.trained_labeled(),
            "trained_unlabeled": result.trained_unlabeled(),
        },
        "final_fingerprint": result.final_fingerprint,
    }))
}

/// Writes the four run files into `dir`, creating it if needed.
pub fn write_run(dir: &Path, header: &OutputHeader, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("metrics.json");
    let mut w = create(&path)?;
    let doc = metrics_document(header, result)?;
    write_line(&mut w, &path, &serde_json::to_string_pretty(&doc)?)?;
    finish(w, &path)?;

    let path = dir.join("steps.jsonl");
    let mut w = create(&path)?;
    write_line(&mut w, &path, &serde_json::to_string(&json!({ "header": header }))?)?;
    for r in &result.reports {
        write_line(&mut w, &path, &serde_json::to_string(r)?)?;
    }
    finish(w, &path)?;

    let path = dir.join("curve.csv");
    let mut w = create(&path)?;
    write_line(&mut w, &path, &format!("# {}", serde_json::to_string(header)?))?;
    write_line(
        &mut w,
        &path,
        "step,task,condition_id,batch_accuracy,cumulative_recall,cumulative_f1,trained_unlabeled,coreset_size,updated",
    )?;
    let mut cumulative = ConfusionMatrix::new(result.prequential.class_count);
    for (r, cm) in result.reports.iter().zip(&result.step_prequential) {
        cumulative.merge(cm);
        let acc = if cm.total() > 0 {
            (0..cm.class_count).map(|c| cm.counts[c][c]).sum::<u64>() as f64 / cm.total() as f64
        } else {
            f64::NAN
        };
        let (rec, f1) = match task_metrics(&cumulative) {
            Ok(m) => (m.recall, m.f1),
            Err(_) => (f64::NAN, f64::NAN),
        };
        write_line(
            &mut w,
            &path,
            &format!(
                "{},{},{},{acc},{rec},{f1},{},{},{}",
                r.step,
                r.task,
                r.condition_id,
                r.trained_unlabeled,
                r.coreset_ids.len(),
                r.updated
            ),
        )?;
    }
    finish(w, &path)?;

    let path = dir.join("timing.json");
    let mut w = create(&path)?;
    let timing = json!({
        "header": header,
        "training_time_seconds": result.metrics.training_time_seconds,
        "prediction_time_seconds": result.timings.iter().map(|t| t.predict_seconds).sum::<f64>(),
        "steps": result.timings,
    });
    write_line(&mut w, &path, &serde_json::to_string_pretty(&timing)?)?;
    finish(w, &path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: Option<u64>,
    pub avg_end_recall: f64,
    pub avg_end_precision: f64,
    pub avg_end_f1: f64,
    pub avg_end_gmean: f64,
    pub training_time_seconds: f64,
    pub trained_unlabeled: f64,
}

impl RunSummary {
    pub fn of(label: impl Into<String>, seed: Option<u64>, r: &RunResult) -> Self {
        Self {
            label: label.into(),
            seed,
            avg_end_recall: r.metrics.avg_end_recall,
            avg_end_precision: r.metrics.avg_end_precision,
            avg_end_f1: r.metrics.avg_end_f1,
            avg_end_gmean: r.metrics.avg_end_gmean,
            training_time_seconds: r.metrics.training_time_seconds,
            trained_unlabeled: r.trained_unlabeled() as f64,
        }
    }

    fn values(&self) -> [f64; 6] {
        [
            self.avg_end_recall,
            self.avg_end_precision,
            self.avg_end_f1,
            self.avg_end_gmean,
            self.training_time_seconds,
            self.trained_unlabeled,
        ]
    }

    fn from_values(label: &str, v: [f64; 6]) -> Self {
        Self {
            label: label.into(),
            seed: None,
            avg_end_recall: v[0],
            avg_end_precision: v[1],
            avg_end_f1: v[2],
            avg_end_gmean: v[3],
            training_time_seconds: v[4],
            trained_unlabeled: v[5],
        }
    }
}

/// Mean and sample standard deviation (n − 1) rows over `runs`.
pub fn mean_std(runs: &[RunSummary]) -> (RunSummary, RunSummary) {
    let n = runs.len() as f64;
    let mut mean = [0.0; 6];
    for r in runs {
        mean.iter_mut().zip(r.values()).for_each(|(m, v)| *m += v / n);
    }
    let mut var = [0.0; 6];
    if runs.len() > 1 {
        for r in runs {
            var.iter_mut()
                .zip(r.values().iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / (n - 1.0));
        }
    }
    (
        RunSummary::from_values("mean", mean),
        RunSummary::from_values("std", var.map(f64::sqrt)),
    )
}

/// Writes one CSV row per summary, preceded by a `#` header comment.
pub fn write_summary_csv<W: Write>(mut out: W, header: &OutputHeader, rows: &[RunSummary]) -> Result<()> {
    let path = Path::new("<summary>");
    write_line(&mut out, path, &format!("# {}", serde_json::to_string(header)?))?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Validation(format!("csv write failed: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs seeds `cfg.seed .. cfg.seed + num_runs`.
pub fn run_many(dataset: &Dataset, cfg: &ExperimentConfig, num_runs: usize) -> Result<Vec<(ExperimentConfig, RunResult)>> {
    (0..num_runs as u64)
        .map(|r| {
            let c = ExperimentConfig {
                seed: cfg.seed + r,
                ..cfg.clone()
            };
            let res = run_experiment(dataset, &c)?;
            Ok((c, res))
        })
        .collect()
}

/// Returns a copy of `cfg` with the dotted field `path` set from `raw`.
/// Paths resolve from the top level first, then under `agent`, so
/// `rcs.coreset_ratio` and `agent.rcs.coreset_ratio` name the same field.
pub fn set_param(cfg: &ExperimentConfig, path: &str, raw: &str) -> Result<ExperimentConfig> {
    let mut doc = serde_json::to_value(cfg)?;
    let pointer = |p: &str| format!("/{}", p.replace('.', "/"));
    let target = [pointer(path), pointer(&format!("agent.{path}"))]
        .into_iter()
        .find(|p| doc.pointer(p).is_some())
        .ok_or_else(|| Error::Config(format!("unknown parameter '{path}'")))?;
    let slot = doc.pointer_mut(&target).expect("pointer checked above");
    let raw = raw.trim();
    let value = match slot {
        Value::Number(n) => {
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Config(format!("'{raw}' is not numeric, '{path}' needs a number")))?;
            if n.is_f64() {
                json!(v)
            } else if v >= 0.0 && v.fract() == 0.0 {
                json!(v as u64)
            } else {
                return Err(Error::Config(format!("'{path}' needs a non-negative integer, got '{raw}'")));
            }
        }
        Value::Bool(_) => Value::Bool(
            raw.parse()
                .map_err(|_| Error::Config(format!("'{path}' needs true or false, got '{raw}'")))?,
        ),
        Value::String(_) => Value::String(raw.to_string()),
        _ => serde_json::from_str(raw).map_err(|e| Error::Config(format!("'{path}': {e}")))?,
    };
    *slot = value;
    let out: ExperimentConfig =
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("'{path}' = '{raw}': {e}")))?;
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub config: ExperimentConfig,
    pub result: RunResult,
}

/// One run per value of `param`, all with the base seed.
pub fn sweep(dataset: &Dataset, base: &ExperimentConfig, param: &str, values: &[String]) -> Result<Vec<SweepPoint>> {
    let configs = values
        .iter()
        .map(|v| set_param(base, param, v))
        .collect::<Result<Vec<_>>>()?;
    values
        .iter()
        .zip(configs)
        .map(|(v, config)| {
            let result = run_experiment(dataset, &config)?;
            Ok(SweepPoint {
                value: v.clone(),
                config,
                result,
            })
        })
        .collect()
}

/// Plot-ready table: one row per swept value.
pub fn write_sweep_csv<W: Write>(out: W, header: &OutputHeader, param: &str, points: &[SweepPoint]) -> Result<()> {
    let rows: Vec<RunSummary> = points
        .iter()
        .map(|p| RunSummary::of(format!("{param}={}", p.value), Some(p.config.seed), &p.result))
        .collect();
    write_summary_csv(out, header, &rows)
}
