//! Confusion matrices and imbalance-aware scores.
//!
//! Two-class problems are scored on the fault class (class 1) as the
//! positive class. With more classes, recall, precision and F1 are
//! macro-averaged one-vs-rest over classes with nonzero support. G-mean is
//! always the geometric mean of the per-class recalls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_count: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            counts: vec![vec![0; class_count]; class_count],
        }
    }

    pub fn from_rows(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("confusion matrix must be square".into()));
        }
        Ok(Self { class_count: n, counts })
    }

    /// Records one prediction. Labels beyond the current size grow the matrix.
    pub fn record(&mut self, truth: usize, predicted: usize) {
        let need = truth.max(predicted) + 1;
        if need > self.class_count {
            self.grow(need);
        }
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        let n = self.class_count.max(other.class_count);
        if n > self.class_count {
            self.grow(n);
        }
        for (i, row) in other.counts.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                self.counts[i][j] += v;
            }
        }
    }

    fn grow(&mut self, n: usize) {
        for row in &mut self.counts {
            row.resize(n, 0);
        }
        self.counts.resize(n, vec![0; n]);
        self.class_count = n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: u64,
    pub predicted: u64,
    /// `None` when the class has no support.
    pub recall: Option<f64>,
    /// `None` when the class was never predicted.
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub gmean: f64,
    pub evaluated: u64,
    pub per_class: Vec<ClassMetrics>,
    /// Classes without support, left out of every average.
    pub zero_support: Vec<usize>,
    /// Supported classes that were never predicted; their precision is
    /// left out of the precision average and their F1 counts as 0.
    pub precision_excluded: Vec<usize>,
}

fn class_metrics(cm: &ConfusionMatrix, class: usize) -> ClassMetrics {
    let tp = cm.counts[class][class] as f64;
    let support = cm.support(class);
    let predicted = cm.predicted(class);
    let recall = (support > 0).then(|| tp / support as f64);
    let precision = (predicted > 0).then(|| tp / predicted as f64);
    let f1 = recall.map(|r| match precision {
        Some(p) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    });
    ClassMetrics {
        class,
        support,
        predicted,
        recall,
        precision,
        f1,
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Scores one confusion matrix.
pub fn task_metrics(cm: &ConfusionMatrix) -> Result<TaskMetrics> {
    if cm.counts.len() != cm.class_count || cm.counts.iter().any(|r| r.len() != cm.class_count) {
        return Err(Error::InvalidArgument("confusion matrix must be square".into()));
    }
    let evaluated = cm.total();
    if evaluated == 0 {
        return Err(Error::UndefinedMetric("confusion matrix is all zeros".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.class_count).map(|c| class_metrics(cm, c)).collect();
    let supported: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let zero_support = per_class.iter().filter(|m| m.support == 0).map(|m| m.class).collect();
    let precision_excluded = supported
        .iter()
        .filter(|m| m.precision.is_none())
        .map(|m| m.class)
        .collect();

    let recalls: Vec<f64> = supported.iter().filter_map(|m| m.recall).collect();
    let gmean = recalls.iter().product::<f64>().powf(1.0 / recalls.len() as f64);

    let positive = per_class.get(1).filter(|m| cm.class_count == 2 && m.support > 0);
    let (recall, precision, f1) = match positive {
        Some(m) => (m.recall.unwrap_or(0.0), m.precision.unwrap_or(0.0), m.f1.unwrap_or(0.0)),
        None => {
            let precisions: Vec<f64> = supported.iter().filter_map(|m| m.precision).collect();
            let f1s: Vec<f64> = supported.iter().filter_map(|m| m.f1).collect();
            (mean(&recalls), mean(&precisions), mean(&f1s))
        }
    };
    Ok(TaskMetrics {
        recall,
        precision,
        f1,
        gmean,
        evaluated,
        per_class,
        zero_support,
        precision_excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub per_task_confusion: Vec<ConfusionMatrix>,
    pub per_task: Vec<TaskMetrics>,
    pub avg_end_recall: f64,
    pub avg_end_precision: f64,
    pub avg_end_f1: f64,
    pub avg_end_gmean: f64,
    /// Update-step wall time only.
    pub training_time_seconds: f64,
}

/// Averages per-task scores of the final model over tasks.
pub fn compute_metrics(confusions: &[ConfusionMatrix]) -> Result<RunMetrics> {
    if confusions.is_empty() {
        return Err(Error::UndefinedMetric("no tasks to score".into()));
    }
    let per_task = confusions.iter().map(task_metrics).collect::<Result<Vec<_>>>()?;
    let avg = |f: fn(&TaskMetrics) -> f64| mean(&per_task.iter().map(f).collect::<Vec<_>>());
    Ok(RunMetrics {
        avg_end_recall: avg(|t| t.recall),
        avg_end_precision: avg(|t| t.precision),
        avg_end_f1: avg(|t| t.f1),
        avg_end_gmean: avg(|t| t.gmean),
        per_task_confusion: confusions.to_vec(),
        per_task,
        training_time_seconds: 0.0,
    })
}
