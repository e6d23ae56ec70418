//! Dataset ingestion and synthetic fixtures.
//!
//! CSV schema, one row per sample, no quoting:
//!
//! ```text
//! f_1,f_2,...,f_d,label[,condition]
//! ```
//!
//! `label` is an integer class id (0 = normal) and `condition` an optional
//! integer working-condition id. Missing values are rejected.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
    pub condition: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub class_count: usize,
    pub condition_count: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: PathBuf,
    #[serde(default)]
    pub has_header: bool,
    /// Whether the row carries a trailing condition column.
    #[serde(default)]
    pub has_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub feature_dim: usize,
    /// Normal class plus fault classes.
    pub class_count: usize,
    /// Expected rows per class; empty skips the count check.
    #[serde(default)]
    pub per_class_counts: Vec<usize>,
    #[serde(default = "one")]
    pub condition_count: usize,
    pub source_files: Vec<SourceFile>,
}

fn one() -> usize {
    1
}

impl DatasetManifest {
    /// Tennessee-Eastman layout: 52 features, 4320 normal rows and 21 fault
    /// classes of 800 rows each.
    pub fn tep(files: Vec<SourceFile>) -> Self {
        let mut per_class_counts = vec![4320];
        per_class_counts.extend(std::iter::repeat_n(800, 21));
        Self {
            name: "TEP".into(),
            feature_dim: 52,
            class_count: 22,
            per_class_counts,
            condition_count: 1,
            source_files: files,
        }
    }

    /// CARLA single-sensor layout: 10 features, 9 fault classes, 3 conditions.
    pub fn carla_single_sensor(files: Vec<SourceFile>) -> Self {
        Self {
            name: "CARLS_S".into(),
            feature_dim: 10,
            class_count: 10,
            per_class_counts: vec![89166, 2404, 1803, 2404, 2404, 2404, 1604, 2004, 1803, 2004],
            condition_count: 3,
            source_files: files,
        }
    }

    /// Reads a manifest from `.toml` or `.json`. Relative source paths are
    /// resolved against the manifest's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for f in &mut m.source_files {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.class_count < 2 {
            return Err(Error::Validation("manifest needs feature_dim > 0 and >= 2 classes".into()));
        }
        if !self.per_class_counts.is_empty() {
            if self.per_class_counts.len() != self.class_count {
                return Err(Error::Validation(format!(
                    "per_class_counts has {} entries for {} classes",
                    self.per_class_counts.len(),
                    self.class_count
                )));
            }
            if self.per_class_counts.contains(&0) {
                return Err(Error::Validation("per_class_counts must all be > 0".into()));
            }
        }
        if self.condition_count == 0 {
            return Err(Error::Validation("condition_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loads every source file of `manifest` and checks the class counts.
pub fn load_csv(manifest: &DatasetManifest) -> Result<Dataset> {
    manifest.validate()?;
    let mut samples = Vec::new();
    for src in &manifest.source_files {
        read_file(manifest, src, &mut samples)?;
    }
    if samples.is_empty() {
        return Err(Error::Validation(format!("dataset '{}' has no rows", manifest.name)));
    }
    let ds = Dataset {
        name: manifest.name.clone(),
        feature_dim: manifest.feature_dim,
        class_count: manifest.class_count,
        condition_count: manifest.condition_count,
        samples,
    };
    if !manifest.per_class_counts.is_empty() {
        let got = ds.class_counts();
        if got != manifest.per_class_counts {
            return Err(Error::Validation(format!(
                "class counts {:?} do not match manifest {:?}",
                got, manifest.per_class_counts
            )));
        }
    }
    Ok(ds)
}

fn read_file(manifest: &DatasetManifest, src: &SourceFile, out: &mut Vec<Sample>) -> Result<()> {
    let file = File::open(&src.path).map_err(|e| Error::io(&src.path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(src.has_header)
        .flexible(true)
        .from_reader(file);
    let d = manifest.feature_dim;
    let want = d + 1 + usize::from(src.has_condition);
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };
        if record.len() != want {
            return Err(bad(format!("expected {want} fields, found {}", record.len())));
        }
        let mut features = Vec::with_capacity(d);
        for (col, field) in record.iter().take(d).enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(bad(format!("missing value in column {}", col + 1)));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("column {}: '{field}' is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(bad(format!("column {}: non-finite value", col + 1)));
            }
            features.push(v);
        }
        let int_field = |idx: usize, what: &str, limit: usize| -> Result<usize> {
            let f = record[idx].trim();
            let v: usize = f.parse().map_err(|_| bad(format!("{what} '{f}' is not a non-negative integer")))?;
            if v >= limit {
                return Err(bad(format!("{what} {v} out of range (< {limit})")));
            }
            Ok(v)
        };
        let label = int_field(d, "label", manifest.class_count)?;
        let condition = if src.has_condition {
            int_field(d + 1, "condition", manifest.condition_count)?
        } else {
            0
        };
        out.push(Sample {
            id: out.len() as u64,
            features,
            label,
            condition,
        });
    }
    Ok(())
}

/// Writes `dataset` in the CSV schema above (no header, with a condition
/// column). Floats use shortest round-trip formatting.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut row = Vec::with_capacity(dataset.feature_dim + 2);
    for s in &dataset.samples {
        row.clear();
        row.extend(s.features.iter().map(|v| v.to_string()));
        row.push(s.label.to_string());
        row.push(s.condition.to_string());
        w.write_record(&row)
            .map_err(|e| Error::Validation(format!("csv write failed: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Per-feature z-scoring with statistics from a fixed fitting pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<P: AsRef<[f64]>>(pool: &[P]) -> Result<Self> {
        let Some(first) = pool.first() else {
            return Err(Error::InvalidArgument("cannot fit a standardizer on nothing".into()));
        };
        let d = first.as_ref().len();
        let n = pool.len() as f64;
        let mut mean = vec![0.0; d];
        for x in pool {
            mean.iter_mut().zip(x.as_ref()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in pool {
            var.iter_mut()
                .zip(x.as_ref().iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_count: usize,
    pub dim: usize,
    pub per_class_counts: Vec<usize>,
    /// Distance of fault class `k` from the origin, along axis `(k-1) mod dim`.
    pub separations: Vec<f64>,
}

impl SynthSpec {
    /// `class_count` classes in `dim` dimensions, every fault at `separation`.
    pub fn uniform(class_count: usize, dim: usize, per_class: usize, separation: f64) -> Self {
        Self {
            class_count,
            dim,
            per_class_counts: vec![per_class; class_count],
            separations: vec![separation; class_count.saturating_sub(1)],
        }
    }
}

/// Unit-variance Gaussian blobs. Class 0 sits at the origin. Samples are
/// grouped by class; shuffling is left to the stream generators.
pub fn synth_blobs<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Dataset> {
    if spec.class_count < 2 || spec.dim == 0 {
        return Err(Error::InvalidArgument("synth_blobs needs >= 2 classes and dim > 0".into()));
    }
    if spec.per_class_counts.len() != spec.class_count || spec.separations.len() + 1 != spec.class_count {
        return Err(Error::InvalidArgument(
            "synth_blobs needs one count per class and one separation per fault class".into(),
        ));
    }
    if spec.separations.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("separations must be >= 0".into()));
    }
    let mut samples = Vec::with_capacity(spec.per_class_counts.iter().sum());
    for (class, &count) in spec.per_class_counts.iter().enumerate() {
        let mut center = vec![0.0; spec.dim];
        if class > 0 {
            center[(class - 1) % spec.dim] = spec.separations[class - 1];
        }
        for _ in 0..count {
            let features = center.iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)).collect();
            samples.push(Sample {
                id: samples.len() as u64,
                features,
                label: class,
                condition: 0,
            });
        }
    }
    Ok(Dataset {
        name: format!("synth{}", spec.class_count),
        feature_dim: spec.dim,
        class_count: spec.class_count,
        condition_count: 1,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn manifest_for(path: PathBuf, d: usize, classes: usize, counts: Vec<usize>) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            feature_dim: d,
            class_count: classes,
            per_class_counts: counts,
            condition_count: 1,
            source_files: vec![SourceFile {
                path,
                has_header: false,
                has_condition: false,
            }],
        }
    }

    #[test]
    fn empty_file_is_validation_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let m = manifest_for(f.path().into(), 2, 2, vec![]);
        assert!(matches!(load_csv(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_row_names_its_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 1..=10 {
            if i == 7 {
                writeln!(f, "0.5,abc,1").unwrap();
            } else {
                writeln!(f, "0.5,{i}.0,{}", i % 2).unwrap();
            }
        }
        let m = manifest_for(f.path().into(), 2, 2, vec![]);
        match load_csv(&m) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_value_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1.0,2.0,0").unwrap();
        writeln!(f, "1.0,,1").unwrap();
        let m = manifest_for(f.path().into(), 2, 2, vec![]);
        assert!(matches!(load_csv(&m), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn count_mismatch_is_validation_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1.0,0").unwrap();
        writeln!(f, "2.0,1").unwrap();
        let m = manifest_for(f.path().into(), 1, 2, vec![1, 2]);
        assert!(matches!(load_csv(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn label_out_of_range() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1.0,5").unwrap();
        let m = manifest_for(f.path().into(), 1, 2, vec![]);
        assert!(matches!(load_csv(&m), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tep_layout_validates() {
        let mut spec = SynthSpec::uniform(22, 52, 800, 3.0);
        spec.per_class_counts[0] = 4320;
        let ds = synth_blobs(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, File::create(f.path()).unwrap()).unwrap();
        let m = DatasetManifest::tep(vec![SourceFile {
            path: f.path().into(),
            has_header: false,
            has_condition: true,
        }]);
        let loaded = load_csv(&m).unwrap();
        assert_eq!(loaded.len(), 4320 + 21 * 800);
        assert_eq!(loaded.len(), 21_120);
        assert_eq!(loaded.feature_dim, 52);
    }

    #[test]
    fn synth_class_frequencies_are_exact() {
        let spec = SynthSpec {
            class_count: 3,
            dim: 4,
            per_class_counts: vec![900, 90, 10],
            separations: vec![3.0, 3.0],
        };
        let ds = synth_blobs(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let n = ds.len() as f64;
        let freq: Vec<f64> = ds.class_counts().iter().map(|&c| c as f64 / n).collect();
        assert_eq!(freq, vec![0.9, 0.09, 0.01]);
    }

    #[test]
    fn standardizer_constant_column_is_passthrough_scale() {
        let pool = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&pool).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        let mut x = vec![4.0, 6.0];
        s.apply(&mut x);
        assert_eq!(x, vec![2.0, 1.0]);
    }
}
