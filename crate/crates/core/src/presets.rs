//! Ready-made synthetic datasets and agent settings sized for a laptop.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{load_csv, synth_blobs, Dataset, DatasetManifest, SynthSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pipeline::{AgentConfig, AgentKind, ScenarioConfig};

/// Normal rows held back for initialization in the skewed fixture.
pub const SKEWED_INIT: usize = 1000;

/// Three classes whose stream part (after the initialization pool) has
/// priors 0.90 / 0.09 / 0.01 over 4000 samples, in 8 dimensions.
pub fn skewed_three_class(seed: u64) -> Result<Dataset> {
    let spec = SynthSpec {
        class_count: 3,
        dim: 8,
        per_class_counts: vec![SKEWED_INIT + 3600, 360, 40],
        separations: vec![3.0, 3.0],
    };
    let mut ds = synth_blobs(&spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    ds.name = "skewed3".into();
    Ok(ds)
}

/// 20 batches of 200 with 5% labels, all classes present from the start.
pub fn skewed_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_tasks: 1,
        batch_size: 200,
        labeled_fraction: 0.05,
        init_normal_count: SKEWED_INIT,
        ..ScenarioConfig::default()
    }
}

/// Agent settings used with the synthetic presets.
pub fn agent(kind: AgentKind) -> AgentConfig {
    AgentConfig {
        kind,
        model: ModelConfig {
            learning_rate: 0.1,
            ..ModelConfig::default()
        },
        replay_size: 100,
        epochs_per_step: 3,
        ..AgentConfig::default()
    }
}

/// `classes` well-separated blobs with `init` extra normals for
/// initialization, 3000 streamed normals and 300 rows per fault class.
pub fn synth(classes: usize, init: usize, seed: u64) -> Result<Dataset> {
    let mut spec = SynthSpec::uniform(classes, 8, 300, 4.0);
    spec.per_class_counts[0] = init + 3000;
    synth_blobs(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Resolves a data argument: `synthK` (K classes), `skewed3`, or the path of
/// a dataset manifest. `init` sizes the extra normal rows of synthetic data.
pub fn dataset(spec: &str, init: usize, seed: u64) -> Result<Dataset> {
    if spec == "skewed3" {
        return skewed_three_class(seed);
    }
    if let Some(k) = spec.strip_prefix("synth") {
        if let Ok(classes) = k.parse::<usize>() {
            if classes < 2 {
                return Err(Error::Config(format!("'{spec}': need at least 2 classes")));
            }
            let mut ds = synth(classes, init, seed)?;
            ds.name = spec.to_string();
            return Ok(ds);
        }
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Config(format!(
            "'{spec}' is neither synthK, skewed3 nor an existing manifest file"
        )));
    }
    load_csv(&DatasetManifest::from_path(path)?)
}
