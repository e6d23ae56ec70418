//! Loading a dataset from CSV through a manifest. Writes a synthetic
//! dataset to a temp directory in the CSV schema (features, label,
//! condition), describes it in a TOML manifest, loads it back and runs it.
//!
//! cargo run --release --example csv_dataset

use std::fs;

use oclfd::data::{load_csv, write_csv, DatasetManifest};
use oclfd::pipeline::{AgentKind, ScenarioConfig};
use oclfd::presets;
use oclfd::run::{run_experiment, ExperimentConfig};

fn main() -> oclfd::Result<()> {
    let dir = std::env::temp_dir().join("oclfd-csv-example");
    fs::create_dir_all(&dir).map_err(|e| oclfd::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let data = presets::synth(4, 500, 1)?;
    let csv_path = dir.join("rows.csv");
    write_csv(&data, fs::File::create(&csv_path).expect("create csv"))?;

    let manifest = format!(
        "name = \"demo\"\nfeature_dim = {}\nclass_count = {}\nper_class_counts = {:?}\n\n\
         [[source_files]]\npath = \"rows.csv\"\nhas_condition = true\n",
        data.feature_dim,
        data.class_count,
        data.class_counts()
    );
    let manifest_path = dir.join("manifest.toml");
    fs::write(&manifest_path, &manifest).expect("write manifest");
    println!("{}", manifest);

    let loaded = load_csv(&DatasetManifest::from_path(&manifest_path)?)?;
    assert_eq!(loaded.samples.len(), data.samples.len());
    println!("loaded {} rows, class counts {:?}", loaded.len(), loaded.class_counts());

    let cfg = ExperimentConfig {
        scenario: ScenarioConfig {
            num_tasks: 2,
            init_normal_count: 500,
            ..ScenarioConfig::default()
        },
        agent: presets::agent(AgentKind::Srtfd),
        ..ExperimentConfig::default()
    };
    let r = run_experiment(&loaded, &cfg)?;
    println!("avg-end f1 {:.3}", r.metrics.avg_end_f1);
    println!("same run from the CLI:\n  oclfd --data {} --num_tasks 2 --N 500", manifest_path.display());
    Ok(())
}
