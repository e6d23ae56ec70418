//! Sensitivity sweep over one config field, written as a plot-ready CSV.
//!
//! cargo run --release --example sensitivity_sweep -- [param] [v1,v2,...]
//!
//! Defaults to `rcs.coreset_ratio` over 0.5..0.9.

use oclfd::pipeline::AgentKind;
use oclfd::presets;
use oclfd::run::{sweep, write_sweep_csv, ExperimentConfig, OutputHeader};

fn main() -> oclfd::Result<()> {
    let mut args = std::env::args().skip(1);
    let param = args.next().unwrap_or_else(|| "rcs.coreset_ratio".into());
    let values: Vec<String> = args
        .next()
        .unwrap_or_else(|| "0.5,0.6,0.7,0.8,0.9".into())
        .split(',')
        .map(str::to_string)
        .collect();

    let data = presets::skewed_three_class(0)?;
    let base = ExperimentConfig {
        seed: 0,
        scenario: presets::skewed_scenario(),
        agent: presets::agent(AgentKind::Srtfd),
        audit: false,
    };
    let points = sweep(&data, &base, &param, &values)?;
    for p in &points {
        eprintln!(
            "{param}={:<6} f1 {:.4}  trained unlabeled {:>5}  update {:.3}s",
            p.value,
            p.result.metrics.avg_end_f1,
            p.result.trained_unlabeled(),
            p.result.metrics.training_time_seconds
        );
    }
    write_sweep_csv(std::io::stdout().lock(), &OutputHeader::new("skewed3", &base), &param, &points)
}
