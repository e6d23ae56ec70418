//! Runs every agent variant on the skewed three-class stream and prints the
//! final macro scores, trained-sample counts and update time.
//!
//! cargo run --release --example compare_agents -- [seeds] [param=value ...]
//!
//! Overrides use dotted config paths, e.g. `cupl.tau_p=0.9`.

use oclfd::pipeline::AgentKind;
use oclfd::presets;
use oclfd::run::{run_experiment, set_param, ExperimentConfig};

fn main() -> oclfd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let overrides: Vec<(&str, &str)> = args.iter().filter_map(|a| a.split_once('=')).collect();
    let kinds = [AgentKind::Srtfd, AgentKind::Er, AgentKind::ErAllPseudo, AgentKind::LabeledOnly];
    println!("{:<14}{:>8}{:>8}{:>8}{:>8}{:>10}{:>10}", "agent", "f1", "recall", "prec", "gmean", "unlab", "time_ms");
    for kind in kinds {
        let mut acc = [0.0; 6];
        for seed in 0..seeds {
            let data = presets::skewed_three_class(seed)?;
            let mut cfg = ExperimentConfig {
                seed,
                scenario: presets::skewed_scenario(),
                agent: presets::agent(kind),
                audit: false,
            };
            for (k, v) in &overrides {
                cfg = set_param(&cfg, k, v)?;
            }
            let r = run_experiment(&data, &cfg)?;
            let m = &r.metrics;
            let row = [
                m.avg_end_f1,
                m.avg_end_recall,
                m.avg_end_precision,
                m.avg_end_gmean,
                r.trained_unlabeled() as f64,
                m.training_time_seconds * 1e3,
            ];
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v / seeds as f64);
        }
        println!(
            "{:<14}{:>8.4}{:>8.4}{:>8.4}{:>8.4}{:>10.1}{:>10.1}",
            format!("{kind:?}"),
            acc[0],
            acc[1],
            acc[2],
            acc[3],
            acc[4],
            acc[5]
        );
    }
    Ok(())
}
