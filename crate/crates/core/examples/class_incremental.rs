//! Class-incremental stream: fault classes arrive task by task. Prints the
//! step curve and the final model's per-task scores.
//!
//! cargo run --release --example class_incremental -- [classes] [tasks] [seed]

use oclfd::pipeline::{AgentKind, ScenarioConfig, ScenarioMode};
use oclfd::presets;
use oclfd::run::{run_experiment, ExperimentConfig};

fn main() -> oclfd::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let classes = args.first().copied().unwrap_or(6);
    let tasks = args.get(1).copied().unwrap_or(3);
    let seed = args.get(2).copied().unwrap_or(0) as u64;

    let data = presets::synth(classes, 1000, seed)?;
    let cfg = ExperimentConfig {
        seed,
        scenario: ScenarioConfig {
            mode: ScenarioMode::ClassIncremental,
            num_tasks: tasks,
            ..ScenarioConfig::default()
        },
        agent: presets::agent(AgentKind::Srtfd),
        audit: false,
    };
    let r = run_experiment(&data, &cfg)?;

    println!("{:>5}{:>5}{:>9}{:>10}{:>9}{:>9}", "step", "task", "labeled", "pseudo+", "coreset", "dropped");
    for s in &r.reports {
        println!(
            "{:>5}{:>5}{:>9}{:>10}{:>9}{:>9}",
            s.step,
            s.task,
            s.labeled,
            s.accepted_positive,
            s.coreset_ids.len(),
            s.clusters_dropped
        );
    }
    println!();
    for (t, m) in r.metrics.per_task.iter().enumerate() {
        println!("task {t}: recall {:.3} precision {:.3} f1 {:.3} gmean {:.3}", m.recall, m.precision, m.f1, m.gmean);
    }
    let m = &r.metrics;
    println!(
        "avg-end: recall {:.3} precision {:.3} f1 {:.3} gmean {:.3}; update time {:.3}s",
        m.avg_end_recall, m.avg_end_precision, m.avg_end_f1, m.avg_end_gmean, m.training_time_seconds
    );
    Ok(())
}
