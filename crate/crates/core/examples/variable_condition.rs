//! Variable-condition stream: every class is present throughout while the
//! sensor noise level steps up at fixed points. Each noise segment is its
//! own condition id.
//!
//! cargo run --release --example variable_condition

use oclfd::pipeline::{AgentKind, NoiseSegment, ScenarioConfig, ScenarioMode};
use oclfd::presets;
use oclfd::run::{run_experiment, ExperimentConfig};

fn main() -> oclfd::Result<()> {
    let data = presets::synth(4, 1000, 2)?;
    let segment = |start_step, end_step, sigma| NoiseSegment {
        start_step,
        end_step,
        sigma,
    };
    for kind in [AgentKind::Srtfd, AgentKind::Er] {
        let cfg = ExperimentConfig {
            seed: 2,
            scenario: ScenarioConfig {
                mode: ScenarioMode::VariableCondition,
                num_tasks: 3,
                noise_schedule: vec![segment(0, 13, 0.0), segment(13, 26, 0.5), segment(26, u64::MAX, 1.0)],
                ..ScenarioConfig::default()
            },
            agent: presets::agent(kind),
            audit: false,
        };
        let r = run_experiment(&data, &cfg)?;
        println!("{kind:?}");
        let mut last = None;
        for s in &r.reports {
            if last != Some(s.condition_id) {
                println!("  condition {} starts at step {}", s.condition_id, s.step);
                last = Some(s.condition_id);
            }
        }
        for (t, m) in r.metrics.per_task.iter().enumerate() {
            println!("  task {t}: f1 {:.3} gmean {:.3}", m.f1, m.gmean);
        }
        println!("  avg-end f1 {:.3}", r.metrics.avg_end_f1);
    }
    Ok(())
}
