use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use oclfd::pipeline::{AgentKind, ScenarioMode};
use oclfd::presets;
use oclfd::run::{
    mean_std, run_experiment, sweep, write_run, write_summary_csv, write_sweep_csv, ExperimentConfig, OutputHeader,
    RunSummary,
};
use oclfd::{Error, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClType {
    Nc,
    Vc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AgentArg {
    #[value(name = "SRTFD", alias = "srtfd")]
    Srtfd,
    #[value(name = "ER", alias = "er")]
    Er,
    #[value(name = "ER_all_pseudo")]
    ErAllPseudo,
    #[value(name = "labeled_only")]
    LabeledOnly,
}

/// Streaming fault diagnosis runs. Writes metrics.json, steps.jsonl,
/// curve.csv and timing.json into the output directory.
#[derive(Debug, Parser)]
#[command(name = "oclfd", version)]
struct Args {
    /// Dataset manifest (.toml/.json), `synthK` or `skewed3`.
    #[arg(long)]
    data: String,
    #[arg(long = "num_tasks")]
    num_tasks: Option<usize>,
    #[arg(long = "cl_type", value_enum)]
    cl_type: Option<ClType>,
    #[arg(long, value_enum)]
    agent: Option<AgentArg>,
    #[arg(long = "num_runs", default_value_t = 1)]
    num_runs: usize,
    /// Normal samples used for initialization.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config file (.toml or .json) replacing the built-in preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep KL matrices, candidate pools and confidences in steps.jsonl.
    #[arg(long)]
    audit: bool,
    /// Output directory; OCLFD_OUT takes precedence.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `param=v1,v2,...`: one run per value with the same seed.
    #[arg(long)]
    sweep: Option<String>,
}

fn build_config(args: &Args) -> Result<ExperimentConfig> {
    let kind = match args.agent {
        Some(AgentArg::Srtfd) => AgentKind::Srtfd,
        Some(AgentArg::Er) => AgentKind::Er,
        Some(AgentArg::ErAllPseudo) => AgentKind::ErAllPseudo,
        Some(AgentArg::LabeledOnly) => AgentKind::LabeledOnly,
        None => AgentKind::Srtfd,
    };
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig {
            agent: presets::agent(kind),
            ..ExperimentConfig::default()
        },
    };
    if args.agent.is_some() {
        cfg.agent.kind = kind;
    }
    if let Some(t) = args.num_tasks {
        cfg.scenario.num_tasks = t;
    }
    match args.cl_type {
        Some(ClType::Nc) => cfg.scenario.mode = ScenarioMode::ClassIncremental,
        Some(ClType::Vc) => cfg.scenario.mode = ScenarioMode::VariableCondition,
        None => {}
    }
    if let Some(n) = args.n {
        cfg.scenario.init_normal_count = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.audit |= args.audit;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn run(args: Args) -> Result<()> {
    let out = std::env::var_os("OCLFD_OUT").map(PathBuf::from).unwrap_or(args.out.clone());
    let cfg = build_config(&args)?;
    let init = cfg.scenario.init_normal_count;
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;

    if let Some(spec) = &args.sweep {
        let (param, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--sweep expects param=v1,v2,..., got '{spec}'")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        let data = presets::dataset(&args.data, init, cfg.seed)?;
        let points = sweep(&data, &cfg, param, &values)?;
        for (i, p) in points.iter().enumerate() {
            let header = OutputHeader::new(&args.data, &p.config);
            write_run(&out.join(format!("sweep_{i}")), &header, &p.result)?;
        }
        let header = OutputHeader::new(&args.data, &cfg);
        write_sweep_csv(create(&out.join("sweep.csv"))?, &header, param, &points)?;
        for p in &points {
            eprintln!("{param}={}: avg-end f1 {:.4}", p.value, p.result.metrics.avg_end_f1);
        }
        return Ok(());
    }

    if args.num_runs == 0 {
        return Err(Error::Config("--num_runs must be >= 1".into()));
    }
    let mut rows = Vec::new();
    for r in 0..args.num_runs as u64 {
        let run_cfg = ExperimentConfig {
            seed: cfg.seed + r,
            ..cfg.clone()
        };
        let data = presets::dataset(&args.data, init, run_cfg.seed)?;
        let result = run_experiment(&data, &run_cfg)?;
        let header = OutputHeader::new(&args.data, &run_cfg);
        let dir = if args.num_runs == 1 {
            out.clone()
        } else {
            out.join(format!("run_{r}"))
        };
        write_run(&dir, &header, &result)?;
        eprintln!(
            "seed {}: avg-end recall {:.4} precision {:.4} f1 {:.4} gmean {:.4}, training {:.3}s",
            run_cfg.seed,
            result.metrics.avg_end_recall,
            result.metrics.avg_end_precision,
            result.metrics.avg_end_f1,
            result.metrics.avg_end_gmean,
            result.metrics.training_time_seconds
        );
        rows.push(RunSummary::of(format!("run_{r}"), Some(run_cfg.seed), &result));
    }
    if args.num_runs > 1 {
        let (mean, std) = mean_std(&rows);
        rows.push(mean);
        rows.push(std);
        let header = OutputHeader::new(&args.data, &cfg);
        write_summary_csv(create(&out.join("summary.csv"))?, &header, &rows)?;
        write_json(
            &out.join("summary.json"),
            &serde_json::json!({ "header": header, "rows": rows }),
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oclfd: {e}");
            ExitCode::FAILURE
        }
    }
}
