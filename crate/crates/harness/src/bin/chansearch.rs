use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chansearch::experiment::{load_spec, read_records, record_line};
use chansearch::{aggregate, load_scenario, report, run_experiment, save_scenario, ExperimentSpec, RunOptions, Suite};
use chansearch_core::scenario::{generate_scenario, ChannelParams};
use chansearch_core::sim::run_mission;
use chansearch_core::{ChannelShape, MissionConfig, PlannerKind};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chansearch", version, about = "Multi-vehicle channel search simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Channel,
    Extended,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scenario files.
    Gen {
        /// Write a whole suite.
        #[arg(long, value_enum, conflicts_with = "shape")]
        suite: Option<SuiteArg>,
        /// Write one scenario of this shape.
        #[arg(long)]
        shape: Option<ChannelShape>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a single mission and print its record.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        planner: PlannerKind,
        #[arg(long, default_value_t = 1)]
        vehicles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        depth_threshold_ft: Option<f64>,
        #[arg(long)]
        timeout_s: Option<f64>,
        /// Mission config JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write `record.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment spec into `<out>/results.jsonl` and report on it.
    Bench {
        /// Experiment spec JSON. Without it, the standard matrix on the
        /// extended suite is run.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        depth_threshold_ft: Option<f64>,
        #[arg(long)]
        timeout_s: Option<f64>,
        /// Mission config JSON replacing the spec's.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize a results file into CSV and JSON tables.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<MissionConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn gen(suite: Option<SuiteArg>, shape: Option<ChannelShape>, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let scenarios = match (suite, shape) {
        (_, Some(shape)) => vec![generate_scenario(&ChannelParams::with_shape(shape, seed))?],
        (Some(SuiteArg::Extended), None) => Suite::Extended.scenarios(seed),
        (Some(SuiteArg::Channel), None) | (None, None) => Suite::Channel.scenarios(seed),
    };
    for s in &scenarios {
        let path = out.join(format!("{}.json", s.name));
        save_scenario(s, &path)?;
        out_line(&path.display())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    scenario: &Path,
    planner: PlannerKind,
    vehicles: usize,
    seed: u64,
    depth: Option<f64>,
    timeout: Option<f64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let s = load_scenario(scenario)?;
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => MissionConfig::default(),
    };
    if let Some(d) = depth {
        cfg.pbacs.depth_threshold_ft = d;
    }
    if let Some(t) = timeout {
        cfg.sim.timeout_s = t;
    }
    let r = run_mission(&s, planner, vehicles, seed, &cfg);
    let line = record_line(&r);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("record.json");
        fs::write(&path, &line).with_context(|| format!("writing {}", path.display()))?;
    }
    out_line(&line)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    spec_path: Option<&Path>,
    seed: Option<u64>,
    depth: Option<f64>,
    timeout: Option<f64>,
    config: Option<&Path>,
    out: &Path,
    jobs: Option<usize>,
) -> Result<()> {
    let (mut spec, base_dir) = match spec_path {
        Some(p) => (load_spec(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (ExperimentSpec::standard_matrix(Suite::Extended, 0), PathBuf::new()),
    };
    if let Some(s) = seed {
        spec.base_seed = s;
    }
    if let Some(d) = depth {
        spec.depth_threshold_ft = d;
    }
    if timeout.is_some() {
        spec.timeout_s = timeout;
    }
    if let Some(p) = config {
        spec.config = load_config(p)?;
    }
    let scenarios = spec.load_scenarios(&base_dir)?;
    let results = out.join("results.jsonl");
    let records = run_experiment(
        &spec,
        &scenarios,
        &RunOptions {
            results: Some(results.clone()),
            jobs,
        },
    )?;
    let summary = aggregate(&records);
    report(&summary, out)?;
    eprintln!(
        "{} records ({} errors) in {}",
        records.len(),
        summary.errors,
        results.display()
    );
    Ok(())
}

fn report_cmd(results: &Path, out: &Path) -> Result<()> {
    let records = read_records(results)?;
    let summary = aggregate(&records);
    for p in report(&summary, out)? {
        out_line(&p.display())?;
    }
    Ok(())
}

/// Print to stdout; a closed pipe ends output quietly.
fn out_line(v: &dyn std::fmt::Display) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{v}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => r.context("writing to stdout"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen { suite, shape, seed, out } => gen(suite, shape, seed, &out),
        Cmd::Run {
            scenario,
            planner,
            vehicles,
            seed,
            depth_threshold_ft,
            timeout_s,
            config,
            out,
        } => run(
            &scenario,
            planner,
            vehicles,
            seed,
            depth_threshold_ft,
            timeout_s,
            config.as_deref(),
            out.as_deref(),
        ),
        Cmd::Bench {
            spec,
            seed,
            depth_threshold_ft,
            timeout_s,
            config,
            out,
            jobs,
        } => bench(
            spec.as_deref(),
            seed,
            depth_threshold_ft,
            timeout_s,
            config.as_deref(),
            &out,
            jobs,
        ),
        Cmd::Report { results, out } => report_cmd(&results, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
