//! Monte Carlo experiment specs and the resumable runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, ensure, Context, Result};
use chansearch_core::rng::splitmix64;
use chansearch_core::scenario::{channel_suite, extended_suite};
use chansearch_core::sim::run_mission;
use chansearch_core::{BathyScenario, MissionConfig, MissionRecord, PlannerKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario_io::load_scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Straight, diagonal, single bend and dead end, each with its mirror.
    Channel,
    /// The channel suite plus a second straight and diagonal layout.
    Extended,
}

impl Suite {
    pub fn scenarios(self, seed: u64) -> Vec<BathyScenario> {
        match self {
            Suite::Channel => channel_suite(seed),
            Suite::Extended => extended_suite(seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub suite: Option<Suite>,
    #[serde(default)]
    pub suite_seed: u64,
    /// Scenario JSON files, relative paths resolved against the spec file.
    #[serde(default)]
    pub scenario_files: Vec<PathBuf>,
    pub planners: Vec<PlannerKind>,
    pub vehicle_counts: Vec<usize>,
    pub trials: usize,
    /// Per-planner trial counts overriding `trials`.
    #[serde(default)]
    pub planner_trials: BTreeMap<PlannerKind, usize>,
    pub base_seed: u64,
    pub depth_threshold_ft: f64,
    #[serde(default)]
    pub timeout_s: Option<f64>,
    #[serde(default)]
    pub config: MissionConfig,
}

impl ExperimentSpec {
    /// The evaluation matrix: every scenario of a suite, one lawnmower run
    /// and five of each adaptive planner per vehicle count from 1 to 4.
    pub fn standard_matrix(suite: Suite, base_seed: u64) -> Self {
        ExperimentSpec {
            suite: Some(suite),
            suite_seed: 0,
            scenario_files: Vec::new(),
            planners: PlannerKind::ALL.to_vec(),
            vehicle_counts: vec![1, 2, 3, 4],
            trials: 5,
            planner_trials: [(PlannerKind::Lawnmower, 1)].into_iter().collect(),
            base_seed,
            depth_threshold_ft: 20.0,
            timeout_s: None,
            config: MissionConfig::default(),
        }
    }

    pub fn trials_for(&self, p: PlannerKind) -> usize {
        self.planner_trials.get(&p).copied().unwrap_or(self.trials)
    }

    /// Mission config with the spec-level overrides applied.
    pub fn mission_config(&self) -> MissionConfig {
        let mut cfg = self.config.clone();
        cfg.pbacs.depth_threshold_ft = self.depth_threshold_ft;
        if let Some(t) = self.timeout_s {
            cfg.sim.timeout_s = t;
        }
        cfg
    }

    /// Load the scenarios the spec names, suite first.
    pub fn load_scenarios(&self, base_dir: &Path) -> Result<Vec<BathyScenario>> {
        let mut out = self.suite.map(|s| s.scenarios(self.suite_seed)).unwrap_or_default();
        for f in &self.scenario_files {
            let path = if f.is_absolute() { f.clone() } else { base_dir.join(f) };
            out.push(load_scenario(&path)?);
        }
        Ok(out)
    }

    pub fn validate(&self, scenarios: &[BathyScenario]) -> Result<()> {
        ensure!(!scenarios.is_empty(), "spec names no scenarios");
        ensure!(!self.planners.is_empty(), "spec names no planners");
        ensure!(!self.vehicle_counts.is_empty(), "spec names no vehicle counts");
        ensure!(self.trials >= 1, "trials must be at least 1");
        for (p, &t) in &self.planner_trials {
            ensure!(t >= 1, "trials for {p} must be at least 1");
        }
        for &n in &self.vehicle_counts {
            ensure!((1..=255).contains(&n), "vehicle count {n} out of range");
        }
        let mut names = BTreeSet::new();
        for s in scenarios {
            ensure!(names.insert(s.name.as_str()), "duplicate scenario name `{}`", s.name);
            let (lo, hi) = s.depth_range();
            ensure!(
                (lo..=hi).contains(&self.depth_threshold_ft),
                "depth threshold {} ft outside scenario `{}` range [{lo}, {hi}]",
                self.depth_threshold_ft,
                s.name
            );
        }
        ensure!(self.trials_for_any() < 1 << 16, "too many trials");
        ensure!(scenarios.len() < 1 << 24, "too many scenarios");
        Ok(())
    }

    fn trials_for_any(&self) -> usize {
        self.planners.iter().map(|&p| self.trials_for(p)).max().unwrap_or(0)
    }

    /// Every (scenario, planner, n, trial) cell, in a fixed order.
    pub fn cells(&self, scenarios: &[BathyScenario]) -> Vec<Cell> {
        let mut out = Vec::new();
        for (si, s) in scenarios.iter().enumerate() {
            for &planner in &self.planners {
                for &n in &self.vehicle_counts {
                    for trial in 0..self.trials_for(planner) {
                        out.push(Cell {
                            scenario_index: si,
                            scenario: s.name.clone(),
                            planner,
                            n_vehicles: n,
                            trial,
                            seed: cell_seed(self.base_seed, si, planner, n, trial),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub scenario_index: usize,
    pub scenario: String,
    pub planner: PlannerKind,
    pub n_vehicles: usize,
    pub trial: usize,
    pub seed: u64,
}

impl Cell {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            scenario: self.scenario.clone(),
            planner: self.planner,
            n_vehicles: self.n_vehicles,
            seed: self.seed,
        }
    }
}

/// Identity of a result line; a cell's seed fixes its trial number.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecordKey {
    pub scenario: String,
    pub planner: PlannerKind,
    pub n_vehicles: usize,
    pub seed: u64,
}

impl From<&MissionRecord> for RecordKey {
    fn from(r: &MissionRecord) -> Self {
        RecordKey {
            scenario: r.scenario.clone(),
            planner: r.planner,
            n_vehicles: r.n_vehicles,
            seed: r.seed,
        }
    }
}

fn planner_code(p: PlannerKind) -> u64 {
    match p {
        PlannerKind::Pbacs => 0,
        PlannerKind::Ucb => 1,
        PlannerKind::Mvi => 2,
        PlannerKind::Lawnmower => 3,
    }
}

/// `base ^ mix(cell)`. The cell packs into distinct words (scenario index
/// below 2^24, n below 2^8, trial below 2^16) and splitmix64 is a
/// bijection, so distinct cells never share a seed.
pub fn cell_seed(base: u64, scenario_index: usize, planner: PlannerKind, n: usize, trial: usize) -> u64 {
    let packed = (scenario_index as u64) << 40 | planner_code(planner) << 24 | (n as u64) << 16 | trial as u64;
    base ^ splitmix64(packed)
}

/// Records already in a results file. A torn final line from an
/// interrupted run is cut off.
pub fn read_records(path: &Path) -> Result<Vec<MissionRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        f.set_len(complete.len() as u64)
            .with_context(|| format!("truncating {}", path.display()))?;
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(complete.as_bytes()).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: MissionRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {} is not a mission record", path.display(), i + 1))?;
        out.push(r);
    }
    Ok(out)
}

pub fn record_line(r: &MissionRecord) -> String {
    serde_json::to_string(r).expect("records serialize")
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Append records here and skip cells already present.
    pub results: Option<PathBuf>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

/// Run every cell not yet recorded. Returns all records for the spec's
/// cells, in cell order.
pub fn run_experiment(
    spec: &ExperimentSpec,
    scenarios: &[BathyScenario],
    opts: &RunOptions,
) -> Result<Vec<MissionRecord>> {
    spec.validate(scenarios)?;
    let cfg = spec.mission_config();
    let cells = spec.cells(scenarios);
    let wanted: BTreeSet<RecordKey> = cells.iter().map(Cell::key).collect();

    let mut done: BTreeMap<RecordKey, MissionRecord> = BTreeMap::new();
    if let Some(path) = &opts.results {
        for r in read_records(path)? {
            let k = RecordKey::from(&r);
            if wanted.contains(&k) {
                done.insert(k, r);
            }
        }
    }
    let pending: Vec<&Cell> = cells.iter().filter(|c| !done.contains_key(&c.key())).collect();

    let sink = match &opts.results {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            Some(Mutex::new(f))
        }
        None => None,
    };

    let work = || -> Result<Vec<MissionRecord>> {
        pending
            .par_iter()
            .map(|c| {
                let r = run_mission(&scenarios[c.scenario_index], c.planner, c.n_vehicles, c.seed, &cfg);
                if let Some(sink) = &sink {
                    let mut f = sink.lock().expect("results file lock");
                    writeln!(f, "{}", record_line(&r)).context("appending result")?;
                    f.flush().context("flushing results")?;
                }
                Ok(r)
            })
            .collect()
    };
    let fresh = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .context("building worker pool")?
            .install(work)?,
        None => work()?,
    };
    for r in fresh {
        done.insert(RecordKey::from(&r), r);
    }
    let mut out = Vec::with_capacity(cells.len());
    for c in &cells {
        match done.remove(&c.key()) {
            Some(r) => out.push(r),
            None => bail!("no record for cell {c:?}"),
        }
    }
    Ok(out)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing spec {}", path.display()))
}
