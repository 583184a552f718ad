//! Discrete-time mission kernel.
//!
//! Each tick: deliver last tick's messages and let planners react, move the
//! vehicles, sense, and, on the consensus cadence, refit every vehicle's
//! GPR, fuse the beliefs, check for a confirmed channel and let planners
//! re-plan. Everything random draws from named streams of the mission seed.

pub mod bus;
pub mod sensor;
pub mod vehicle;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{Consensus, ConsensusConfig, Partition};
use crate::gpr::{BeliefMap, FastGpr, FastGprConfig, KernelConfig, KernelForm};
use crate::grid::{CellIndex, Point};
use crate::lawnmower::generate_lawnmower;
use crate::mdp::{self, Heading, MdpConfig, MdpPlanner, MdpState, RewardKind};
use crate::pbacs::{self, CandidatePath, PbacsAgent, PbacsConfig, PbacsEvent, PbacsOutput};
use crate::rng::{stream_rng, stream_seed, Stream};
use crate::scenario::BathyScenario;
use bus::{realize_graph, Bus, BusMessage, CommConfig, Payload};
use sensor::{sample_depth, Thinner};
use vehicle::{angle_of_heading, step_vehicle, VehicleMode, VehicleState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Pbacs,
    Ucb,
    Mvi,
    Lawnmower,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [
        PlannerKind::Pbacs,
        PlannerKind::Ucb,
        PlannerKind::Mvi,
        PlannerKind::Lawnmower,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Pbacs => "pbacs",
            PlannerKind::Ucb => "ucb",
            PlannerKind::Mvi => "mvi",
            PlannerKind::Lawnmower => "lawnmower",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPlanner(pub String);

impl fmt::Display for UnknownPlanner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown planner `{}` (expected pbacs, ucb, mvi or lawnmower)", self.0)
    }
}

impl core::error::Error for UnknownPlanner {}

impl core::str::FromStr for PlannerKind {
    type Err = UnknownPlanner;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlannerKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownPlanner(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub sensor_rate_hz: f64,
    pub sensor_noise_ft: f64,
    pub timeout_s: f64,
    pub speed_mps: f64,
    pub consensus_period_s: f64,
    pub arrival_tolerance_m: f64,
    pub comm: CommConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_s: 0.5,
            sensor_rate_hz: 10.0,
            sensor_noise_ft: 0.2,
            timeout_s: 8000.0,
            speed_mps: 2.4,
            consensus_period_s: 60.0,
            arrival_tolerance_m: 0.5,
            comm: CommConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.dt_s) {
            return Err("dt_s");
        }
        if !pos(self.sensor_rate_hz) || self.sensor_rate_hz * self.dt_s < 1.0 - 1e-9 {
            return Err("sensor_rate_hz");
        }
        if !(self.sensor_noise_ft.is_finite() && self.sensor_noise_ft >= 0.0) {
            return Err("sensor_noise_ft");
        }
        if !pos(self.timeout_s) {
            return Err("timeout_s");
        }
        if !(self.speed_mps.is_finite() && self.speed_mps >= 0.0) {
            return Err("speed_mps");
        }
        if !pos(self.consensus_period_s) {
            return Err("consensus_period_s");
        }
        if !(self.arrival_tolerance_m.is_finite() && self.arrival_tolerance_m >= 0.0) {
            return Err("arrival_tolerance_m");
        }
        if !(0.0..=1.0).contains(&self.comm.dropout) {
            return Err("comm.dropout");
        }
        if self.comm.range_m.is_some_and(|r| !(r >= 0.0)) {
            return Err("comm.range_m");
        }
        Ok(())
    }
}

/// Every knob of a mission in one place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub sim: SimConfig,
    pub gpr: FastGprConfig,
    /// Used by both the GPR and consensus covariance assembly; the kernel
    /// inside `consensus` is ignored.
    pub kernel: KernelConfig,
    pub consensus: ConsensusConfig,
    pub pbacs: PbacsConfig,
    /// Look-ahead, transition and reward weights for the MDP planners. The
    /// reward kind comes from the planner being run; the channel search
    /// fallback uses UCB.
    pub mdp: MdpConfig,
    /// Lawnmower lane spacing; defaults to one cell.
    pub lawnmower_spacing_m: Option<f64>,
    pub record_trajectories: bool,
}

impl Default for MissionConfig {
    fn default() -> Self {
        let kernel = KernelConfig {
            form: KernelForm::SquaredExponential,
            cutoff: 1e-9,
            ..KernelConfig::default()
        };
        MissionConfig {
            sim: SimConfig::default(),
            gpr: FastGprConfig {
                subset_count: 16,
                subset_size: 64,
                ..FastGprConfig::default()
            },
            kernel,
            consensus: ConsensusConfig {
                partition: Partition::Tiled {
                    tile_rows: 2,
                    tile_cols: 2,
                },
                kernel,
                ..ConsensusConfig::default()
            },
            pbacs: PbacsConfig::default(),
            mdp: MdpConfig::default(),
            lawnmower_spacing_m: None,
            record_trajectories: true,
        }
    }
}

/// A vehicle entering a cell at a given time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t_s: f64,
    pub cell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub scenario: String,
    pub planner: PlannerKind,
    pub n_vehicles: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub found: bool,
    pub timeout: bool,
    /// Confirmed channel, start end first; empty unless `found`.
    pub final_path: Vec<usize>,
    /// Share of vehicle time spent in cells of `final_path`.
    pub time_on_path_ratio: f64,
    pub consensus_events: usize,
    pub measurements: usize,
    /// Per vehicle: the starting cell at t = 0, then every cell entry.
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
    pub error: Option<String>,
}

struct Agent {
    vehicle: VehicleState,
    gpr: FastGpr,
    thinner: Thinner,
    belief: BeliefMap,
    pbacs: Option<PbacsAgent>,
    mdp: Option<MdpPlanner>,
    rewards: Vec<f64>,
    trajectory: Vec<TrajectoryPoint>,
    cell: usize,
}

struct Mission<'a> {
    scenario: &'a BathyScenario,
    planner: PlannerKind,
    cfg: MissionConfig,
    agents: Vec<Agent>,
    bus: Bus,
    sensor_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    transition_rng: ChaCha8Rng,
    maxima_rng: ChaCha8Rng,
    consensus: Consensus,
    measurements: usize,
    consensus_events: usize,
}

fn centers<'s>(scenario: &'s BathyScenario, cells: &'s [usize]) -> impl Iterator<Item = Point> + 's {
    cells
        .iter()
        .map(move |&c| scenario.geometry().local_center_flat(c))
}

impl<'a> Mission<'a> {
    fn new(
        scenario: &'a BathyScenario,
        planner: PlannerKind,
        n: usize,
        seed: u64,
        cfg: &MissionConfig,
    ) -> Result<Self, String> {
        cfg.sim.validate().map_err(|f| format!("invalid sim config field `{f}`"))?;
        cfg.mdp.validate().map_err(|e| e.to_string())?;
        if n == 0 {
            return Err("need at least one vehicle".into());
        }
        let g = scenario.geometry().clone();
        let mut gcfg = cfg.gpr;
        gcfg.seed = stream_seed(seed, Stream::Subset);
        let mut ccfg = cfg.consensus;
        ccfg.kernel = cfg.kernel;
        let consensus = Consensus::new(&g, ccfg).map_err(|e| e.to_string())?;

        let start_row = scenario.start_row();
        let goal_row = scenario.goal_row();
        let toward_goal = if goal_row >= start_row { Heading::S } else { Heading::N };
        let speed = cfg.sim.speed_mps;
        let mut vehicles: Vec<VehicleState> = Vec::with_capacity(n);
        match planner {
            PlannerKind::Pbacs => {
                let rows = pbacs::sweep_assignment(n, start_row, goal_row);
                for (i, &r) in rows.iter().enumerate() {
                    let (a, b) = if i % 2 == 0 { (0, g.cols - 1) } else { (g.cols - 1, 0) };
                    let from = g.local_center(CellIndex::new(r, a));
                    let to = g.local_center(CellIndex::new(r, b));
                    let heading = if a < b { 0.0 } else { core::f64::consts::PI };
                    let mut v = VehicleState::new(from, heading, speed, VehicleMode::Sweep);
                    v.waypoints.push_back(to);
                    vehicles.push(v);
                }
            }
            PlannerKind::Lawnmower => {
                let spacing = cfg.lawnmower_spacing_m.unwrap_or(g.cell_size_m);
                let plan = generate_lawnmower(&g, n, spacing).map_err(|e| e.to_string())?;
                for wps in plan.waypoints {
                    let mut it = wps.into_iter();
                    let start = it.next().expect("every strip has a lane");
                    let mut v = VehicleState::new(start, core::f64::consts::FRAC_PI_2, speed, VehicleMode::Lawnmower);
                    v.waypoints.extend(it);
                    vehicles.push(v);
                }
            }
            PlannerKind::Ucb | PlannerKind::Mvi => {
                for i in 0..n {
                    let col = crate::math::round((i as f64 + 0.5) * g.cols as f64 / n as f64 - 0.5)
                        .clamp(0.0, (g.cols - 1) as f64) as usize;
                    let p = g.local_center(CellIndex::new(start_row, col));
                    vehicles.push(VehicleState::new(p, angle_of_heading(toward_goal), speed, VehicleMode::Mdp));
                }
            }
        }

        let prior = BeliefMap::prior(g.len(), gcfg.prior_mean_ft, gcfg.prior_variance_ft2);
        let mut agents = Vec::with_capacity(n);
        for (i, vehicle) in vehicles.into_iter().enumerate() {
            let gpr = FastGpr::new(g.clone(), gcfg, cfg.kernel).map_err(|e| e.to_string())?;
            let cell = g
                .local_to_cell(vehicle.position)
                .map(|c| g.flat(c))
                .ok_or("vehicle starts off the field")?;
            let pbacs_agent = (planner == PlannerKind::Pbacs).then(|| {
                PbacsAgent::new(
                    i,
                    cfg.pbacs,
                    g.clone(),
                    scenario.start_cells().to_vec(),
                    scenario.goal_cells().to_vec(),
                )
            });
            let mdp_planner = match planner {
                PlannerKind::Pbacs | PlannerKind::Ucb | PlannerKind::Mvi => {
                    let mut m = cfg.mdp;
                    m.reward = if planner == PlannerKind::Mvi { RewardKind::Mvi } else { RewardKind::Ucb };
                    Some(MdpPlanner::new(m, g.rows, g.cols).map_err(|e| e.to_string())?)
                }
                PlannerKind::Lawnmower => None,
            };
            agents.push(Agent {
                vehicle,
                gpr,
                thinner: Thinner::new(),
                belief: prior.clone(),
                pbacs: pbacs_agent,
                mdp: mdp_planner,
                rewards: Vec::new(),
                trajectory: vec![TrajectoryPoint { t_s: 0.0, cell }],
                cell,
            });
        }

        let mut mission = Mission {
            scenario,
            planner,
            cfg: cfg.clone(),
            agents,
            bus: Bus::new(),
            sensor_rng: stream_rng(seed, Stream::Sensor),
            dropout_rng: stream_rng(seed, Stream::Dropout),
            transition_rng: stream_rng(seed, Stream::Transition),
            maxima_rng: stream_rng(seed, Stream::Maxima),
            consensus,
            measurements: 0,
            consensus_events: 0,
        };
        for i in 0..n {
            if mission.agents[i].vehicle.mode == VehicleMode::Mdp {
                mission.refresh_rewards(i);
                mission.mdp_step(i);
            }
        }
        Ok(mission)
    }

    fn positions(&self) -> Vec<Point> {
        self.agents.iter().map(|a| a.vehicle.position).collect()
    }

    fn refresh_rewards(&mut self, i: usize) {
        let a = &mut self.agents[i];
        if let Some(planner) = &a.mdp {
            a.rewards = mdp::reward_field(&a.belief, planner.config(), &mut self.maxima_rng);
        }
    }

    /// Choose and commit the next cell for an MDP-driven vehicle.
    fn mdp_step(&mut self, i: usize) {
        let g = self.scenario.geometry();
        let a = &mut self.agents[i];
        let Some(planner) = a.mdp.as_mut() else {
            return;
        };
        if a.rewards.is_empty() {
            return;
        }
        let Some(cell) = g.local_to_cell(a.vehicle.position) else {
            return;
        };
        let state = MdpState::new(cell, a.vehicle.grid_heading());
        let Some(intended) = planner.plan(state, &a.rewards) else {
            return;
        };
        let succ = mdp::planning_actions(state, g.rows, g.cols);
        let idx = succ
            .as_slice()
            .iter()
            .position(|&s| s == intended)
            .expect("plan returns one of the planning actions");
        let actual = mdp::sample_outcome(&succ, idx, planner.config().p_a, &mut self.transition_rng);
        a.vehicle.waypoints.clear();
        a.vehicle.waypoints.push_back(g.local_center(actual.cell));
    }

    fn apply_pbacs(&mut self, i: usize, out: PbacsOutput, now: f64) {
        if let Some(p) = out.proposal {
            self.bus.send(BusMessage {
                sender: i,
                send_time_s: now,
                payload: Payload::Proposal(p),
            });
        }
        if let Some(cells) = out.waypoints {
            let v = &mut self.agents[i].vehicle;
            v.mode = VehicleMode::PathExplore;
            v.waypoints.clear();
            v.waypoints.extend(centers(self.scenario, &cells));
        }
        if out.fallback {
            let v = &mut self.agents[i].vehicle;
            if v.mode != VehicleMode::Mdp {
                v.mode = VehicleMode::Mdp;
                v.waypoints.clear();
            }
            if self.agents[i].rewards.is_empty() {
                self.refresh_rewards(i);
            }
            if self.agents[i].vehicle.waypoints.is_empty() {
                self.mdp_step(i);
            }
        }
    }

    fn deliver(&mut self, now: f64) {
        let n = self.agents.len();
        let inboxes = if self.bus.pending() > 0 {
            let positions = self.positions();
            let g = realize_graph(&positions, &self.cfg.sim.comm, &mut self.dropout_rng);
            self.bus.deliver(&g)
        } else {
            vec![Vec::new(); n]
        };
        for (i, inbox) in inboxes.into_iter().enumerate() {
            let a = &mut self.agents[i];
            let Some(agent) = a.pbacs.as_mut() else {
                continue;
            };
            let received: Vec<CandidatePath> = inbox
                .into_iter()
                .filter_map(|m| match m.payload {
                    Payload::Proposal(p) => Some(p),
                    Payload::Consensus { .. } => None,
                })
                .collect();
            let v = &a.vehicle;
            let out = agent.step(PbacsEvent::Proposals {
                received: &received,
                now,
                position: v.position,
                idle: v.is_idle(),
            });
            self.apply_pbacs(i, out, now);
        }
    }

    fn move_and_sense(&mut self, t0: f64) {
        let dt = self.cfg.sim.dt_s;
        let samples = crate::math::round(self.cfg.sim.sensor_rate_hz * dt).max(1.0) as usize;
        let g = self.scenario.geometry().clone();
        for i in 0..self.agents.len() {
            let from = self.agents[i].vehicle.position;
            step_vehicle(&mut self.agents[i].vehicle, dt, self.cfg.sim.arrival_tolerance_m);
            let to = self.agents[i].vehicle.position;
            for k in 1..=samples {
                let f = k as f64 / samples as f64;
                let p = Point::new(from.x + (to.x - from.x) * f, from.y + (to.y - from.y) * f);
                let t = t0 + dt * f;
                let Some(m) = sample_depth(p, t, i, self.scenario, self.cfg.sim.sensor_noise_ft, &mut self.sensor_rng) else {
                    continue;
                };
                let cell = g.local_to_cell(p).expect("reading came from a cell");
                self.agents[i].thinner.add(g.flat(cell), m.depth_ft, t);
            }
            let t1 = t0 + dt;
            if let Some(c) = g.local_to_cell(to).map(|c| g.flat(c)) {
                let a = &mut self.agents[i];
                if c != a.cell {
                    a.cell = c;
                    a.trajectory.push(TrajectoryPoint { t_s: t1, cell: c });
                }
            }
            if !self.agents[i].vehicle.is_idle() {
                continue;
            }
            match self.agents[i].vehicle.mode {
                VehicleMode::Sweep => {
                    self.agents[i].vehicle.mode = VehicleMode::PathExplore;
                    let position = self.agents[i].vehicle.position;
                    if let Some(agent) = self.agents[i].pbacs.as_mut() {
                        let out = agent.step(PbacsEvent::SweepDone { now: t1, position });
                        self.apply_pbacs(i, out, t1);
                    }
                }
                VehicleMode::Mdp => self.mdp_step(i),
                VehicleMode::Lawnmower => self.agents[i].vehicle.mode = VehicleMode::Done,
                VehicleMode::PathExplore | VehicleMode::Done => {}
            }
        }
    }

    /// Refit, fuse, and check for a channel. Returns the channel if found.
    fn consensus_event(&mut self, now: f64) -> Result<Option<Vec<usize>>, String> {
        self.consensus_events += 1;
        let mut locals = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter_mut().enumerate() {
            let batch = a.thinner.flush(self.scenario, i);
            self.measurements += batch.len();
            a.gpr.ingest(&batch).map_err(|e| e.to_string())?;
            locals.push(a.gpr.predict());
        }
        let positions = self.positions();
        let comm = self.cfg.sim.comm;
        let rng = &mut self.dropout_rng;
        let outcome = self
            .consensus
            .run_dynamic(&locals, |_| realize_graph(&positions, &comm, rng))
            .map_err(|e| e.to_string())?;
        for (a, b) in self.agents.iter_mut().zip(outcome.states) {
            a.belief = b;
        }

        let geometry = self.scenario.geometry();
        let mut outputs = Vec::with_capacity(self.agents.len());
        for a in &mut self.agents {
            let out = match a.pbacs.as_mut() {
                Some(agent) => agent.step(PbacsEvent::Consensus {
                    belief: &a.belief,
                    now,
                    position: a.vehicle.position,
                    idle: a.vehicle.is_idle(),
                }),
                None => PbacsOutput {
                    channel: pbacs::check_channel_found(
                        &a.belief,
                        geometry,
                        self.scenario.start_cells(),
                        self.scenario.goal_cells(),
                        &self.cfg.pbacs,
                    ),
                    ..Default::default()
                },
            };
            if out.channel.is_some() {
                return Ok(out.channel);
            }
            outputs.push(out);
        }
        for i in 0..self.agents.len() {
            if self.agents[i].vehicle.mode == VehicleMode::Mdp {
                self.refresh_rewards(i);
            } else {
                self.agents[i].rewards.clear();
            }
        }
        if self.planner == PlannerKind::Pbacs {
            for (i, out) in outputs.into_iter().enumerate() {
                self.apply_pbacs(i, out, now);
            }
        }
        Ok(None)
    }

    fn run(mut self, seed: u64) -> MissionRecord {
        let dt = self.cfg.sim.dt_s;
        let timeout = self.cfg.sim.timeout_s;
        let period = self.cfg.sim.consensus_period_s;
        let max_ticks = libm::ceil(timeout / dt - 1e-9) as u64;
        let mut next_consensus = 1u64;
        let mut result: Result<Option<Vec<usize>>, String> = Ok(None);
        let mut end = timeout;
        for tick in 0..max_ticks {
            let t0 = tick as f64 * dt;
            let t1 = ((tick + 1) as f64 * dt).min(timeout);
            self.deliver(t0);
            self.move_and_sense(t0);
            if t1 + 1e-9 >= next_consensus as f64 * period {
                next_consensus += 1;
                match self.consensus_event(t1) {
                    Ok(None) => {}
                    other => {
                        result = other;
                        end = t1;
                        break;
                    }
                }
            }
        }
        self.finish(seed, result, end)
    }

    fn finish(self, seed: u64, result: Result<Option<Vec<usize>>, String>, end: f64) -> MissionRecord {
        let (found, path, error) = match result {
            Ok(Some(p)) => (true, p, None),
            Ok(None) => (false, Vec::new(), None),
            Err(e) => (false, Vec::new(), Some(e)),
        };
        let timeout = !found && error.is_none();
        let duration_s = if timeout { self.cfg.sim.timeout_s } else { end };
        let trajectories: Vec<Vec<TrajectoryPoint>> =
            self.agents.into_iter().map(|a| a.trajectory).collect();
        let ratio = time_on_path_ratio(self.scenario, &trajectories, &path, duration_s);
        MissionRecord {
            scenario: self.scenario.name.clone(),
            planner: self.planner,
            n_vehicles: trajectories.len(),
            seed,
            duration_s,
            found,
            timeout,
            final_path: path,
            time_on_path_ratio: ratio,
            consensus_events: self.consensus_events,
            measurements: self.measurements,
            trajectories: if self.cfg.record_trajectories {
                trajectories
            } else {
                Vec::new()
            },
            error,
        }
    }
}

/// Fraction of vehicle time, up to `end_s`, spent in cells of the path.
pub fn time_on_path_ratio(
    scenario: &BathyScenario,
    trajectories: &[Vec<TrajectoryPoint>],
    path: &[usize],
    end_s: f64,
) -> f64 {
    if path.is_empty() || trajectories.is_empty() || end_s <= 0.0 {
        return 0.0;
    }
    let mut on_path = vec![false; scenario.len()];
    for &c in path {
        on_path[c] = true;
    }
    let mut on = 0.0;
    for traj in trajectories {
        for (k, p) in traj.iter().enumerate() {
            let until = traj.get(k + 1).map_or(end_s, |q| q.t_s).min(end_s);
            if on_path[p.cell] && until > p.t_s {
                on += until - p.t_s;
            }
        }
    }
    (on / (end_s * trajectories.len() as f64)).clamp(0.0, 1.0)
}

/// Run one mission to channel-found, timeout or internal error.
pub fn run_mission(
    scenario: &BathyScenario,
    planner: PlannerKind,
    n_vehicles: usize,
    seed: u64,
    cfg: &MissionConfig,
) -> MissionRecord {
    match Mission::new(scenario, planner, n_vehicles, seed, cfg) {
        Ok(m) => m.run(seed),
        Err(e) => MissionRecord {
            scenario: scenario.name.clone(),
            planner,
            n_vehicles,
            seed,
            duration_s: 0.0,
            found: false,
            timeout: false,
            final_path: Vec::new(),
            time_on_path_ratio: 0.0,
            consensus_events: 0,
            measurements: 0,
            trajectories: Vec::new(),
            error: Some(e),
        },
    }
}
