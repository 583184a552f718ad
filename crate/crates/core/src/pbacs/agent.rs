//! Per-vehicle planner state machine.
//!
//! Bidding runs in epochs. Each consensus opens an epoch: old proposals
//! expire, reservations are cleared, and every vehicle past its sweep
//! proposes its best path. Proposals arrive one tick later; every vehicle
//! resolves the batch it received the same way, reserves the winners'
//! cells for the rest of the epoch, and losers propose again around them.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{
    channel_in, choose_direction, find_candidate_path, nearest_waypoint, resolve, CandidatePath,
    PbacsConfig, SearchGrid,
};
use crate::gpr::BeliefMap;
use crate::grid::{GridGeometry, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbacsMode {
    Sweep,
    PathExplore,
    MdpFallback,
    Done,
}

pub enum PbacsEvent<'a> {
    /// Fresh fused belief.
    Consensus {
        belief: &'a BeliefMap,
        now: f64,
        position: Point,
        idle: bool,
    },
    /// Proposals delivered this tick (possibly none).
    Proposals {
        received: &'a [CandidatePath],
        now: f64,
        position: Point,
        idle: bool,
    },
    SweepDone { now: f64, position: Point },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PbacsOutput {
    /// Broadcast to the other vehicles.
    pub proposal: Option<CandidatePath>,
    /// Replace the vehicle's waypoints with these cells, in order.
    pub waypoints: Option<Vec<usize>>,
    /// No candidate path left; survey with the MDP planner instead.
    pub fallback: bool,
    pub channel: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct PbacsAgent {
    id: usize,
    cfg: PbacsConfig,
    geometry: GridGeometry,
    starts: Vec<usize>,
    goals: Vec<usize>,
    mode: PbacsMode,
    grid: Option<SearchGrid>,
    variance: Vec<f64>,
    p_curr: Vec<usize>,
    pending: Option<CandidatePath>,
    assigned: bool,
    reserved: BTreeSet<usize>,
    last_proposal: Option<f64>,
    proposals_sent: usize,
    wins: usize,
}

impl PbacsAgent {
    pub fn new(
        id: usize,
        cfg: PbacsConfig,
        geometry: GridGeometry,
        starts: Vec<usize>,
        goals: Vec<usize>,
    ) -> Self {
        PbacsAgent {
            id,
            cfg,
            geometry,
            starts,
            goals,
            mode: PbacsMode::Sweep,
            grid: None,
            variance: Vec::new(),
            p_curr: Vec::new(),
            pending: None,
            assigned: false,
            reserved: BTreeSet::new(),
            last_proposal: None,
            proposals_sent: 0,
            wins: 0,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn mode(&self) -> PbacsMode {
        self.mode
    }

    /// Path currently being surveyed, start end first.
    pub fn current_path(&self) -> &[usize] {
        &self.p_curr
    }

    pub fn proposals_sent(&self) -> usize {
        self.proposals_sent
    }

    pub fn wins(&self) -> usize {
        self.wins
    }

    pub fn step(&mut self, event: PbacsEvent<'_>) -> PbacsOutput {
        if self.mode == PbacsMode::Done {
            return PbacsOutput::default();
        }
        match event {
            PbacsEvent::Consensus {
                belief,
                now,
                position,
                idle: _,
            } => self.on_consensus(belief, now, position),
            PbacsEvent::Proposals {
                received,
                now,
                position,
                idle,
            } => self.on_proposals(received, now, position, idle),
            PbacsEvent::SweepDone { now, position } => {
                self.mode = PbacsMode::PathExplore;
                if self.grid.is_some() && !self.assigned && self.pending.is_none() {
                    self.propose(now, position)
                } else {
                    PbacsOutput::default()
                }
            }
        }
    }

    fn on_consensus(&mut self, belief: &BeliefMap, now: f64, position: Point) -> PbacsOutput {
        let sg = super::build_search_grid(belief, &self.geometry, &self.cfg);
        if let Some(path) = channel_in(&sg, &self.starts, &self.goals, self.cfg.connectivity) {
            self.mode = PbacsMode::Done;
            self.pending = None;
            return PbacsOutput {
                channel: Some(path),
                ..Default::default()
            };
        }
        self.grid = Some(sg);
        self.variance.clone_from(&belief.variance);
        self.reserved.clear();
        self.assigned = false;
        self.pending = None;
        if self.mode == PbacsMode::Sweep {
            return PbacsOutput::default();
        }
        let waited = self
            .last_proposal
            .is_none_or(|t| now - t > self.cfg.t_wait_s);
        if !waited {
            // Too soon to bid again; keep the current assignment.
            self.assigned = !self.p_curr.is_empty();
            return PbacsOutput::default();
        }
        self.propose(now, position)
    }

    fn on_proposals(
        &mut self,
        received: &[CandidatePath],
        now: f64,
        position: Point,
        idle: bool,
    ) -> PbacsOutput {
        let mut batch: Vec<CandidatePath> = received
            .iter()
            .filter(|p| p.proposer != self.id)
            .cloned()
            .collect();
        let own = self.pending.take();
        if let Some(p) = &own {
            batch.push(p.clone());
        }
        if batch.is_empty() {
            return PbacsOutput::default();
        }
        let r = resolve(&batch);
        self.reserved.extend(r.reserved.iter().copied());
        let Some(own) = own else {
            return PbacsOutput::default();
        };
        if r.won(self.id) {
            self.assigned = true;
            self.wins += 1;
            self.mode = PbacsMode::PathExplore;
            if own.waypoints != self.p_curr || idle {
                self.p_curr = own.waypoints;
                let (p_a, _) = nearest_waypoint(&self.p_curr, &self.geometry, position);
                let sigma_th = self.grid.as_ref().map_or(f64::INFINITY, |g| g.sigma_th);
                let order = choose_direction(&self.p_curr, p_a, &self.variance, sigma_th, self.cfg.gamma);
                return PbacsOutput {
                    waypoints: Some(order),
                    ..Default::default()
                };
            }
            PbacsOutput::default()
        } else {
            self.propose(now, position)
        }
    }

    /// Find the best path around obstacles and this epoch's reservations,
    /// keep the current one unless it is blocked or longer, and bid on it.
    fn propose(&mut self, now: f64, position: Point) -> PbacsOutput {
        let Some(sg) = &self.grid else {
            return PbacsOutput::default();
        };
        let Some(p_new) = find_candidate_path(
            sg,
            &self.starts,
            &self.goals,
            &self.reserved,
            self.cfg.connectivity,
        ) else {
            self.mode = PbacsMode::MdpFallback;
            self.p_curr.clear();
            return PbacsOutput {
                fallback: true,
                ..Default::default()
            };
        };
        let p_curr_blocked = self
            .p_curr
            .iter()
            .any(|&c| sg.obstacle[c] || self.reserved.contains(&c));
        let shorter = self.p_curr.len() > p_new.len();
        let p_prop = if self.p_curr.is_empty() || p_curr_blocked || shorter {
            p_new
        } else {
            self.p_curr.clone()
        };
        let (_, cost_m) = nearest_waypoint(&p_prop, &self.geometry, position);
        let proposal = CandidatePath {
            waypoints: p_prop,
            proposer: self.id,
            cost_m,
            time_s: now,
        };
        self.pending = Some(proposal.clone());
        self.last_proposal = Some(now);
        self.proposals_sent += 1;
        PbacsOutput {
            proposal: Some(proposal),
            ..Default::default()
        }
    }
}
