//! Proposal-based adaptive channel search.
//!
//! Vehicles first sweep fixed transects, then repeatedly propose candidate
//! start-to-goal paths through cells that are not confirmed shallow, bid for
//! them by distance, and survey the paths they win. The search ends when a
//! path of confirmed-deep cells exists.

mod agent;
mod search;

pub use agent::{PbacsAgent, PbacsEvent, PbacsMode, PbacsOutput};
pub use search::GridSearch;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gpr::BeliefMap;
use crate::grid::{Connectivity, GridGeometry, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbacsConfig {
    pub eta: f64,
    pub depth_threshold_ft: f64,
    pub t_wait_s: f64,
    /// Per-cell discount when scoring traversal directions.
    pub gamma: f64,
    pub connectivity: Connectivity,
}

impl Default for PbacsConfig {
    fn default() -> Self {
        PbacsConfig {
            eta: 0.33,
            depth_threshold_ft: 20.0,
            t_wait_s: 10.0,
            gamma: 0.9,
            connectivity: Connectivity::Eight,
        }
    }
}

/// `sigma_min + eta (sigma_max - sigma_min)` over the variance vector.
pub fn variance_threshold(variance: &[f64], eta: f64) -> f64 {
    let (lo, hi) = extrema(variance);
    lo + eta * (hi - lo)
}

fn extrema(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// The threshold actually used for classification. The upper end of the
/// range never drops below the variance an unobserved cell would have, so
/// the threshold keeps separating measured cells from guessed ones after
/// the whole field has been visited.
pub fn effective_threshold(belief: &BeliefMap, eta: f64) -> f64 {
    let (lo, hi) = extrema(&belief.variance);
    let hi = hi.max(belief.unobserved_variance);
    lo + eta * (hi - lo)
}

/// Obstacle map: a cell is blocked iff it is both shallow and well known.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchGrid {
    pub rows: usize,
    pub cols: usize,
    pub sigma_th: f64,
    pub obstacle: Vec<bool>,
    /// Deep and well known.
    pub confirmed: Vec<bool>,
}

impl SearchGrid {
    pub fn with_threshold(
        belief: &BeliefMap,
        rows: usize,
        cols: usize,
        depth_threshold_ft: f64,
        sigma_th: f64,
    ) -> Self {
        assert_eq!(belief.len(), rows * cols, "belief does not match grid");
        let known = |c: usize| belief.variance[c] < sigma_th;
        let obstacle = (0..belief.len())
            .map(|c| belief.mean[c] < depth_threshold_ft && known(c))
            .collect();
        let confirmed = (0..belief.len())
            .map(|c| belief.mean[c] >= depth_threshold_ft && known(c))
            .collect();
        SearchGrid {
            rows,
            cols,
            sigma_th,
            obstacle,
            confirmed,
        }
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacle.iter().filter(|&&o| o).count()
    }

    pub fn path_is_clear(&self, path: &[usize]) -> bool {
        path.iter().all(|&c| !self.obstacle[c])
    }
}

pub fn build_search_grid(
    belief: &BeliefMap,
    geometry: &GridGeometry,
    cfg: &PbacsConfig,
) -> SearchGrid {
    SearchGrid::with_threshold(
        belief,
        geometry.rows,
        geometry.cols,
        cfg.depth_threshold_ft,
        effective_threshold(belief, cfg.eta),
    )
}

/// Fewest-cell obstacle-free path from a start cell to a goal cell that
/// avoids `reserved`. Among equally short paths, ones through confirmed
/// cells are preferred.
pub fn find_candidate_path(
    sg: &SearchGrid,
    starts: &[usize],
    goals: &[usize],
    reserved: &BTreeSet<usize>,
    connectivity: Connectivity,
) -> Option<Vec<usize>> {
    let mut blocked = sg.obstacle.clone();
    for &c in reserved {
        if c < blocked.len() {
            blocked[c] = true;
        }
    }
    let tie: Vec<u32> = sg.confirmed.iter().map(|&c| u32::from(!c)).collect();
    GridSearch {
        rows: sg.rows,
        cols: sg.cols,
        blocked: &blocked,
        tie_cost: Some(&tie),
        connectivity,
    }
    .shortest_path(starts, goals)
}

/// A start-to-goal path of confirmed-deep cells, if one exists.
pub fn check_channel_found(
    belief: &BeliefMap,
    geometry: &GridGeometry,
    starts: &[usize],
    goals: &[usize],
    cfg: &PbacsConfig,
) -> Option<Vec<usize>> {
    let sg = build_search_grid(belief, geometry, cfg);
    channel_in(&sg, starts, goals, cfg.connectivity)
}

pub(crate) fn channel_in(
    sg: &SearchGrid,
    starts: &[usize],
    goals: &[usize],
    connectivity: Connectivity,
) -> Option<Vec<usize>> {
    let blocked: Vec<bool> = sg.confirmed.iter().map(|&c| !c).collect();
    GridSearch {
        rows: sg.rows,
        cols: sg.cols,
        blocked: &blocked,
        tie_cost: None,
        connectivity,
    }
    .shortest_path(starts, goals)
}

/// Order in which to visit `path` (start end first) for a vehicle joining
/// it at index `p_a`. The chosen direction is run to its end, then the
/// vehicle comes back for the rest.
///
/// An endpoint that is still uncertain while the other is not decides the
/// direction outright. Otherwise each direction scores
/// `sum_k gamma^k var(path[p_a +- k])` and the higher score goes first;
/// ties go toward the goal end.
pub fn choose_direction(
    path: &[usize],
    p_a: usize,
    variance: &[f64],
    sigma_th: f64,
    gamma: f64,
) -> Vec<usize> {
    assert!(p_a < path.len(), "p_a must index into the path");
    let last = path.len() - 1;
    let forward = |p: &[usize]| -> Vec<usize> {
        p[p_a..].iter().chain(p[..p_a].iter().rev()).copied().collect()
    };
    let backward = |p: &[usize]| -> Vec<usize> {
        p[..=p_a].iter().rev().chain(p[p_a + 1..].iter()).copied().collect()
    };
    if p_a == 0 {
        return path.to_vec();
    }
    if p_a == last {
        return path.iter().rev().copied().collect();
    }
    let start_open = variance[path[0]] >= sigma_th;
    let goal_open = variance[path[last]] >= sigma_th;
    if goal_open != start_open {
        return if goal_open { forward(path) } else { backward(path) };
    }
    let score = |cells: &mut dyn Iterator<Item = &usize>| {
        let mut w = 1.0;
        let mut s = 0.0;
        for &c in cells {
            w *= gamma;
            s += w * variance[c];
        }
        s
    };
    let ahead = score(&mut path[p_a + 1..].iter());
    let behind = score(&mut path[..p_a].iter().rev());
    if behind > ahead {
        backward(path)
    } else {
        forward(path)
    }
}

/// Index of the path cell whose center is nearest `position` (grid frame),
/// and that distance in meters.
pub fn nearest_waypoint(path: &[usize], geometry: &GridGeometry, position: Point) -> (usize, f64) {
    path.iter()
        .enumerate()
        .map(|(i, &c)| (i, geometry.local_center_flat(c).dist(position)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// A path offered for bidding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    /// Flat cell indices, start end first.
    pub waypoints: Vec<usize>,
    pub proposer: usize,
    pub cost_m: f64,
    pub time_s: f64,
}

impl CandidatePath {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn shares_cell(&self, other: &CandidatePath) -> bool {
        let mine: BTreeSet<usize> = self.waypoints.iter().copied().collect();
        other.waypoints.iter().any(|c| mine.contains(c))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Resolution {
    /// Proposer ids of accepted proposals, in acceptance order.
    pub winners: Vec<usize>,
    /// Cells of accepted proposals.
    pub reserved: BTreeSet<usize>,
}

impl Resolution {
    pub fn won(&self, agent: usize) -> bool {
        self.winners.contains(&agent)
    }
}

/// Accept proposals in order of (cost, proposer id), skipping any that
/// share a cell with one already accepted. Every agent holding the same
/// proposal multiset computes the same result.
pub fn resolve(proposals: &[CandidatePath]) -> Resolution {
    let mut order: Vec<&CandidatePath> = proposals.iter().collect();
    order.sort_by(|a, b| a.cost_m.total_cmp(&b.cost_m).then(a.proposer.cmp(&b.proposer)));
    let mut out = Resolution::default();
    for p in order {
        if out.winners.contains(&p.proposer) {
            continue;
        }
        if p.waypoints.iter().all(|c| !out.reserved.contains(c)) {
            out.winners.push(p.proposer);
            out.reserved.extend(p.waypoints.iter().copied());
        }
    }
    out
}

/// Resolve `own` against what was received; `true` when `own` wins.
pub fn resolve_proposals(own: &CandidatePath, received: &[CandidatePath]) -> (bool, Resolution) {
    let mut all: Vec<CandidatePath> = received
        .iter()
        .filter(|p| p.proposer != own.proposer)
        .cloned()
        .collect();
    all.push(own.clone());
    let r = resolve(&all);
    (r.won(own.proposer), r)
}

/// Transect row for each of `n` vehicles: start row, goal row, then evenly
/// spaced rows in between.
pub fn sweep_assignment(n: usize, start_row: usize, goal_row: usize) -> Vec<usize> {
    let mut rows = Vec::with_capacity(n);
    if n == 0 {
        return rows;
    }
    rows.push(start_row);
    if n >= 2 {
        rows.push(goal_row);
    }
    let (a, b) = (start_row as f64, goal_row as f64);
    for i in 1..n.saturating_sub(1) {
        let t = i as f64 / (n - 1) as f64;
        rows.push(crate::math::round(a + (b - a) * t) as usize);
    }
    rows
}
