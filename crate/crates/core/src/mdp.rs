//! Myopic MDP survey planner with UCB and MVI rewards.
//!
//! The state is a cell plus one of eight headings; a vehicle can go ahead,
//! ahead-left or ahead-right. Moves succeed with probability `p_a` and
//! otherwise land on one of the other available moves. The planner looks a
//! fixed number of cells ahead and picks the move with the best expected
//! summed reward.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpr::BeliefMap;
use crate::grid::CellIndex;
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("MVI reward needs at least one sampled maximum")]
    EmptyMaxima,
    #[error("invalid MDP config field `{0}`")]
    InvalidConfig(&'static str),
}

/// Compass heading, clockwise from north (toward row 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Heading(u8);

const HEADING_OFFSETS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

impl Heading {
    pub const N: Heading = Heading(0);
    pub const NE: Heading = Heading(1);
    pub const E: Heading = Heading(2);
    pub const SE: Heading = Heading(3);
    pub const S: Heading = Heading(4);
    pub const SW: Heading = Heading(5);
    pub const W: Heading = Heading(6);
    pub const NW: Heading = Heading(7);

    pub fn new(index: u8) -> Self {
        Heading(index % 8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Turn by `eighths` steps of 45 degrees, clockwise positive.
    pub fn turn(self, eighths: i8) -> Heading {
        Heading(((self.0 as i16 + eighths as i16).rem_euclid(8)) as u8)
    }

    pub fn offset(self) -> (isize, isize) {
        HEADING_OFFSETS[self.index()]
    }

    pub fn from_offset(dr: isize, dc: isize) -> Option<Heading> {
        HEADING_OFFSETS
            .iter()
            .position(|&o| o == (dr.signum(), dc.signum()))
            .map(|i| Heading(i as u8))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MdpState {
    pub cell: CellIndex,
    pub heading: Heading,
}

impl MdpState {
    pub fn new(cell: CellIndex, heading: Heading) -> Self {
        MdpState { cell, heading }
    }
}

/// Up to three successor states, in ahead, left, right order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Successors {
    items: [MdpState; 3],
    len: usize,
}

impl Successors {
    pub fn as_slice(&self) -> &[MdpState] {
        &self.items[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Ahead, ahead-left and ahead-right neighbors that lie on the grid. Each
/// successor faces the direction it was reached in.
pub fn actions(s: MdpState, rows: usize, cols: usize) -> Successors {
    let mut out = Successors {
        items: [s; 3],
        len: 0,
    };
    for turn in [0, -1, 1] {
        let h = s.heading.turn(turn);
        let (dr, dc) = h.offset();
        let (Some(r), Some(c)) = (s.cell.row.checked_add_signed(dr), s.cell.col.checked_add_signed(dc)) else {
            continue;
        };
        if r < rows && c < cols {
            out.items[out.len] = MdpState::new(CellIndex::new(r, c), h);
            out.len += 1;
        }
    }
    out
}

/// Moves available for planning: the regular actions, or if the vehicle
/// faces out of the grid, those of the first turned heading (left quarter,
/// right quarter, about-face) that has any.
pub fn planning_actions(s: MdpState, rows: usize, cols: usize) -> Successors {
    let a = actions(s, rows, cols);
    if !a.is_empty() {
        return a;
    }
    for turn in [-2, 2, 4] {
        let t = actions(MdpState::new(s.cell, s.heading.turn(turn)), rows, cols);
        if !t.is_empty() {
            return t;
        }
    }
    a
}

/// Outcome distribution of choosing action `intended` among `n` available
/// ones: `p_a` on the intended move, the rest split evenly.
pub fn transition(n: usize, intended: usize, p_a: f64) -> [f64; 3] {
    assert!(intended < n && n <= 3, "intended action out of range");
    let mut p = [0.0; 3];
    if n == 1 {
        p[0] = 1.0;
        return p;
    }
    let other = (1.0 - p_a) / (n - 1) as f64;
    for (i, slot) in p.iter_mut().enumerate().take(n) {
        *slot = if i == intended { p_a } else { other };
    }
    p
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    #[default]
    Ucb,
    Mvi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpConfig {
    pub lookahead: usize,
    pub p_a: f64,
    pub reward: RewardKind,
    pub beta: f64,
    pub mvi_samples: usize,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            lookahead: 6,
            p_a: 0.8,
            reward: RewardKind::Ucb,
            beta: 1.5,
            mvi_samples: 5,
        }
    }
}

impl MdpConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.lookahead == 0 {
            return Err(MdpError::InvalidConfig("lookahead"));
        }
        if !(self.p_a > 1.0 / 3.0 && self.p_a <= 1.0) {
            return Err(MdpError::InvalidConfig("p_a"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(MdpError::InvalidConfig("beta"));
        }
        if self.reward == RewardKind::Mvi && self.mvi_samples == 0 {
            return Err(MdpError::InvalidConfig("mvi_samples"));
        }
        Ok(())
    }
}

/// `mean + beta sqrt(variance)`.
pub fn ucb_reward(mean: f64, variance: f64, beta: f64) -> f64 {
    mean + beta * math::sqrt(variance.max(0.0))
}

const MVI_SIGMA_FLOOR: f64 = 1e-9;

/// Entropy reduction about the field maximum from observing one cell,
/// averaged over sampled maxima `z*`:
/// `gamma phi(gamma) / (2 Phi(gamma)) - ln Phi(gamma)` with
/// `gamma = (z* - mean) / sigma`.
pub fn mvi_reward(mean: f64, variance: f64, maxima: &[f64]) -> Result<f64, MdpError> {
    if maxima.is_empty() {
        return Err(MdpError::EmptyMaxima);
    }
    let sigma = math::sqrt(variance.max(0.0)).max(MVI_SIGMA_FLOOR);
    let total: f64 = maxima
        .iter()
        .map(|&z| {
            let g = ((z - mean) / sigma).max(-30.0);
            let cdf = math::normal_cdf(g);
            if g > 38.0 || cdf >= 1.0 {
                return 0.0;
            }
            (g * math::normal_pdf(g) / (2.0 * cdf) - math::ln(cdf)).max(0.0)
        })
        .sum();
    Ok(total / maxima.len() as f64)
}

/// Draw `count` plausible field maxima. The distribution of the maximum is
/// approximated by `prod_c Phi((z - mean_c) / sigma_c)`, fitted with a
/// Gumbel through its quartiles, and sampled; draws never fall below the
/// largest posterior mean.
pub fn sample_maxima(belief: &BeliefMap, count: usize, rng: &mut impl Rng) -> Vec<f64> {
    let max_mean = belief.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if belief.is_empty() || count == 0 {
        return Vec::new();
    }
    let sigmas: Vec<f64> = belief
        .variance
        .iter()
        .map(|&v| math::sqrt(v.max(0.0)).max(MVI_SIGMA_FLOOR))
        .collect();
    let log_cdf_max = |z: f64| -> f64 {
        belief
            .mean
            .iter()
            .zip(&sigmas)
            .map(|(&m, &s)| math::ln(math::normal_cdf((z - m) / s).max(1e-300)))
            .sum()
    };
    let max_sigma = sigmas.iter().copied().fold(0.0, f64::max);
    let quantile = |q: f64| -> f64 {
        let target = math::ln(q);
        let mut lo = max_mean - 1.0;
        let mut hi = max_mean + 10.0 * max_sigma + 1.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if log_cdf_max(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (z25, z50, z75) = (quantile(0.25), quantile(0.5), quantile(0.75));
    let ll = |q: f64| math::ln(-math::ln(q));
    let b = ((z75 - z25) / (ll(0.25) - ll(0.75))).max(0.0);
    let a = z50 + b * ll(0.5);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
            (a - b * ll(u)).max(max_mean)
        })
        .collect()
}

/// Per-cell reward for the configured criterion.
pub fn reward_field(belief: &BeliefMap, cfg: &MdpConfig, rng: &mut impl Rng) -> Vec<f64> {
    match cfg.reward {
        RewardKind::Ucb => belief
            .mean
            .iter()
            .zip(&belief.variance)
            .map(|(&m, &v)| ucb_reward(m, v, cfg.beta))
            .collect(),
        RewardKind::Mvi => {
            let maxima = sample_maxima(belief, cfg.mvi_samples.max(1), rng);
            belief
                .mean
                .iter()
                .zip(&belief.variance)
                .map(|(&m, &v)| mvi_reward(m, v, &maxima).expect("maxima sampled"))
                .collect()
        }
    }
}

/// Values within this relative distance count as tied.
pub const TIE_EPS: f64 = 1e-9;

pub fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

/// Reusable planner; keeps its memo table between calls.
#[derive(Clone, Debug)]
pub struct MdpPlanner {
    cfg: MdpConfig,
    rows: usize,
    cols: usize,
    memo_value: Vec<f64>,
    memo_stamp: Vec<u32>,
    stamp: u32,
    root: CellIndex,
    span: usize,
}

impl MdpPlanner {
    pub fn new(cfg: MdpConfig, rows: usize, cols: usize) -> Result<Self, MdpError> {
        cfg.validate()?;
        let span = 2 * cfg.lookahead + 1;
        let size = span * span * 8 * (cfg.lookahead + 1);
        Ok(MdpPlanner {
            cfg,
            rows,
            cols,
            memo_value: vec![0.0; size],
            memo_stamp: vec![0; size],
            stamp: 0,
            root: CellIndex::new(0, 0),
            span,
        })
    }

    pub fn config(&self) -> &MdpConfig {
        &self.cfg
    }

    fn slot(&self, s: MdpState, depth: usize) -> usize {
        let l = self.cfg.lookahead;
        let dr = s.cell.row + l - self.root.row;
        let dc = s.cell.col + l - self.root.col;
        ((dr * self.span + dc) * 8 + s.heading.index()) * (l + 1) + depth
    }

    /// Expected reward of choosing `intended` among `succ`, with `depth`
    /// further cells to plan after the move.
    fn q_value(&mut self, succ: &Successors, intended: usize, rewards: &[f64], depth: usize) -> f64 {
        let p = transition(succ.len(), intended, self.cfg.p_a);
        let mut q = 0.0;
        for (k, &s2) in succ.as_slice().iter().enumerate() {
            if p[k] == 0.0 {
                continue;
            }
            let r = rewards[s2.cell.row * self.cols + s2.cell.col];
            q += p[k] * (r + self.value(s2, rewards, depth));
        }
        q
    }

    /// Best expected summed reward over the next `depth` cells from `s`.
    fn value(&mut self, s: MdpState, rewards: &[f64], depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        let slot = self.slot(s, depth);
        if self.memo_stamp[slot] == self.stamp {
            return self.memo_value[slot];
        }
        let succ = planning_actions(s, self.rows, self.cols);
        let mut best = f64::NEG_INFINITY;
        for a in 0..succ.len() {
            best = best.max(self.q_value(&succ, a, rewards, depth - 1));
        }
        let v = if succ.is_empty() { 0.0 } else { best };
        self.memo_stamp[slot] = self.stamp;
        self.memo_value[slot] = v;
        v
    }

    /// Q-value of every planning action at `s`, in ahead, left, right order.
    pub fn q_values(&mut self, s: MdpState, rewards: &[f64]) -> Vec<(MdpState, f64)> {
        assert_eq!(rewards.len(), self.rows * self.cols, "reward field size");
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.memo_stamp.iter_mut().for_each(|x| *x = 0);
            self.stamp = 1;
        }
        self.root = s.cell;
        let succ = planning_actions(s, self.rows, self.cols);
        let depth = self.cfg.lookahead - 1;
        (0..succ.len())
            .map(|a| (succ.as_slice()[a], self.q_value(&succ, a, rewards, depth)))
            .collect()
    }

    /// Intended next state, or `None` on a grid with nowhere to go. Ties go
    /// to the earlier action (ahead, then left, then right).
    pub fn plan(&mut self, s: MdpState, rewards: &[f64]) -> Option<MdpState> {
        let q = self.q_values(s, rewards);
        let mut best: Option<(MdpState, f64)> = None;
        for (s2, v) in q {
            match best {
                Some((_, bv)) if v <= bv || nearly_equal(v, bv) => {}
                _ => best = Some((s2, v)),
            }
        }
        best.map(|(s2, _)| s2)
    }
}

pub fn plan_action(
    s: MdpState,
    rewards: &[f64],
    rows: usize,
    cols: usize,
    cfg: &MdpConfig,
) -> Result<Option<MdpState>, MdpError> {
    Ok(MdpPlanner::new(*cfg, rows, cols)?.plan(s, rewards))
}

/// Sample where a move actually lands given the intended one.
pub fn sample_outcome(
    succ: &Successors,
    intended: usize,
    p_a: f64,
    rng: &mut impl Rng,
) -> MdpState {
    let p = transition(succ.len(), intended, p_a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &s2) in succ.as_slice().iter().enumerate() {
        acc += p[k];
        if u < acc {
            return s2;
        }
    }
    succ.as_slice()[succ.len() - 1]
}
