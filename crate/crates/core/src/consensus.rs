//! Modified decentralized Kalman consensus over a communication graph.
//!
//! Each round, agent `i` fuses its neighbors' estimates:
//!
//! ```text
//! P_i' = ( [P_i + Q]^-1 + sum_j g_ij [mu_j P_j]^-1 )^-1
//! z_i' = z_i + P_i' sum_j g_ij [mu_j P_j]^-1 (z_j - z_i)
//! mu_j = sum_{k != j} g_kj
//! ```
//!
//! Agents exchange only mean and variance vectors. Covariances are
//! assembled on receipt as `P[a,b] = k(x_a, x_b) sqrt(s_a s_b)`, either over
//! the whole grid or over independent rectangular tiles.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpr::{BeliefMap, KernelConfig};
use crate::grid::GridGeometry;
use crate::linalg::{self, LinalgError};
use crate::math;

/// Agents exchange beliefs; the fused state has the same shape.
pub type ConsensusState = BeliefMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("agent {agent} state has {found} cells, expected {expected}")]
    DimensionMismatch {
        agent: usize,
        expected: usize,
        found: usize,
    },
    #[error("graph has {found} agents, states have {expected}")]
    GraphSize { expected: usize, found: usize },
    #[error("agent {agent}: covariance inversion failed: {source}")]
    Singular {
        agent: usize,
        #[source]
        source: LinalgError,
    },
    #[error("invalid consensus config field `{0}`")]
    InvalidConfig(&'static str),
}

/// Symmetric adjacency without self loops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    n: usize,
    adj: Vec<bool>,
}

impl CommGraph {
    pub fn empty(n: usize) -> Self {
        CommGraph {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.adj[i * n + j] = true;
                }
            }
        }
        g
    }

    /// Path graph 0 - 1 - ... - (n-1).
    pub fn line(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 1..n {
            g.set(i - 1, i, true);
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.set(a, b, true);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Set an undirected edge. Self loops are ignored.
    pub fn set(&mut self, a: usize, b: usize, on: bool) {
        assert!(a < self.n && b < self.n, "agent index out of range");
        if a != b {
            self.adj[a * self.n + b] = on;
            self.adj[b * self.n + a] = on;
        }
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.n + b]
    }

    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&b| self.connected(a, b))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count() / 2
    }

    /// Connected components as sorted member lists, ordered by first member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            label[s] = id;
            let mut head = 0;
            while head < members.len() {
                let a = members[head];
                head += 1;
                for b in 0..self.n {
                    if self.connected(a, b) && label[b] == usize::MAX {
                        label[b] = id;
                        members.push(b);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Number of agents `j` hears from.
pub fn degree_factor(g: &CommGraph, j: usize) -> usize {
    (0..g.len()).filter(|&k| k != j && g.connected(k, j)).count()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    /// Full covariance up to [`FULL_COVARIANCE_MAX_CELLS`], tiles above.
    #[default]
    Auto,
    Full,
    Tiled { tile_rows: usize, tile_cols: usize },
}

pub const FULL_COVARIANCE_MAX_CELLS: usize = 1024;
const AUTO_TILE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    /// Diagonal process noise added per round to agents with no neighbors.
    pub process_noise_ft2: f64,
    pub max_rounds: usize,
    pub tolerance_ft: f64,
    pub partition: Partition,
    pub kernel: KernelConfig,
    pub jitter: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            process_noise_ft2: 0.01,
            max_rounds: 20,
            tolerance_ft: 0.05,
            partition: Partition::Auto,
            kernel: KernelConfig::default(),
            jitter: 1e-9,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        if !(self.process_noise_ft2.is_finite() && self.process_noise_ft2 >= 0.0) {
            return Err(ConsensusError::InvalidConfig("process_noise_ft2"));
        }
        if self.max_rounds == 0 {
            return Err(ConsensusError::InvalidConfig("max_rounds"));
        }
        if !(self.tolerance_ft.is_finite() && self.tolerance_ft >= 0.0) {
            return Err(ConsensusError::InvalidConfig("tolerance_ft"));
        }
        if let Partition::Tiled { tile_rows, tile_cols } = self.partition {
            if tile_rows == 0 || tile_cols == 0 {
                return Err(ConsensusError::InvalidConfig("partition"));
            }
        }
        self.kernel
            .validate()
            .map_err(|_| ConsensusError::InvalidConfig("kernel"))
    }
}

#[derive(Clone, Debug)]
struct Tile {
    cells: Vec<usize>,
    /// Kernel matrix between the tile's cell centers.
    kernel: Vec<f64>,
}

/// Fusion engine for one grid. Holds the precomputed kernel blocks.
#[derive(Clone, Debug)]
pub struct Consensus {
    cfg: ConsensusConfig,
    m: usize,
    tiles: Vec<Tile>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentStatus {
    pub members: Vec<usize>,
    /// Largest pairwise mean difference in feet over any cell.
    pub disagreement_ft: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusOutcome {
    pub states: Vec<ConsensusState>,
    pub rounds: usize,
    pub components: Vec<ComponentStatus>,
}

impl ConsensusOutcome {
    /// Every component agrees internally.
    pub fn within_components_converged(&self) -> bool {
        self.components.iter().all(|c| c.converged)
    }

    /// A single component that agrees; false whenever the group is split.
    pub fn converged(&self) -> bool {
        self.components.len() <= 1 && self.within_components_converged()
    }
}

impl Consensus {
    pub fn new(geometry: &GridGeometry, cfg: ConsensusConfig) -> Result<Self, ConsensusError> {
        cfg.validate()?;
        let m = geometry.len();
        let (tr, tc) = match cfg.partition {
            Partition::Full => (geometry.rows, geometry.cols),
            Partition::Auto if m <= FULL_COVARIANCE_MAX_CELLS => (geometry.rows, geometry.cols),
            Partition::Auto => (AUTO_TILE, AUTO_TILE),
            Partition::Tiled { tile_rows, tile_cols } => (tile_rows, tile_cols),
        };
        let mut tiles = Vec::new();
        for r0 in (0..geometry.rows).step_by(tr) {
            for c0 in (0..geometry.cols).step_by(tc) {
                let mut cells = Vec::new();
                for r in r0..(r0 + tr).min(geometry.rows) {
                    for c in c0..(c0 + tc).min(geometry.cols) {
                        cells.push(r * geometry.cols + c);
                    }
                }
                let k = cells.len();
                let mut kernel = vec![0.0; k * k];
                for a in 0..k {
                    for b in 0..k {
                        kernel[a * k + b] = cfg.kernel.eval_dist(
                            geometry
                                .local_center_flat(cells[a])
                                .dist(geometry.local_center_flat(cells[b])),
                        );
                    }
                }
                tiles.push(Tile { cells, kernel });
            }
        }
        Ok(Consensus { cfg, m, tiles })
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.cfg
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    fn assemble(&self, tile: &Tile, variance: &[f64]) -> Vec<f64> {
        let k = tile.cells.len();
        let s: Vec<f64> = tile
            .cells
            .iter()
            .map(|&c| math::sqrt(variance[c].max(0.0)))
            .collect();
        let mut p = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                p[a * k + b] = tile.kernel[a * k + b] * s[a] * s[b];
            }
        }
        p
    }

    /// Full assembled covariance of a state (dense, `m x m`, zero across
    /// tiles).
    pub fn covariance(&self, state: &ConsensusState) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.m];
        for tile in &self.tiles {
            let p = self.assemble(tile, &state.variance);
            let k = tile.cells.len();
            for a in 0..k {
                for b in 0..k {
                    out[tile.cells[a] * self.m + tile.cells[b]] = p[a * k + b];
                }
            }
        }
        out
    }

    fn check(&self, states: &[ConsensusState], g: &CommGraph) -> Result<(), ConsensusError> {
        if g.len() != states.len() {
            return Err(ConsensusError::GraphSize {
                expected: states.len(),
                found: g.len(),
            });
        }
        for (agent, s) in states.iter().enumerate() {
            for found in [s.mean.len(), s.variance.len()] {
                if found != self.m {
                    return Err(ConsensusError::DimensionMismatch {
                        agent,
                        expected: self.m,
                        found,
                    });
                }
            }
        }
        Ok(())
    }

    /// One synchronous round: every agent reads round-`t` states only.
    pub fn round(
        &self,
        states: &[ConsensusState],
        g: &CommGraph,
    ) -> Result<Vec<ConsensusState>, ConsensusError> {
        self.check(states, g)?;
        let n = states.len();
        let q = self.cfg.process_noise_ft2;
        let mu: Vec<usize> = (0..n).map(|j| degree_factor(g, j)).collect();
        let mut next: Vec<ConsensusState> = states.to_vec();

        for i in 0..n {
            if g.neighbors(i).next().is_none() {
                for v in &mut next[i].variance {
                    *v += q;
                }
                next[i].unobserved_variance += q;
            }
        }

        // Per tile, invert every connected agent's block once and share it.
        let active: Vec<bool> = (0..n).map(|i| mu[i] > 0).collect();
        for tile in &self.tiles {
            let k = tile.cells.len();
            let mut inverses: Vec<Option<Vec<f64>>> = vec![None; n];
            for j in 0..n {
                if active[j] {
                    let p = self.assemble(tile, &states[j].variance);
                    let inv = linalg::spd_inverse(&p, k, self.cfg.jitter)
                        .map_err(|source| ConsensusError::Singular { agent: j, source })?;
                    inverses[j] = Some(inv);
                }
            }
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                let mut info = inverses[i].clone().expect("active agent has an inverse");
                let mut delta = vec![0.0; k];
                for j in g.neighbors(i) {
                    let inv_j = inverses[j].as_ref().expect("neighbor is active");
                    let scale = 1.0 / mu[j] as f64;
                    let diff: Vec<f64> = tile
                        .cells
                        .iter()
                        .map(|&c| states[j].mean[c] - states[i].mean[c])
                        .collect();
                    for a in 0..k {
                        let mut acc = 0.0;
                        for b in 0..k {
                            let w = inv_j[a * k + b] * scale;
                            info[a * k + b] += w;
                            acc += w * diff[b];
                        }
                        delta[a] += acc;
                    }
                }
                let mut p_next = linalg::spd_inverse(&info, k, self.cfg.jitter)
                    .map_err(|source| ConsensusError::Singular { agent: i, source })?;
                linalg::symmetrize(&mut p_next, k);
                for a in 0..k {
                    let c = tile.cells[a];
                    let step: f64 = (0..k).map(|b| p_next[a * k + b] * delta[b]).sum();
                    next[i].mean[c] = states[i].mean[c] + step;
                    next[i].variance[c] = p_next[a * k + a].max(0.0);
                }
            }
        }

        for i in 0..n {
            if active[i] {
                let u = &states[i].unobserved_variance;
                let mut info = 1.0 / u;
                for j in g.neighbors(i) {
                    info += 1.0 / (mu[j] as f64 * states[j].unobserved_variance);
                }
                next[i].unobserved_variance = 1.0 / info;
            }
        }
        Ok(next)
    }

    /// Iterate rounds on a fixed graph until every component agrees to
    /// within the tolerance or the round budget runs out.
    pub fn run(
        &self,
        states: &[ConsensusState],
        g: &CommGraph,
    ) -> Result<ConsensusOutcome, ConsensusError> {
        self.run_dynamic(states, |_| g.clone())
    }

    /// As [`Consensus::run`], with the graph for each round supplied by
    /// `graph_for_round`. Convergence is judged on the last round's graph.
    pub fn run_dynamic(
        &self,
        states: &[ConsensusState],
        mut graph_for_round: impl FnMut(usize) -> CommGraph,
    ) -> Result<ConsensusOutcome, ConsensusError> {
        let mut cur = states.to_vec();
        let mut rounds = 0;
        loop {
            let g = graph_for_round(rounds);
            cur = self.round(&cur, &g)?;
            rounds += 1;
            let components = self.status(&cur, &g);
            let done = components.iter().all(|c| c.converged);
            if done || rounds >= self.cfg.max_rounds {
                return Ok(ConsensusOutcome {
                    states: cur,
                    rounds,
                    components,
                });
            }
        }
    }

    fn status(&self, states: &[ConsensusState], g: &CommGraph) -> Vec<ComponentStatus> {
        g.components()
            .into_iter()
            .map(|members| {
                let d = disagreement(states, &members);
                ComponentStatus {
                    converged: d < self.cfg.tolerance_ft,
                    disagreement_ft: d,
                    members,
                }
            })
            .collect()
    }
}

/// Largest `|z_a[c] - z_b[c]|` over member pairs and cells.
pub fn disagreement(states: &[ConsensusState], members: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    if let Some((&first, rest)) = members.split_first() {
        let m = states[first].mean.len();
        for c in 0..m {
            let mut lo = states[first].mean[c];
            let mut hi = lo;
            for &a in rest {
                lo = lo.min(states[a].mean[c]);
                hi = hi.max(states[a].mean[c]);
            }
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// One round over freshly assembled covariances. See [`Consensus::round`].
pub fn consensus_round(
    states: &[ConsensusState],
    g: &CommGraph,
    geometry: &GridGeometry,
    cfg: &ConsensusConfig,
) -> Result<Vec<ConsensusState>, ConsensusError> {
    Consensus::new(geometry, *cfg)?.round(states, g)
}

pub fn run_consensus(
    states: &[ConsensusState],
    g: &CommGraph,
    geometry: &GridGeometry,
    cfg: &ConsensusConfig,
) -> Result<ConsensusOutcome, ConsensusError> {
    Consensus::new(geometry, *cfg)?.run(states, g)
}
