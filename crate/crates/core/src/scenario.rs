//! Ground-truth bathymetry scenarios: validated depth grids with start and
//! goal regions, mirroring, and a seeded channel generator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellIndex, GridError, GridGeometry, Point};
use crate::math;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("depths_ft has {found} entries, expected rows*cols = {expected}")]
    DepthCount { expected: usize, found: usize },
    #[error("depths_ft[{index}] = {value} must be finite and > 0")]
    InvalidDepth { index: usize, value: f64 },
    #[error("{field} must not be empty")]
    EmptyRegion { field: &'static str },
    #[error("{field} contains cell {index}, but the grid has {cells} cells")]
    CellOutOfRange {
        field: &'static str,
        index: usize,
        cells: usize,
    },
    #[error("overlapping regions: cell {cell} is in both start_cells and goal_cells")]
    OverlappingRegions { cell: usize },
    #[error("{rows}x{cols} grid is too small for a {shape} channel (needs at least {min_rows}x{min_cols})")]
    TooSmall {
        shape: ChannelShape,
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },
    #[error("invalid generator parameter `{0}`")]
    InvalidParameter(&'static str),
}

/// A validated ground-truth bathymetry grid. Construction goes through
/// [`BathyScenario::new`], so every instance satisfies the grid invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct BathyScenario {
    pub name: String,
    geometry: GridGeometry,
    depths_ft: Vec<f64>,
    start_cells: Vec<usize>,
    goal_cells: Vec<usize>,
}

impl BathyScenario {
    pub fn new(
        name: impl Into<String>,
        geometry: GridGeometry,
        depths_ft: Vec<f64>,
        start_cells: impl IntoIterator<Item = usize>,
        goal_cells: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ScenarioError> {
        let geometry = GridGeometry::new(
            geometry.rows,
            geometry.cols,
            geometry.cell_size_m,
            geometry.rotation_deg,
            geometry.origin_m,
        )?;
        let m = geometry.len();
        if depths_ft.len() != m {
            return Err(ScenarioError::DepthCount {
                expected: m,
                found: depths_ft.len(),
            });
        }
        if let Some((index, &value)) = depths_ft
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(ScenarioError::InvalidDepth { index, value });
        }
        let start = region("start_cells", start_cells, m)?;
        let goal = region("goal_cells", goal_cells, m)?;
        if let Some(&cell) = start.intersection(&goal).next() {
            return Err(ScenarioError::OverlappingRegions { cell });
        }
        Ok(BathyScenario {
            name: name.into(),
            geometry,
            depths_ft,
            start_cells: start.into_iter().collect(),
            goal_cells: goal.into_iter().collect(),
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn depths_ft(&self) -> &[f64] {
        &self.depths_ft
    }

    pub fn depth_at(&self, c: CellIndex) -> f64 {
        self.depths_ft[self.geometry.flat(c)]
    }

    /// Sorted, deduplicated flat indices.
    pub fn start_cells(&self) -> &[usize] {
        &self.start_cells
    }

    pub fn goal_cells(&self) -> &[usize] {
        &self.goal_cells
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }

    pub fn len(&self) -> usize {
        self.depths_ft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths_ft.is_empty()
    }

    pub fn depth_range(&self) -> (f64, f64) {
        self.depths_ft
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
                (lo.min(d), hi.max(d))
            })
    }

    /// Ground-truth depth under a grid-frame position.
    pub fn depth_at_local(&self, p: Point) -> Option<f64> {
        self.geometry.local_to_cell(p).map(|c| self.depth_at(c))
    }

    /// Mean row of a region, rounded. Start and goal regions lie along
    /// opposite row edges, so this is the region's transect row.
    pub fn region_row(cells: &[usize], cols: usize) -> usize {
        if cells.is_empty() {
            return 0;
        }
        let sum: usize = cells.iter().map(|&c| c / cols).sum();
        math::round(sum as f64 / cells.len() as f64) as usize
    }

    pub fn start_row(&self) -> usize {
        Self::region_row(&self.start_cells, self.cols())
    }

    pub fn goal_row(&self) -> usize {
        Self::region_row(&self.goal_cells, self.cols())
    }
}

fn region(
    field: &'static str,
    cells: impl IntoIterator<Item = usize>,
    m: usize,
) -> Result<BTreeSet<usize>, ScenarioError> {
    let set: BTreeSet<usize> = cells.into_iter().collect();
    if set.is_empty() {
        return Err(ScenarioError::EmptyRegion { field });
    }
    if let Some(&index) = set.iter().find(|&&i| i >= m) {
        return Err(ScenarioError::CellOutOfRange {
            field,
            index,
            cells: m,
        });
    }
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorAxis {
    /// Reflect columns (left/right).
    Horizontal,
    /// Reflect rows (top/bottom).
    Vertical,
}

/// Reflect a scenario about one axis. An involution; the name is kept.
pub fn mirror_scenario(s: &BathyScenario, axis: MirrorAxis) -> BathyScenario {
    let g = &s.geometry;
    let map = |flat: usize| {
        let c = g.cell(flat);
        let m = match axis {
            MirrorAxis::Horizontal => CellIndex::new(c.row, g.cols - 1 - c.col),
            MirrorAxis::Vertical => CellIndex::new(g.rows - 1 - c.row, c.col),
        };
        g.flat(m)
    };
    let mut depths = vec![0.0; s.len()];
    for (i, &d) in s.depths_ft.iter().enumerate() {
        depths[map(i)] = d;
    }
    let mut start: Vec<usize> = s.start_cells.iter().map(|&i| map(i)).collect();
    let mut goal: Vec<usize> = s.goal_cells.iter().map(|&i| map(i)).collect();
    start.sort_unstable();
    goal.sort_unstable();
    BathyScenario {
        name: s.name.clone(),
        geometry: g.clone(),
        depths_ft: depths,
        start_cells: start,
        goal_cells: goal,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelShape {
    Straight,
    Diagonal,
    SingleBend,
    DeadEnd,
}

impl ChannelShape {
    pub const ALL: [ChannelShape; 4] = [
        ChannelShape::Straight,
        ChannelShape::Diagonal,
        ChannelShape::SingleBend,
        ChannelShape::DeadEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelShape::Straight => "straight",
            ChannelShape::Diagonal => "diagonal",
            ChannelShape::SingleBend => "single-bend",
            ChannelShape::DeadEnd => "dead-end",
        }
    }
}

impl fmt::Display for ChannelShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ChannelShape {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelShape::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(ScenarioError::InvalidParameter("shape"))
    }
}

/// Parameters for [`generate_scenario`]. Lengths in cells unless noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub shape: ChannelShape,
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    pub rotation_deg: f64,
    pub channel_depth_ft: f64,
    pub background_depth_ft: f64,
    /// Amplitude of the smooth background texture.
    pub background_jitter_ft: f64,
    /// Cells within this distance of the centerline sit at channel depth.
    pub half_width_cells: f64,
    /// Width of the cosine falloff from channel to background depth.
    pub falloff_cells: f64,
    pub seed: u64,
}

impl Default for ChannelParams {
    /// A 500 m x 760 m field of 20 m cells, tilted 15 degrees.
    fn default() -> Self {
        ChannelParams {
            shape: ChannelShape::Straight,
            rows: 25,
            cols: 38,
            cell_size_m: 20.0,
            rotation_deg: 15.0,
            channel_depth_ft: 24.0,
            background_depth_ft: 8.0,
            background_jitter_ft: 2.0,
            half_width_cells: 1.5,
            falloff_cells: 1.5,
            seed: 0,
        }
    }
}

impl ChannelParams {
    pub fn with_shape(shape: ChannelShape, seed: u64) -> Self {
        ChannelParams {
            shape,
            seed,
            ..Default::default()
        }
    }

    fn margin(&self) -> f64 {
        self.half_width_cells + self.falloff_cells + 1.0
    }

    fn min_dims(&self) -> (usize, usize) {
        let m = math::ceil(self.margin()) as usize;
        match self.shape {
            ChannelShape::Straight => (2, 2 * m + 1),
            ChannelShape::Diagonal => (4, 2 * m + 4),
            ChannelShape::SingleBend => (6, 2 * m + 4),
            ChannelShape::DeadEnd => (2 * m + 3, 2 * m + 1),
        }
    }
}

/// Polyline in (row, col) cell coordinates; cell centers sit on integers.
fn centerline(p: &ChannelParams, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let rows = p.rows as f64;
    let cols = p.cols as f64;
    let margin = p.margin();
    let lo = margin;
    let hi = cols - 1.0 - margin;
    let pick = |rng: &mut dyn rand::RngCore, a: f64, b: f64| -> f64 {
        if b <= a {
            a
        } else {
            math::round(a + (b - a) * rng.random::<f64>())
        }
    };
    match p.shape {
        ChannelShape::Straight => {
            let c = pick(rng, lo, hi);
            vec![(-1.0, c), (rows, c)]
        }
        ChannelShape::Diagonal => {
            let a = pick(rng, lo, lo + (hi - lo) / 4.0);
            let b = pick(rng, hi - (hi - lo) / 4.0, hi);
            let slope = (b - a) / (rows - 1.0);
            vec![(-1.0, a - slope), (rows, b + slope)]
        }
        ChannelShape::SingleBend => {
            let a = pick(rng, lo, lo + (hi - lo) / 4.0);
            let b = pick(rng, hi - (hi - lo) / 4.0, hi);
            let bend = pick(rng, math::floor(rows * 0.35), math::floor(rows * 0.5));
            vec![(-1.0, a), (bend, a), (rows - 1.0, b), (rows, b)]
        }
        ChannelShape::DeadEnd => {
            let c = pick(rng, lo, hi);
            let end = math::floor(rows - 2.0 - margin).min(math::floor(rows * 0.65));
            vec![(-1.0, c), (end, c)]
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dr * dr + dc * dc;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dr + (p.1 - a.1) * dc) / len_sq).clamp(0.0, 1.0)
    };
    let (r, c) = (a.0 + t * dr, a.1 + t * dc);
    math::hypot(p.0 - r, p.1 - c)
}

/// Smooth value noise in [-1, 1] on a coarse lattice.
fn background_texture(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    const PITCH: usize = 4;
    let lr = rows / PITCH + 2;
    let lc = cols / PITCH + 2;
    let lattice: Vec<f64> = (0..lr * lc)
        .map(|_| 2.0 * rng.random::<f64>() - 1.0)
        .collect();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let fr = r as f64 / PITCH as f64;
            let fc = c as f64 / PITCH as f64;
            let (r0, c0) = (math::floor(fr) as usize, math::floor(fc) as usize);
            let (tr, tc) = (fr - r0 as f64, fc - c0 as f64);
            let v = |i: usize, j: usize| lattice[i * lc + j];
            let top = v(r0, c0) * (1.0 - tc) + v(r0, c0 + 1) * tc;
            let bot = v(r0 + 1, c0) * (1.0 - tc) + v(r0 + 1, c0 + 1) * tc;
            out.push(top * (1.0 - tr) + bot * tr);
        }
    }
    out
}

/// Generate a scenario with one deep channel region of the requested shape.
/// Start cells are the top row and goal cells the bottom row. The dead-end
/// shape's deep region stops short of the goal edge.
pub fn generate_scenario(p: &ChannelParams) -> Result<BathyScenario, ScenarioError> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(p.cell_size_m) {
        return Err(ScenarioError::InvalidParameter("cell_size_m"));
    }
    if !positive(p.background_depth_ft) || !positive(p.channel_depth_ft) {
        return Err(ScenarioError::InvalidParameter("depth"));
    }
    if !(p.background_jitter_ft >= 0.0)
        || p.background_depth_ft - p.background_jitter_ft <= 0.0
        || p.background_depth_ft + p.background_jitter_ft >= p.channel_depth_ft
    {
        return Err(ScenarioError::InvalidParameter("background_jitter_ft"));
    }
    if !(p.half_width_cells >= 0.0) || !positive(p.falloff_cells) {
        return Err(ScenarioError::InvalidParameter("half_width_cells"));
    }
    let (min_rows, min_cols) = p.min_dims();
    if p.rows < min_rows || p.cols < min_cols {
        return Err(ScenarioError::TooSmall {
            shape: p.shape,
            rows: p.rows,
            cols: p.cols,
            min_rows,
            min_cols,
        });
    }

    let mut rng = stream_rng(p.seed, Stream::Scenario);
    let line = centerline(p, &mut rng);
    let texture = background_texture(p.rows, p.cols, &mut rng);

    let mut depths = Vec::with_capacity(p.rows * p.cols);
    for r in 0..p.rows {
        for c in 0..p.cols {
            let cell = (r as f64, c as f64);
            let d = line
                .windows(2)
                .map(|w| segment_distance(cell, w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            let weight = if d <= p.half_width_cells {
                1.0
            } else if d >= p.half_width_cells + p.falloff_cells {
                0.0
            } else {
                let t = (d - p.half_width_cells) / p.falloff_cells;
                0.5 * (1.0 + math::cos(core::f64::consts::PI * t))
            };
            let bg = p.background_depth_ft + p.background_jitter_ft * texture[r * p.cols + c];
            depths.push(p.channel_depth_ft * weight + bg * (1.0 - weight));
        }
    }

    let geometry = GridGeometry::new(p.rows, p.cols, p.cell_size_m, p.rotation_deg, Point::default())?;
    let last = (p.rows - 1) * p.cols;
    BathyScenario::new(
        format!("{}-{}", p.shape, p.seed),
        geometry,
        depths,
        0..p.cols,
        last..last + p.cols,
    )
}

fn named(mut s: BathyScenario, name: &str) -> BathyScenario {
    s.name = String::from(name);
    s
}

fn shape_pair(shape: ChannelShape, seed: u64, label: &str) -> [BathyScenario; 2] {
    let s = generate_scenario(&ChannelParams::with_shape(shape, seed))
        .expect("default generator parameters are valid");
    let m = mirror_scenario(&s, MirrorAxis::Horizontal);
    [named(s, label), named(m, &format!("{label}-mirror"))]
}

/// Eight scenarios: straight, diagonal, single-bend and dead-end channels,
/// each with its left/right mirror.
pub fn channel_suite(seed: u64) -> Vec<BathyScenario> {
    ChannelShape::ALL
        .iter()
        .enumerate()
        .flat_map(|(i, &shape)| shape_pair(shape, seed.wrapping_add(i as u64), shape.as_str()))
        .collect()
}

/// Ten scenarios shaped like the standard evaluation: six layouts, four of
/// them also mirrored. Contains [`channel_suite`] for the same seed.
pub fn extended_suite(seed: u64) -> Vec<BathyScenario> {
    let mut out = channel_suite(seed);
    let extra = |shape: ChannelShape, k: u64, label: &str| {
        let s = generate_scenario(&ChannelParams::with_shape(shape, seed.wrapping_add(k)))
            .expect("default generator parameters are valid");
        named(s, label)
    };
    out.push(extra(ChannelShape::Straight, 100, "straight-2"));
    out.push(extra(ChannelShape::Diagonal, 101, "diagonal-2"));
    out
}
