//! Grid geometry: cell indexing, the grid/world frame boundary, and cell
//! adjacency.
//!
//! All planning happens in the *grid frame*: meters measured from the grid
//! corner, `x` along columns and `y` along rows (row 0 at `y = 0`). The
//! world frame adds the grid's tilt and origin and is only used where
//! measurements are stamped with a position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        math::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        CellIndex { row, col }
    }

    /// Chebyshev (king-move) distance.
    pub fn chebyshev(self, other: CellIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

const OFFSETS_8: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

const OFFSETS_4: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &OFFSETS_4,
            Connectivity::Eight => &OFFSETS_8,
        }
    }

    /// Lower bound on the number of steps between two cells.
    pub fn step_distance(self, a: CellIndex, b: CellIndex) -> usize {
        let dr = a.row.abs_diff(b.row);
        let dc = a.col.abs_diff(b.col);
        match self {
            Connectivity::Four => dr + dc,
            Connectivity::Eight => dr.max(dc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("cell ({row}, {col}) outside {rows}x{cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid grid field `{0}`")]
    InvalidField(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    /// Tilt of the grid's column axis against world x, counter-clockwise.
    pub rotation_deg: f64,
    pub origin_m: Point,
}

impl GridGeometry {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size_m: f64,
        rotation_deg: f64,
        origin_m: Point,
    ) -> Result<Self, GridError> {
        if rows == 0 {
            return Err(GridError::InvalidField("rows"));
        }
        if cols == 0 {
            return Err(GridError::InvalidField("cols"));
        }
        if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
            return Err(GridError::InvalidField("cell_size_m"));
        }
        if !rotation_deg.is_finite() {
            return Err(GridError::InvalidField("rotation_deg"));
        }
        if !(origin_m.x.is_finite() && origin_m.y.is_finite()) {
            return Err(GridError::InvalidField("origin_m"));
        }
        Ok(GridGeometry {
            rows,
            cols,
            cell_size_m,
            rotation_deg,
            origin_m,
        })
    }

    /// Untilted grid at the origin.
    pub fn axis_aligned(rows: usize, cols: usize, cell_size_m: f64) -> Result<Self, GridError> {
        Self::new(rows, cols, cell_size_m, 0.0, Point::default())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.cell_size_m
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.cell_size_m
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    pub fn flat(&self, c: CellIndex) -> usize {
        debug_assert!(self.contains(c));
        c.row * self.cols + c.col
    }

    pub fn cell(&self, flat: usize) -> CellIndex {
        debug_assert!(flat < self.len());
        CellIndex::new(flat / self.cols, flat % self.cols)
    }

    fn check(&self, c: CellIndex) -> Result<(), GridError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(GridError::OutOfBounds {
                row: c.row,
                col: c.col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// Cell center in the grid frame.
    pub fn local_center(&self, c: CellIndex) -> Point {
        Point::new(
            (c.col as f64 + 0.5) * self.cell_size_m,
            (c.row as f64 + 0.5) * self.cell_size_m,
        )
    }

    pub fn local_center_flat(&self, flat: usize) -> Point {
        self.local_center(self.cell(flat))
    }

    pub fn local_to_world(&self, p: Point) -> Point {
        let theta = self.rotation_deg.to_radians();
        let (s, c) = (math::sin(theta), math::cos(theta));
        Point::new(
            self.origin_m.x + c * p.x - s * p.y,
            self.origin_m.y + s * p.x + c * p.y,
        )
    }

    pub fn world_to_local(&self, p: Point) -> Point {
        let theta = self.rotation_deg.to_radians();
        let (s, c) = (math::sin(theta), math::cos(theta));
        let dx = p.x - self.origin_m.x;
        let dy = p.y - self.origin_m.y;
        Point::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// World position of a cell center.
    pub fn cell_center(&self, c: CellIndex) -> Result<Point, GridError> {
        self.check(c)?;
        Ok(self.local_to_world(self.local_center(c)))
    }

    pub fn local_to_cell(&self, p: Point) -> Option<CellIndex> {
        if !(p.x.is_finite() && p.y.is_finite()) || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let col = math::floor(p.x / self.cell_size_m) as usize;
        let row = math::floor(p.y / self.cell_size_m) as usize;
        let c = CellIndex::new(row, col);
        self.contains(c).then_some(c)
    }

    /// Cell containing a world position, if any.
    pub fn position_to_cell(&self, world: Point) -> Option<CellIndex> {
        self.local_to_cell(self.world_to_local(world))
    }

    pub fn offset(&self, c: CellIndex, dr: isize, dc: isize) -> Option<CellIndex> {
        let row = c.row.checked_add_signed(dr)?;
        let col = c.col.checked_add_signed(dc)?;
        let n = CellIndex::new(row, col);
        self.contains(n).then_some(n)
    }

    pub fn neighbors(
        &self,
        c: CellIndex,
        conn: Connectivity,
    ) -> impl Iterator<Item = CellIndex> + '_ {
        conn.offsets()
            .iter()
            .filter_map(move |&(dr, dc)| self.offset(c, dr, dc))
    }
}
