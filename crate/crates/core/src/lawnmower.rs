//! Boustrophedon coverage split into equal strips, one per vehicle.
//!
//! Lanes run along the columns, i.e. from the start edge toward the goal
//! edge. Each vehicle serpentines over a contiguous block of lanes, entering
//! its first lane at the start edge.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridGeometry, Point};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawnmowerError {
    #[error("field has {lanes} lanes, too narrow for {vehicles} vehicles")]
    FieldTooNarrow { lanes: usize, vehicles: usize },
    #[error("lane spacing {0} m must be positive and no wider than a cell")]
    InvalidSpacing(f64),
    #[error("need at least one vehicle")]
    NoVehicles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawnmowerPlan {
    pub spacing_m: f64,
    /// Lane x positions (grid frame) per vehicle, in visiting order.
    pub lanes: Vec<Vec<f64>>,
    /// Grid-frame waypoints per vehicle.
    pub waypoints: Vec<Vec<Point>>,
}

impl LawnmowerPlan {
    pub fn vehicles(&self) -> usize {
        self.waypoints.len()
    }

    pub fn path_length(&self, vehicle: usize) -> f64 {
        self.waypoints[vehicle]
            .windows(2)
            .map(|w| w[0].dist(w[1]))
            .sum()
    }

    pub fn total_length(&self) -> f64 {
        (0..self.vehicles()).map(|v| self.path_length(v)).sum()
    }
}

pub fn lane_count(geometry: &GridGeometry, spacing_m: f64) -> usize {
    // A lane every `spacing` from half a spacing in; the small slack keeps
    // exact divisions from producing an extra lane.
    math::ceil(geometry.width_m() / spacing_m - 1e-9) as usize
}

pub fn generate_lawnmower(
    geometry: &GridGeometry,
    n: usize,
    spacing_m: f64,
) -> Result<LawnmowerPlan, LawnmowerError> {
    if n == 0 {
        return Err(LawnmowerError::NoVehicles);
    }
    if !(spacing_m.is_finite() && spacing_m > 0.0 && spacing_m <= geometry.cell_size_m) {
        return Err(LawnmowerError::InvalidSpacing(spacing_m));
    }
    let total = lane_count(geometry, spacing_m);
    if total < n {
        return Err(LawnmowerError::FieldTooNarrow {
            lanes: total,
            vehicles: n,
        });
    }
    let width = geometry.width_m();
    let xs: Vec<f64> = (0..total)
        .map(|i| (spacing_m * (i as f64 + 0.5)).min(width - 1e-6))
        .collect();
    let top = 0.5 * geometry.cell_size_m;
    let bottom = geometry.height_m() - 0.5 * geometry.cell_size_m;

    let base = total / n;
    let extra = total % n;
    let mut lanes = Vec::with_capacity(n);
    let mut waypoints = Vec::with_capacity(n);
    let mut next = 0;
    for v in 0..n {
        let count = base + usize::from(v < extra);
        let strip: Vec<f64> = xs[next..next + count].to_vec();
        next += count;
        let mut wps = Vec::with_capacity(2 * count);
        for (j, &x) in strip.iter().enumerate() {
            let (a, b) = if j % 2 == 0 { (top, bottom) } else { (bottom, top) };
            wps.push(Point::new(x, a));
            if b != a {
                wps.push(Point::new(x, b));
            }
        }
        lanes.push(strip);
        waypoints.push(wps);
    }
    Ok(LawnmowerPlan {
        spacing_m,
        lanes,
        waypoints,
    })
}
