//! First-order waypoint pursuit.

use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::Point;
use crate::math;
use crate::mdp::Heading;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VehicleMode {
    Sweep,
    PathExplore,
    /// Myopic MDP surveying, standalone or as the channel-search fallback.
    Mdp,
    Lawnmower,
    Done,
}

/// Pose in the grid frame. Waypoints are grid-frame points.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub position: Point,
    /// Direction of travel, radians from the grid x axis toward +y.
    pub heading_rad: f64,
    pub speed: f64,
    pub mode: VehicleMode,
    pub waypoints: VecDeque<Point>,
}

impl VehicleState {
    pub fn new(position: Point, heading_rad: f64, speed: f64, mode: VehicleMode) -> Self {
        VehicleState {
            position,
            heading_rad,
            speed,
            mode,
            waypoints: VecDeque::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Nearest of the eight grid headings. Row index grows with y, so a
    /// heading of +pi/2 is south.
    pub fn grid_heading(&self) -> Heading {
        heading_from_angle(self.heading_rad)
    }
}

pub fn heading_from_angle(rad: f64) -> Heading {
    // Snap to the nearest octant; its sin/cos round to the grid offset.
    let a = math::round(rad / core::f64::consts::FRAC_PI_4) * core::f64::consts::FRAC_PI_4;
    let dr = math::round(math::sin(a)) as isize;
    let dc = math::round(math::cos(a)) as isize;
    Heading::from_offset(dr, dc).unwrap_or(Heading::N)
}

pub fn angle_of_heading(h: Heading) -> f64 {
    let (dr, dc) = h.offset();
    math::atan2(dr as f64, dc as f64)
}

/// Advance one tick: move up to `speed * dt` toward the active waypoint,
/// stopping on it, and pop it once within `tolerance`. Motion does not
/// carry over to the next waypoint within the same tick. Returns the
/// distance moved.
pub fn step_vehicle(v: &mut VehicleState, dt: f64, tolerance: f64) -> f64 {
    let Some(&target) = v.waypoints.front() else {
        return 0.0;
    };
    let dx = target.x - v.position.x;
    let dy = target.y - v.position.y;
    let d = math::hypot(dx, dy);
    let step = (v.speed * dt).min(d);
    if d > 0.0 {
        v.position = Point::new(v.position.x + dx / d * step, v.position.y + dy / d * step);
        v.heading_rad = math::atan2(dy, dx);
    }
    if d - step <= tolerance {
        v.waypoints.pop_front();
    }
    step
}
