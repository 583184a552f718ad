//! Single-beam depth sensing and per-cell thinning of raw samples.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::gpr::Measurement;
use crate::grid::Point;
use crate::scenario::BathyScenario;

/// Smallest depth the sensor will report, feet.
const MIN_REPORTED_DEPTH_FT: f64 = 0.01;

/// One noisy reading of the true depth under a grid-frame position, or
/// `None` off the field.
pub fn sample_depth(
    position: Point,
    time_s: f64,
    agent_id: usize,
    scenario: &BathyScenario,
    noise_sd_ft: f64,
    rng: &mut impl Rng,
) -> Option<Measurement> {
    let truth = scenario.depth_at_local(position)?;
    let noise = if noise_sd_ft > 0.0 {
        Normal::new(0.0, noise_sd_ft)
            .expect("finite positive standard deviation")
            .sample(rng)
    } else {
        0.0
    };
    Some(Measurement {
        position: scenario.geometry().local_to_world(position),
        depth_ft: (truth + noise).max(MIN_REPORTED_DEPTH_FT),
        time_s,
        agent_id,
    })
}

/// Averages raw readings per cell until flushed. Each flushed measurement
/// sits at its cell's center and carries the time of its last reading.
#[derive(Clone, Debug, Default)]
pub struct Thinner {
    bins: BTreeMap<usize, (f64, usize, f64)>,
    raw: usize,
}

impl Thinner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, cell: usize, depth_ft: f64, time_s: f64) {
        let e = self.bins.entry(cell).or_insert((0.0, 0, time_s));
        e.0 += depth_ft;
        e.1 += 1;
        e.2 = time_s;
        self.raw += 1;
    }

    /// Raw readings added since creation.
    pub fn raw_count(&self) -> usize {
        self.raw
    }

    pub fn pending_cells(&self) -> usize {
        self.bins.len()
    }

    pub fn flush(&mut self, scenario: &BathyScenario, agent_id: usize) -> Vec<Measurement> {
        let g = scenario.geometry();
        let out = self
            .bins
            .iter()
            .map(|(&cell, &(sum, n, t))| Measurement {
                position: g.local_to_world(g.local_center_flat(cell)),
                depth_ft: sum / n as f64,
                time_s: t,
                agent_id,
            })
            .collect();
        self.bins.clear();
        out
    }
}
