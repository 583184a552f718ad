//! Summary tables over mission records.

use std::collections::BTreeMap;

use chansearch_core::{MissionRecord, PlannerKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    pub planner: PlannerKind,
    pub n: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeoutRow {
    pub planner: PlannerKind,
    pub n: usize,
    pub timeouts: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub planner: PlannerKind,
    pub n: usize,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Sorted ratios of the found missions, for box plots.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Found missions only; timed-out and failed missions are left out.
    pub durations: Vec<DurationRow>,
    /// Every mission that ran to completion, timed out or not.
    pub timeouts: Vec<TimeoutRow>,
    pub ratios: Vec<RatioRow>,
    /// Missions that ended in an internal error.
    pub errors: usize,
    pub records: usize,
}

/// Sum of values in sorted order, so the result does not depend on the
/// order records arrive in.
fn ordered_sum(sorted: &[f64]) -> f64 {
    // Neumaier summation.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in sorted {
        let t = sum + v;
        if f64::abs(sum) >= f64::abs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Default)]
struct Bucket {
    durations: Vec<f64>,
    ratios: Vec<f64>,
    timeouts: usize,
    total: usize,
}

pub fn aggregate(records: &[MissionRecord]) -> Summary {
    let mut buckets: BTreeMap<(PlannerKind, usize), Bucket> = BTreeMap::new();
    let mut errors = 0;
    for r in records {
        if r.error.is_some() {
            errors += 1;
            continue;
        }
        let b = buckets.entry((r.planner, r.n_vehicles)).or_default();
        b.total += 1;
        if r.timeout {
            b.timeouts += 1;
        }
        if r.found {
            b.durations.push(r.duration_s);
            b.ratios.push(r.time_on_path_ratio);
        }
    }
    let mut s = Summary {
        errors,
        records: records.len(),
        ..Summary::default()
    };
    for ((planner, n), mut b) in buckets {
        b.durations.sort_by(f64::total_cmp);
        b.ratios.sort_by(f64::total_cmp);
        s.timeouts.push(TimeoutRow {
            planner,
            n,
            timeouts: b.timeouts,
            total: b.total,
            fraction: b.timeouts as f64 / b.total as f64,
        });
        if let (Some(&min_s), Some(&max_s)) = (b.durations.first(), b.durations.last()) {
            s.durations.push(DurationRow {
                planner,
                n,
                mean_s: ordered_sum(&b.durations) / b.durations.len() as f64,
                min_s,
                max_s,
                count: b.durations.len(),
            });
        }
        if !b.ratios.is_empty() {
            s.ratios.push(RatioRow {
                planner,
                n,
                count: b.ratios.len(),
                min: b.ratios[0],
                q1: quantile(&b.ratios, 0.25),
                median: quantile(&b.ratios, 0.5),
                q3: quantile(&b.ratios, 0.75),
                max: b.ratios[b.ratios.len() - 1],
                values: b.ratios,
            });
        }
    }
    s
}
