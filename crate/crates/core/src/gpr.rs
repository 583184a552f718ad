//! Subset ("fast") Gaussian process regression over the grid.
//!
//! Measurements are hashed by content into `k` buckets; each bucket keeps the
//! `N_s` members with the smallest hashes and runs an exact GP on them. The
//! per-bucket posteriors are combined per cell by precision weighting with a
//! prior correction, so a cell no bucket knows anything about keeps the prior
//! exactly. Because membership depends only on content, the result does not
//! depend on the order measurements arrive in, and a cache that ingested
//! data in batches is bit-identical to one fitted in a single pass.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridGeometry, Point};
use crate::linalg::{BorderedInverse, LinalgError};
use crate::math;
use crate::rng::hash_words;

pub const FEET_TO_METERS: f64 = 0.3048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GprError {
    #[error("measurement {index}: {reason}")]
    InvalidMeasurement { index: usize, reason: &'static str },
    #[error("invalid GPR config field `{0}`")]
    InvalidConfig(&'static str),
    #[error("subset {bucket} Gram matrix is not positive definite even with jitter: {source}")]
    NotPositiveDefinite {
        bucket: usize,
        #[source]
        source: LinalgError,
    },
    #[error("cache was built for a different grid or configuration")]
    ConfigMismatch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelForm {
    /// `exp(-d / (2 l^2))`, distance unsquared.
    #[default]
    Exponential,
    /// `exp(-d^2 / (2 l^2))`.
    SquaredExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub length_scale_ft: f64,
    pub form: KernelForm,
    /// Kernel values below this are treated as zero when predicting, which
    /// bounds each measurement's support. Zero keeps every cell.
    pub cutoff: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            length_scale_ft: 28.8,
            form: KernelForm::Exponential,
            cutoff: 0.0,
        }
    }
}

impl KernelConfig {
    pub fn squared_exponential() -> Self {
        KernelConfig {
            form: KernelForm::SquaredExponential,
            ..Default::default()
        }
    }

    pub fn length_scale_m(&self) -> f64 {
        self.length_scale_ft * FEET_TO_METERS
    }

    pub fn validate(&self) -> Result<(), GprError> {
        if !(self.length_scale_ft.is_finite() && self.length_scale_ft > 0.0) {
            return Err(GprError::InvalidConfig("length_scale_ft"));
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(GprError::InvalidConfig("cutoff"));
        }
        Ok(())
    }

    /// Kernel as a function of Euclidean distance in meters.
    pub fn eval_dist(&self, d: f64) -> f64 {
        let l = self.length_scale_m();
        match self.form {
            KernelForm::Exponential => math::exp(-d / (2.0 * l * l)),
            KernelForm::SquaredExponential => math::exp(-d * d / (2.0 * l * l)),
        }
    }

    /// Distance beyond which the kernel drops below `cutoff`.
    pub fn support_radius_m(&self) -> Option<f64> {
        if self.cutoff <= 0.0 {
            return None;
        }
        let l = self.length_scale_m();
        let t = -2.0 * l * l * math::ln(self.cutoff);
        Some(match self.form {
            KernelForm::Exponential => t,
            KernelForm::SquaredExponential => math::sqrt(t),
        })
    }
}

pub fn kernel(a: Point, b: Point, cfg: &KernelConfig) -> f64 {
    cfg.eval_dist(a.dist(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// World frame, meters.
    pub position: Point,
    pub depth_ft: f64,
    pub time_s: f64,
    pub agent_id: usize,
}

impl Measurement {
    fn validate(&self, index: usize) -> Result<(), GprError> {
        let bad = |reason| Err(GprError::InvalidMeasurement { index, reason });
        if !(self.position.x.is_finite() && self.position.y.is_finite()) {
            return bad("position must be finite");
        }
        if !(self.depth_ft.is_finite() && self.depth_ft > 0.0) {
            return bad("depth must be finite and > 0");
        }
        if !(self.time_s.is_finite() && self.time_s >= 0.0) {
            return bad("time must be finite and >= 0");
        }
        Ok(())
    }

    fn content_words(&self) -> [u64; 5] {
        [
            self.time_s.to_bits(),
            self.agent_id as u64,
            self.depth_ft.to_bits(),
            self.position.x.to_bits(),
            self.position.y.to_bits(),
        ]
    }

    /// Total order used inside a subset: time first, then content.
    fn chrono_cmp(&self, other: &Measurement) -> Ordering {
        self.time_s
            .total_cmp(&other.time_s)
            .then(self.agent_id.cmp(&other.agent_id))
            .then(self.depth_ft.total_cmp(&other.depth_ft))
            .then(self.position.x.total_cmp(&other.position.x))
            .then(self.position.y.total_cmp(&other.position.y))
    }
}

/// Per-cell depth estimate in feet and its variance in feet squared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefMap {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Variance a cell that nobody has observed would carry. Equals the
    /// prior after regression and follows the same fusion steps afterwards.
    pub unobserved_variance: f64,
}

impl BeliefMap {
    pub fn prior(m: usize, mean: f64, variance: f64) -> Self {
        BeliefMap {
            mean: vec![mean; m],
            variance: vec![variance; m],
            unobserved_variance: variance,
        }
    }

    /// The unobserved reference defaults to the largest variance present.
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        assert_eq!(mean.len(), variance.len(), "mean and variance lengths differ");
        let unobserved_variance = variance.iter().copied().fold(0.0, f64::max);
        BeliefMap {
            mean,
            variance,
            unobserved_variance,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastGprConfig {
    pub subset_count: usize,
    pub subset_size: usize,
    pub prior_mean_ft: f64,
    pub prior_variance_ft2: f64,
    pub noise_variance_ft2: f64,
    pub jitter: f64,
    /// Keys the content hash that assigns measurements to subsets.
    pub seed: u64,
}

impl Default for FastGprConfig {
    fn default() -> Self {
        FastGprConfig {
            subset_count: 4,
            subset_size: 64,
            prior_mean_ft: 16.0,
            prior_variance_ft2: 25.0,
            noise_variance_ft2: 0.04,
            jitter: 1e-6,
            seed: 0,
        }
    }
}

impl FastGprConfig {
    pub fn validate(&self) -> Result<(), GprError> {
        if self.subset_count == 0 {
            return Err(GprError::InvalidConfig("subset_count"));
        }
        if self.subset_size == 0 {
            return Err(GprError::InvalidConfig("subset_size"));
        }
        if !self.prior_mean_ft.is_finite() {
            return Err(GprError::InvalidConfig("prior_mean_ft"));
        }
        if !(self.prior_variance_ft2.is_finite() && self.prior_variance_ft2 > 0.0) {
            return Err(GprError::InvalidConfig("prior_variance_ft2"));
        }
        if !(self.noise_variance_ft2.is_finite() && self.noise_variance_ft2 >= 0.0) {
            return Err(GprError::InvalidConfig("noise_variance_ft2"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(GprError::InvalidConfig("jitter"));
        }
        Ok(())
    }
}

const MAX_JITTER_ESCALATIONS: usize = 6;
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Member {
    hash: u64,
    m: Measurement,
    local: Point,
}

#[derive(Clone, Debug, Default)]
struct Subset {
    members: Vec<Member>,
    inv: BorderedInverse,
    alpha: Vec<f64>,
    jitter: f64,
}

/// A running fast-GPR fit for one agent. Ingesting data updates each
/// affected subset's stored inverse in place where possible.
#[derive(Clone, Debug)]
pub struct FastGpr {
    geometry: GridGeometry,
    cfg: FastGprConfig,
    kcfg: KernelConfig,
    subsets: Vec<Subset>,
    ingested: usize,
}

impl FastGpr {
    pub fn new(
        geometry: GridGeometry,
        cfg: FastGprConfig,
        kcfg: KernelConfig,
    ) -> Result<Self, GprError> {
        cfg.validate()?;
        kcfg.validate()?;
        let subsets = (0..cfg.subset_count)
            .map(|_| Subset {
                jitter: cfg.jitter,
                ..Default::default()
            })
            .collect();
        Ok(FastGpr {
            geometry,
            cfg,
            kcfg,
            subsets,
            ingested: 0,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn config(&self) -> &FastGprConfig {
        &self.cfg
    }

    pub fn kernel_config(&self) -> &KernelConfig {
        &self.kcfg
    }

    /// Number of measurements seen, including those no subset kept.
    pub fn ingested(&self) -> usize {
        self.ingested
    }

    /// Number of measurements currently held by some subset.
    pub fn retained(&self) -> usize {
        self.subsets.iter().map(|s| s.members.len()).sum()
    }

    pub fn ensure_compatible(
        &self,
        geometry: &GridGeometry,
        cfg: &FastGprConfig,
        kcfg: &KernelConfig,
    ) -> Result<(), GprError> {
        if &self.geometry == geometry && &self.cfg == cfg && &self.kcfg == kcfg {
            Ok(())
        } else {
            Err(GprError::ConfigMismatch)
        }
    }

    fn covariance(&self, a: Point, b: Point) -> f64 {
        self.cfg.prior_variance_ft2 * kernel(a, b, &self.kcfg)
    }

    /// Add a batch. The batch is validated as a whole before any of it is
    /// applied.
    pub fn ingest(&mut self, batch: &[Measurement]) -> Result<(), GprError> {
        for (i, m) in batch.iter().enumerate() {
            m.validate(i)?;
        }
        let mut sorted: Vec<Measurement> = batch.to_vec();
        sorted.sort_by(|a, b| a.chrono_cmp(b));
        let k = self.cfg.subset_count as u64;
        let cap = self.cfg.subset_size;
        let mut touched = vec![false; self.subsets.len()];
        let mut rebuild = vec![false; self.subsets.len()];
        let mut appended: Vec<Vec<usize>> = vec![Vec::new(); self.subsets.len()];
        for m in sorted {
            self.ingested += 1;
            let hash = hash_words(self.cfg.seed, &m.content_words());
            let b = (hash % k) as usize;
            let subset = &mut self.subsets[b];
            let member = Member {
                hash,
                m,
                local: self.geometry.world_to_local(m.position),
            };
            if subset.members.len() == cap {
                let worst = subset
                    .members
                    .iter()
                    .enumerate()
                    .max_by(|(_, x), (_, y)| member_rank(x, y))
                    .map(|(i, _)| i)
                    .expect("subset is full");
                if member_rank(&member, &subset.members[worst]) != Ordering::Less {
                    continue;
                }
                subset.members.remove(worst);
                rebuild[b] = true;
            }
            let pos = subset
                .members
                .partition_point(|x| x.m.chrono_cmp(&member.m) != Ordering::Greater);
            if pos != subset.members.len() {
                rebuild[b] = true;
            }
            subset.members.insert(pos, member);
            touched[b] = true;
            appended[b].push(pos);
        }
        for b in 0..self.subsets.len() {
            if !touched[b] {
                continue;
            }
            if rebuild[b] {
                self.rebuild_subset(b)?;
            } else {
                let start = self.subsets[b].members.len() - appended[b].len();
                self.extend_subset(b, start)?;
            }
        }
        Ok(())
    }

    fn push_member(&mut self, b: usize, idx: usize) -> Result<(), LinalgError> {
        let s = &self.subsets[b];
        let p = s.members[idx].local;
        let row: Vec<f64> = s.members[..idx]
            .iter()
            .map(|x| self.covariance(x.local, p))
            .collect();
        let c = self.cfg.prior_variance_ft2 + self.cfg.noise_variance_ft2 + s.jitter;
        self.subsets[b].inv.push(&row, c)
    }

    fn extend_subset(&mut self, b: usize, start: usize) -> Result<(), GprError> {
        for idx in start..self.subsets[b].members.len() {
            if self.push_member(b, idx).is_err() {
                return self.rebuild_subset(b);
            }
        }
        self.refresh_alpha(b);
        Ok(())
    }

    /// Refactor a subset from its (sorted) members, starting at the base
    /// jitter and escalating tenfold while the Gram matrix is indefinite.
    fn rebuild_subset(&mut self, b: usize) -> Result<(), GprError> {
        let mut jitter = self.cfg.jitter;
        let mut last = None;
        for _ in 0..=MAX_JITTER_ESCALATIONS {
            self.subsets[b].jitter = jitter;
            self.subsets[b].inv.clear();
            let n = self.subsets[b].members.len();
            match (0..n).try_for_each(|i| self.push_member(b, i)) {
                Ok(()) => {
                    self.refresh_alpha(b);
                    return Ok(());
                }
                Err(e) => last = Some(e),
            }
            jitter = if jitter > 0.0 { jitter * 10.0 } else { 1e-9 };
        }
        Err(GprError::NotPositiveDefinite {
            bucket: b,
            source: last.expect("at least one attempt"),
        })
    }

    fn refresh_alpha(&mut self, b: usize) {
        let mu0 = self.cfg.prior_mean_ft;
        let s = &mut self.subsets[b];
        let n = s.members.len();
        let resid: Vec<f64> = s.members.iter().map(|x| x.m.depth_ft - mu0).collect();
        let inv = s.inv.as_slice();
        s.alpha = (0..n)
            .map(|i| (0..n).map(|j| inv[i * n + j] * resid[j]).sum())
            .collect();
    }

    /// Posterior belief at every cell center.
    pub fn predict(&self) -> BeliefMap {
        let g = &self.geometry;
        let m = g.len();
        let mu0 = self.cfg.prior_mean_ft;
        let v0 = self.cfg.prior_variance_ft2;
        let mut prec = vec![0.0; m];
        let mut num = vec![0.0; m];
        let mut touched = vec![false; m];
        let radius = self.kcfg.support_radius_m();
        let cutoff = self.kcfg.cutoff;
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();

        for s in &self.subsets {
            let n = s.members.len();
            if n == 0 {
                continue;
            }
            entries.clear();
            for (pi, mem) in s.members.iter().enumerate() {
                let (r0, r1, c0, c1) = cell_window(g, mem.local, radius);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        let flat = r * g.cols + c;
                        let kv = self.kcfg.eval_dist(mem.local.dist(g.local_center_flat(flat)));
                        if kv > cutoff {
                            entries.push((flat, pi, v0 * kv));
                        }
                    }
                }
            }
            entries.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            let inv = s.inv.as_slice();
            let mut i = 0;
            while i < entries.len() {
                let cell = entries[i].0;
                let mut j = i;
                while j < entries.len() && entries[j].0 == cell {
                    j += 1;
                }
                let group = &entries[i..j];
                let mut mean = mu0;
                let mut q = 0.0;
                for &(_, a, ka) in group {
                    mean += ka * s.alpha[a];
                    let mut row = 0.0;
                    for &(_, bb, kb) in group {
                        row += inv[a * n + bb] * kb;
                    }
                    q += ka * row;
                }
                let var = (v0 - q).clamp(VARIANCE_FLOOR, v0);
                prec[cell] += 1.0 / var - 1.0 / v0;
                num[cell] += mean / var - mu0 / v0;
                touched[cell] = true;
                i = j;
            }
        }

        let mut belief = BeliefMap::prior(m, mu0, v0);
        for c in 0..m {
            if touched[c] {
                let p = 1.0 / v0 + prec[c];
                belief.mean[c] = (mu0 / v0 + num[c]) / p;
                belief.variance[c] = (1.0 / p).min(v0);
            }
        }
        belief
    }
}

fn member_rank(a: &Member, b: &Member) -> Ordering {
    a.hash.cmp(&b.hash).then(a.m.chrono_cmp(&b.m))
}

/// Inclusive row/col bounds of the cells whose centers may lie within
/// `radius` of `p`.
fn cell_window(g: &GridGeometry, p: Point, radius: Option<f64>) -> (usize, usize, usize, usize) {
    match radius {
        None => (0, g.rows - 1, 0, g.cols - 1),
        Some(r) => {
            let s = g.cell_size_m;
            let lo = |v: f64, n: usize| {
                let i = math::floor((v - r) / s - 0.5);
                if i <= 0.0 { 0 } else { (i as usize).min(n - 1) }
            };
            let hi = |v: f64, n: usize| {
                let i = math::ceil((v + r) / s - 0.5);
                if i <= 0.0 { 0 } else { (i as usize).min(n - 1) }
            };
            (lo(p.y, g.rows), hi(p.y, g.rows), lo(p.x, g.cols), hi(p.x, g.cols))
        }
    }
}

/// One-shot fit of `measurements`, equal to ingesting them into a fresh
/// [`FastGpr`] and predicting.
pub fn fit_predict(
    measurements: &[Measurement],
    geometry: &GridGeometry,
    cfg: &FastGprConfig,
    kcfg: &KernelConfig,
) -> Result<BeliefMap, GprError> {
    let mut gpr = FastGpr::new(geometry.clone(), *cfg, *kcfg)?;
    gpr.ingest(measurements)?;
    Ok(gpr.predict())
}

/// Add a batch to a running fit. Empty batches leave the cache untouched.
pub fn incremental_update(cache: &mut FastGpr, batch: &[Measurement]) -> Result<(), GprError> {
    cache.ingest(batch)
}
