//! Independent reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use chansearch_core::gpr::{kernel, KernelConfig, Measurement};
use chansearch_core::grid::Point;
use chansearch_core::mdp::{Heading, MdpState, TIE_EPS};
use chansearch_core::CellIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KING: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Cell count of the shortest 8-connected path, by breadth-first search.
pub fn bfs_len(rows: usize, cols: usize, blocked: &[bool], starts: &[usize], goals: &[usize]) -> Option<usize> {
    let mut dist = vec![usize::MAX; rows * cols];
    let mut q = VecDeque::new();
    for &s in starts {
        if !blocked[s] && dist[s] == usize::MAX {
            dist[s] = 1;
            q.push_back(s);
        }
    }
    while let Some(c) = q.pop_front() {
        if goals.contains(&c) {
            return Some(dist[c]);
        }
        let (r, col) = ((c / cols) as isize, (c % cols) as isize);
        for (dr, dc) in KING {
            let (nr, nc) = (r + dr, col + dc);
            if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                continue;
            }
            let n = nr as usize * cols + nc as usize;
            if !blocked[n] && dist[n] == usize::MAX {
                dist[n] = dist[c] + 1;
                q.push_back(n);
            }
        }
    }
    None
}

/// Whether `path` is a valid 8-connected walk from a start to a goal that
/// avoids `blocked`.
pub fn valid_walk(cols: usize, blocked: &[bool], starts: &[usize], goals: &[usize], path: &[usize]) -> bool {
    let (Some(first), Some(last)) = (path.first(), path.last()) else {
        return false;
    };
    if !starts.contains(first) || !goals.contains(last) {
        return false;
    }
    path.iter().all(|&c| !blocked[c])
        && path.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            let dr = (a / cols).abs_diff(b / cols);
            let dc = (a % cols).abs_diff(b % cols);
            dr <= 1 && dc <= 1 && a != b
        })
}

pub struct RandomGrid {
    pub rows: usize,
    pub cols: usize,
    pub blocked: Vec<bool>,
    pub starts: Vec<usize>,
    pub goals: Vec<usize>,
}

pub fn random_grid(seed: u64) -> RandomGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(2..=8);
    let cols = rng.random_range(1..=8);
    let density: f64 = rng.random_range(0.0..0.5);
    let blocked: Vec<bool> = (0..rows * cols).map(|_| rng.random::<f64>() < density).collect();
    let starts: Vec<usize> = (0..cols).filter(|_| rng.random::<f64>() < 0.6).collect();
    let goals: Vec<usize> = (0..cols)
        .filter(|_| rng.random::<f64>() < 0.6)
        .map(|c| (rows - 1) * cols + c)
        .collect();
    let starts = if starts.is_empty() { vec![0] } else { starts };
    let goals = if goals.is_empty() { vec![rows * cols - 1] } else { goals };
    RandomGrid {
        rows,
        cols,
        blocked,
        starts,
        goals,
    }
}

fn heading_step(h: usize) -> (isize, isize) {
    [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)][h]
}

/// Ahead, ahead-left, ahead-right moves; if none, those of the first of
/// left quarter, right quarter and about-face that has any.
fn moves(r: usize, c: usize, h: usize, rows: usize, cols: usize) -> Vec<(usize, usize, usize)> {
    let raw = |h: usize| -> Vec<(usize, usize, usize)> {
        [0usize, 7, 1]
            .iter()
            .filter_map(|&t| {
                let h2 = (h + t) % 8;
                let (dr, dc) = heading_step(h2);
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                (nr >= 0 && nc >= 0 && nr < rows as isize && nc < cols as isize)
                    .then_some((nr as usize, nc as usize, h2))
            })
            .collect()
    };
    let m = raw(h);
    if !m.is_empty() {
        return m;
    }
    for t in [6, 2, 4] {
        let m = raw((h + t) % 8);
        if !m.is_empty() {
            return m;
        }
    }
    m
}

fn probs(n: usize, intended: usize, p_a: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| if k == intended { p_a } else { (1.0 - p_a) / (n - 1) as f64 })
        .collect()
}

fn expectimax_value(r: usize, c: usize, h: usize, rw: &[f64], rows: usize, cols: usize, depth: usize, p_a: f64) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let m = moves(r, c, h, rows, cols);
    if m.is_empty() {
        return 0.0;
    }
    (0..m.len())
        .map(|a| expectimax_q(&m, a, rw, rows, cols, depth - 1, p_a))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn expectimax_q(m: &[(usize, usize, usize)], a: usize, rw: &[f64], rows: usize, cols: usize, depth: usize, p_a: f64) -> f64 {
    probs(m.len(), a, p_a)
        .iter()
        .zip(m)
        .map(|(p, &(r, c, h))| p * (rw[r * cols + c] + expectimax_value(r, c, h, rw, rows, cols, depth, p_a)))
        .sum()
}

/// Brute-force expectimax choice over `lookahead` cells. Ties within the
/// relative tolerance go to the earliest of ahead, left, right.
pub fn expectimax_action(s: MdpState, rw: &[f64], rows: usize, cols: usize, lookahead: usize, p_a: f64) -> Option<MdpState> {
    let m = moves(s.cell.row, s.cell.col, s.heading.index(), rows, cols);
    let mut best: Option<(usize, f64)> = None;
    for a in 0..m.len() {
        let q = expectimax_q(&m, a, rw, rows, cols, lookahead - 1, p_a);
        let tie = |b: f64| (q - b).abs() <= TIE_EPS * q.abs().max(b.abs()).max(1.0);
        match best {
            Some((_, b)) if q <= b || tie(b) => {}
            _ => best = Some((a, q)),
        }
    }
    best.map(|(a, _)| {
        let (r, c, h) = m[a];
        MdpState::new(CellIndex::new(r, c), Heading::new(h as u8))
    })
}

/// Solve `a x = b` for a dense `n x n` system by Gaussian elimination with
/// partial pivoting; `b` holds `k` right-hand sides column-major.
pub fn solve(a: &[f64], n: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            for r in 0..k {
                x.swap(r * n + col, r * n + piv);
            }
        }
        let d = m[col * n + col];
        for i in (col + 1)..n {
            let f = m[i * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[i * n + j] -= f * m[col * n + j];
            }
            for r in 0..k {
                x[r * n + i] -= f * x[r * n + col];
            }
        }
    }
    for r in 0..k {
        for i in (0..n).rev() {
            let mut s = x[r * n + i];
            for j in (i + 1)..n {
                s -= m[i * n + j] * x[r * n + j];
            }
            x[r * n + i] = s / m[i * n + i];
        }
    }
    x
}

pub fn inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    // Columns of the identity solve to columns of the inverse; `a` is
    // symmetric in every use here so the layout transposes harmlessly.
    solve(a, n, &eye, n)
}

/// Exact GP posterior mean and variance at `targets`, all data at once.
pub fn full_gp(
    data: &[Measurement],
    targets: &[Point],
    kcfg: &KernelConfig,
    prior_mean: f64,
    prior_var: f64,
    noise_var: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = data.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = prior_var * kernel(data[i].position, data[j].position, kcfg);
        }
        k[i * n + i] += noise_var;
    }
    let y: Vec<f64> = data.iter().map(|m| m.depth_ft - prior_mean).collect();
    let alpha = solve(&k, n, &y, 1);
    let mut mean = Vec::with_capacity(targets.len());
    let mut var = Vec::with_capacity(targets.len());
    for &t in targets {
        let ks: Vec<f64> = data.iter().map(|m| prior_var * kernel(t, m.position, kcfg)).collect();
        mean.push(prior_mean + ks.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>());
        let v = solve(&k, n, &ks, 1);
        var.push(prior_var - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>());
    }
    (mean, var)
}

/// Two-estimate covariance-form fusion: z1 + P1 (P1 + P2)^-1 (z2 - z1).
pub fn kalman_fuse(z1: &[f64], p1: &[f64], z2: &[f64], p2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = z1.len();
    let s: Vec<f64> = p1.iter().zip(p2).map(|(a, b)| a + b).collect();
    let d: Vec<f64> = z2.iter().zip(z1).map(|(a, b)| a - b).collect();
    let w = solve(&s, n, &d, 1);
    let z = (0..n)
        .map(|i| z1[i] + (0..n).map(|j| p1[i * n + j] * w[j]).sum::<f64>())
        .collect();
    // P = P1 - P1 (P1 + P2)^-1 P1
    let x = solve(&s, n, p1, n);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = p1[i * n + j] - (0..n).map(|k| p1[i * n + k] * x[j * n + k]).sum::<f64>();
        }
    }
    (z, p)
}

/// Cells reachable from the starts through cells where `open` holds.
pub fn flood_fill(rows: usize, cols: usize, open: &[bool], starts: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; rows * cols];
    let mut q: VecDeque<usize> = starts.iter().copied().filter(|&s| open[s]).collect();
    for &s in &q {
        seen[s] = true;
    }
    while let Some(c) = q.pop_front() {
        let (r, col) = ((c / cols) as isize, (c % cols) as isize);
        for (dr, dc) in KING {
            let (nr, nc) = (r + dr, col + dc);
            if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                continue;
            }
            let n = nr as usize * cols + nc as usize;
            if open[n] && !seen[n] {
                seen[n] = true;
                q.push_back(n);
            }
        }
    }
    seen
}
