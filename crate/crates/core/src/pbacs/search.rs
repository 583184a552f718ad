//! Multi-start, multi-goal A* over a blocked/free grid with unit step cost.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::grid::{CellIndex, Connectivity};

/// Search problem over a `rows x cols` grid. `blocked[i]` marks cells the
/// path may not enter. `tie_cost`, if given, breaks ties between paths of
/// equal step count: the path with the smaller summed tie cost wins.
pub struct GridSearch<'a> {
    pub rows: usize,
    pub cols: usize,
    pub blocked: &'a [bool],
    pub tie_cost: Option<&'a [u32]>,
    pub connectivity: Connectivity,
}

impl GridSearch<'_> {
    fn cell(&self, flat: usize) -> CellIndex {
        CellIndex::new(flat / self.cols, flat % self.cols)
    }

    /// Heuristic table: fewest steps from each cell to the nearest goal
    /// ignoring obstacles. Consistent under unit costs.
    fn heuristic(&self, goals: &[usize]) -> Vec<u32> {
        let goal_cells: Vec<CellIndex> = goals.iter().map(|&g| self.cell(g)).collect();
        (0..self.rows * self.cols)
            .map(|i| {
                let c = self.cell(i);
                goal_cells
                    .iter()
                    .map(|&g| self.connectivity.step_distance(c, g) as u32)
                    .min()
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Shortest path (fewest cells) from any start to any goal, as flat
    /// indices from the start end. `None` if no path exists.
    pub fn shortest_path(&self, starts: &[usize], goals: &[usize]) -> Option<Vec<usize>> {
        let m = self.rows * self.cols;
        let free = |i: usize| i < m && !self.blocked[i];
        let mut is_goal = vec![false; m];
        let mut any_goal = false;
        for &g in goals {
            if free(g) {
                is_goal[g] = true;
                any_goal = true;
            }
        }
        if !any_goal {
            return None;
        }
        let h = self.heuristic(goals);
        let tie = |i: usize| self.tie_cost.map_or(0, |t| t[i]);

        const UNSEEN: (u32, u32) = (u32::MAX, u32::MAX);
        let mut best = vec![UNSEEN; m];
        let mut parent = vec![usize::MAX; m];
        let mut closed = vec![false; m];
        // (f_steps, g_tie, cell) ascending; cell index makes order total.
        let mut open = BinaryHeap::new();
        for &s in starts {
            if free(s) {
                let g = (1, tie(s));
                if g < best[s] {
                    best[s] = g;
                    open.push(Reverse((g.0 + h[s], g.1, s)));
                }
            }
        }
        while let Some(Reverse((_, _, u))) = open.pop() {
            if closed[u] {
                continue;
            }
            closed[u] = true;
            if is_goal[u] {
                let mut path = vec![u];
                let mut cur = u;
                while parent[cur] != usize::MAX {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            let cu = self.cell(u);
            let gu = best[u];
            for &(dr, dc) in self.connectivity.offsets() {
                let (Some(r), Some(c)) = (cu.row.checked_add_signed(dr), cu.col.checked_add_signed(dc)) else {
                    continue;
                };
                if r >= self.rows || c >= self.cols {
                    continue;
                }
                let v = r * self.cols + c;
                if !free(v) || closed[v] {
                    continue;
                }
                let g = (gu.0 + 1, gu.1 + tie(v));
                if g < best[v] {
                    best[v] = g;
                    parent[v] = u;
                    open.push(Reverse((g.0 + h[v], g.1, v)));
                }
            }
        }
        None
    }
}
