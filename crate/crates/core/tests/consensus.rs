mod common;

use chansearch_core::consensus::{disagreement, run_consensus, Consensus, Partition};
use chansearch_core::gpr::kernel;
use chansearch_core::{BeliefMap, CommGraph, ConsensusConfig, GridGeometry, KernelConfig};
use common::kalman_fuse;
use proptest::prelude::*;

fn geom() -> GridGeometry {
    GridGeometry::axis_aligned(2, 2, 20.0).unwrap()
}

fn exact() -> ConsensusConfig {
    ConsensusConfig {
        process_noise_ft2: 0.0,
        max_rounds: 50,
        tolerance_ft: 1e-6,
        partition: Partition::Full,
        kernel: KernelConfig::default(),
        jitter: 0.0,
    }
}

fn assemble(g: &GridGeometry, var: &[f64], k: &KernelConfig) -> Vec<f64> {
    let m = var.len();
    let mut p = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            p[a * m + b] = kernel(g.local_center_flat(a), g.local_center_flat(b), k) * (var[a] * var[b]).sqrt();
        }
    }
    p
}

fn observed(cell: usize, depth: f64) -> BeliefMap {
    let mut b = BeliefMap::prior(4, 16.0, 25.0);
    b.mean[cell] = depth;
    b.variance[cell] = 0.04;
    b
}

#[test]
fn pair_matches_centralized_fusion() {
    let g = geom();
    let cfg = exact();
    let a = observed(0, 22.0);
    let b = observed(3, 9.0);
    let next = Consensus::new(&g, cfg).unwrap().round(&[a.clone(), b.clone()], &CommGraph::complete(2)).unwrap();
    let pa = assemble(&g, &a.variance, &cfg.kernel);
    let pb = assemble(&g, &b.variance, &cfg.kernel);
    let (z, p) = kalman_fuse(&a.mean, &pa, &b.mean, &pb);
    for (agent, s) in next.iter().enumerate() {
        for c in 0..4 {
            assert!((s.mean[c] - z[c]).abs() < 1e-6, "agent {agent} cell {c}: {} vs {}", s.mean[c], z[c]);
            assert!((s.variance[c] - p[c * 4 + c]).abs() < 1e-6);
        }
    }
}

#[test]
fn four_agents_agree_within_fifty_rounds() {
    let g = geom();
    let states: Vec<BeliefMap> = (0..4).map(|i| observed(i, 8.0 + 4.0 * i as f64)).collect();
    let out = run_consensus(&states, &CommGraph::complete(4), &g, &exact()).unwrap();
    assert!(out.converged());
    assert!(out.rounds <= 50);
    assert!(disagreement(&out.states, &[0, 1, 2, 3]) < 1e-6);
}

#[test]
fn isolated_agent_keeps_its_mean() {
    let g = geom();
    let states: Vec<BeliefMap> = (0..4).map(|i| observed(i, 8.0 + 4.0 * i as f64)).collect();
    let graph = CommGraph::from_edges(4, &[(0, 1), (1, 2)]);
    let cfg = ConsensusConfig {
        process_noise_ft2: 0.01,
        ..exact()
    };
    let out = run_consensus(&states, &graph, &g, &cfg).unwrap();
    assert_eq!(out.states[3].mean, states[3].mean);
    for c in 0..4 {
        assert!(out.states[3].variance[c] > states[3].variance[c]);
    }
    assert!(!out.converged());
}

#[test]
fn complete_graph_agrees_faster_than_a_line() {
    let g = geom();
    let states: Vec<BeliefMap> = (0..3).map(|i| observed(i, 8.0 + 6.0 * i as f64)).collect();
    let cfg = ConsensusConfig {
        tolerance_ft: 0.1,
        ..exact()
    };
    let line = run_consensus(&states, &CommGraph::line(3), &g, &cfg).unwrap();
    let full = run_consensus(&states, &CommGraph::complete(3), &g, &cfg).unwrap();
    assert!(full.converged() && line.converged());
    assert!(full.rounds < line.rounds);
}

#[test]
fn tiles_equal_full_when_kernel_is_negligible_across_tiles() {
    // With a short kernel, cells 20 m apart barely correlate and tiling
    // loses almost nothing.
    let g = GridGeometry::axis_aligned(4, 4, 20.0).unwrap();
    let k = KernelConfig {
        length_scale_ft: 10.0,
        ..KernelConfig::squared_exponential()
    };
    let states: Vec<BeliefMap> = (0..3)
        .map(|i| {
            let mut b = BeliefMap::prior(16, 16.0, 25.0);
            b.mean[i * 5] = 20.0 + i as f64;
            b.variance[i * 5] = 0.1;
            b
        })
        .collect();
    let full = ConsensusConfig { kernel: k, ..exact() };
    let tiled = ConsensusConfig {
        partition: Partition::Tiled { tile_rows: 2, tile_cols: 2 },
        ..full
    };
    let a = Consensus::new(&g, full).unwrap().round(&states, &CommGraph::complete(3)).unwrap();
    let b = Consensus::new(&g, tiled).unwrap().round(&states, &CommGraph::complete(3)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for c in 0..16 {
            assert!((x.mean[c] - y.mean[c]).abs() < 1e-3);
        }
    }
}

fn states_strategy(n: usize) -> impl Strategy<Value = Vec<BeliefMap>> {
    prop::collection::vec(
        (prop::collection::vec(6.0f64..26.0, 4), prop::collection::vec(0.05f64..25.0, 4)),
        n,
    )
    .prop_map(|v| v.into_iter().map(|(m, s)| BeliefMap::new(m, s)).collect())
}

fn graph_strategy(n: usize) -> impl Strategy<Value = CommGraph> {
    prop::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
        let mut g = CommGraph::empty(n);
        let mut k = 0;
        for a in 0..n {
            for b in (a + 1)..n {
                g.set(a, b, bits[k]);
                k += 1;
            }
        }
        g
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relabeling_agents_permutes_results(states in states_strategy(4), g in graph_strategy(4), shift in 1usize..4) {
        let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
        let engine = Consensus::new(&geom(), exact()).unwrap();
        let a = engine.round(&states, &g).unwrap();
        let mut ps = vec![states[0].clone(); 4];
        let mut pg = CommGraph::empty(4);
        for i in 0..4 {
            ps[perm[i]] = states[i].clone();
            for j in 0..4 {
                if i != j && g.connected(i, j) {
                    pg.set(perm[i], perm[j], true);
                }
            }
        }
        let b = engine.round(&ps, &pg).unwrap();
        for i in 0..4 {
            for c in 0..4 {
                prop_assert!((a[i].mean[c] - b[perm[i]].mean[c]).abs() < 1e-9);
                prop_assert!((a[i].variance[c] - b[perm[i]].variance[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pair_fusion_never_loses_information(states in states_strategy(2)) {
        let out = run_consensus(&states, &CommGraph::complete(2), &geom(), &exact()).unwrap();
        for c in 0..4 {
            let floor = states[0].variance[c].min(states[1].variance[c]);
            for s in &out.states {
                prop_assert!(s.variance[c] <= floor + 1e-9);
            }
        }
    }

    #[test]
    fn group_fusion_never_loses_information(states in states_strategy(3)) {
        let out = run_consensus(&states, &CommGraph::complete(3), &geom(), &exact()).unwrap();
        for c in 0..4 {
            let floor = states.iter().map(|s| s.variance[c]).fold(f64::INFINITY, f64::min);
            for s in &out.states {
                prop_assert!(s.variance[c] <= floor + 1e-9);
            }
        }
    }

    #[test]
    fn complete_graph_reaches_agreement(states in states_strategy(4)) {
        let out = run_consensus(&states, &CommGraph::complete(4), &geom(), &exact()).unwrap();
        prop_assert!(out.converged());
    }
}
