mod common;

use chansearch_core::mdp::{mvi_reward, plan_action, ucb_reward, Heading, MdpConfig, MdpPlanner, MdpState};
use chansearch_core::CellIndex;
use common::expectimax_action;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn planner_matches_expectimax_on_seeded_fields() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rewards: Vec<f64> = (0..36).map(|_| rng.random_range(0.0..30.0)).collect();
        for lookahead in 1..=3 {
            let cfg = MdpConfig {
                lookahead,
                ..MdpConfig::default()
            };
            for cell in 0..36 {
                for h in 0..8 {
                    let s = MdpState::new(CellIndex::new(cell / 6, cell % 6), Heading::new(h));
                    let got = plan_action(s, &rewards, 6, 6, &cfg).unwrap();
                    let want = expectimax_action(s, &rewards, 6, 6, lookahead, cfg.p_a);
                    assert_eq!(got, want, "seed {seed} lookahead {lookahead} state {s:?}");
                }
            }
        }
    }
}

#[test]
fn uniform_field_goes_straight_ahead() {
    let cfg = MdpConfig::default();
    let s = MdpState::new(CellIndex::new(3, 3), Heading::E);
    let got = plan_action(s, &[5.0; 49], 7, 7, &cfg).unwrap().unwrap();
    assert_eq!(got, MdpState::new(CellIndex::new(3, 4), Heading::E));
}

#[test]
fn ucb_examples() {
    assert_eq!(ucb_reward(17.0, 9.0, 0.0), 17.0);
    assert_eq!(ucb_reward(20.0, 4.0, 2.0), 24.0);
    assert!(ucb_reward(20.0, 5.0, 1.5) > ucb_reward(20.0, 4.0, 1.5));
}

/// Expected entropy reduction about the maximum, by quadrature over the
/// truncated normal.
fn mvi_numeric(mean: f64, var: f64, z: f64) -> f64 {
    let sd = var.sqrt();
    let g = (z - mean) / sd;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // Normal CDF by composite Simpson from far in the lower tail.
    let cdf = |x: f64| {
        let lo = -12.0;
        let n = 4000;
        let h = (x - lo) / n as f64;
        let mut s = phi(lo) + phi(x);
        for i in 1..n {
            s += phi(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let big_phi = cdf(g);
    // Entropy of y ~ N(mean, var) minus that of y truncated to y <= z.
    let h_full = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln();
    let lower = -12.0;
    let n = 20000;
    let step = (g - lower) / n as f64;
    let mut ent = 0.0;
    for i in 0..=n {
        let x = lower + i as f64 * step;
        let p = phi(x) / big_phi;
        if p > 0.0 {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            ent -= w * p * (p / sd).ln();
        }
    }
    ent *= step / 3.0;
    h_full - ent
}

#[test]
fn mvi_matches_numerical_integration() {
    for &(mean, var, z) in &[(16.0, 25.0, 24.0), (20.0, 4.0, 21.0), (10.0, 1.0, 10.5), (22.0, 9.0, 22.0)] {
        let got = mvi_reward(mean, var, &[z]).unwrap();
        let want = mvi_numeric(mean, var, z);
        assert!((got - want).abs() < 1e-4, "({mean}, {var}, {z}): {got} vs {want}");
    }
}

#[test]
fn mvi_vanishes_for_known_low_cells() {
    assert!(mvi_reward(10.0, 1e-12, &[20.0, 22.0]).unwrap() < 1e-9);
    assert!(mvi_reward(10.0, 4.0, &[]).is_err());
}

proptest! {
    #[test]
    fn plans_are_affine_invariant(
        rewards in prop::collection::vec(0.0f64..30.0, 49),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
        cell in 0usize..49,
        h in 0u8..8,
    ) {
        let cfg = MdpConfig { lookahead: 4, ..MdpConfig::default() };
        let s = MdpState::new(CellIndex::new(cell / 7, cell % 7), Heading::new(h));
        let mut planner = MdpPlanner::new(cfg, 7, 7).unwrap();
        let q1 = planner.q_values(s, &rewards);
        let moved: Vec<f64> = rewards.iter().map(|r| scale * r + shift).collect();
        let q2 = planner.q_values(s, &moved);
        // Q-values transform affinely, so the ordering is preserved up to
        // near-ties that the tolerance absorbs.
        for ((s1, a), (s2, b)) in q1.iter().zip(&q2) {
            prop_assert_eq!(s1, s2);
            let expect = scale * a + shift * cfg.lookahead as f64;
            prop_assert!((b - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn mvi_is_nonnegative_and_monotone_in_mean(
        m1 in 0.0f64..30.0, m2 in 0.0f64..30.0, var in 0.01f64..25.0,
        zs in prop::collection::vec(20.0f64..40.0, 1..6),
    ) {
        let (lo, hi) = (m1.min(m2), m1.max(m2));
        let a = mvi_reward(lo, var, &zs).unwrap();
        let b = mvi_reward(hi, var, &zs).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!(b + 1e-12 >= a);
    }

    #[test]
    fn planned_move_is_adjacent(rewards in prop::collection::vec(0.0f64..30.0, 30), cell in 0usize..30, h in 0u8..8) {
        let s = MdpState::new(CellIndex::new(cell / 6, cell % 6), Heading::new(h));
        let next = plan_action(s, &rewards, 5, 6, &MdpConfig::default()).unwrap().unwrap();
        prop_assert!(next.cell.chebyshev(s.cell) == 1);
        prop_assert!(next.cell.row < 5 && next.cell.col < 6);
    }
}
