//! Property tests for the Fejér kernel: branch equivalence, periodicity,
//! parity, and randomized certification of the summation bounds.

use proptest::prelude::*;
use spikedec_core::kernel::{
    check_summation_bound, eval_by_sum, eval_closed, fejer_eval, second_derivative_at_zero,
    singular_threshold,
};
use spikedec_core::torus;

/// Agreement rule used throughout: relative 1e-8 for magnitudes of one or
/// more, absolute 1e-9 below that.
fn branches_agree(closed: f64, sum: f64) -> bool {
    let magnitude = closed.abs().max(sum.abs());
    let tol = if magnitude < 1.0 { 1e-9 } else { 1e-8 * magnitude };
    (closed - sum).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2500))]

    /// Closed-form and direct-sum branches agree wherever the closed form
    /// is in service.
    #[test]
    fn closed_form_matches_sum(
        t in -1.5f64..1.5,
        n in 2usize..=64,
        order in 0usize..=3,
    ) {
        let tf = t - t.round();
        prop_assume!(tf.abs() >= singular_threshold(order));
        let closed = eval_closed(tf, n, order);
        let sum = eval_by_sum(tf, n, order);
        prop_assert!(
            branches_agree(closed, sum),
            "t={t} n={n} order={order}: closed {closed} vs sum {sum}"
        );
    }

    #[test]
    fn kernel_is_periodic(
        t in -0.5f64..0.5,
        shift in -3i32..=3,
        n in 2usize..=48,
        order in 0usize..=3,
    ) {
        let a = fejer_eval(t, n, order).unwrap();
        let b = fejer_eval(t + shift as f64, n, order).unwrap();
        // Adding the shift rounds the argument by ~eps; allow for that
        // through an envelope bound on the next derivative.
        let slope = (std::f64::consts::TAU * (n + 1) as f64).powi(order as i32 + 1);
        let arg_rounding = 4.0 * f64::EPSILON * (t.abs() + shift.abs() as f64);
        let tol = 1e-10 * a.abs().max(1.0) + slope * arg_rounding;
        prop_assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol:.3e})");
    }

    /// Even orders are even functions, odd orders are odd.
    #[test]
    fn kernel_parity(
        t in -0.5f64..0.5,
        n in 2usize..=48,
        order in 0usize..=3,
    ) {
        let a = fejer_eval(t, n, order).unwrap();
        let b = fejer_eval(-t, n, order).unwrap();
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        let tol = 1e-10 * a.abs().max(1.0);
        prop_assert!((a - sign * b).abs() <= tol, "order {order}: {a} vs {b}");
    }

    /// Randomized admissible configurations never violate the summation
    /// bound (a denser sweep runs in the acceptance suite).
    #[test]
    fn summation_bound_holds(
        seed_locs in prop::collection::vec(-0.5f64..0.5, 2..=8),
        n in 4usize..=64,
        order in 0usize..=3,
        beta_frac in 0.0f64..0.45,
    ) {
        // Thin the raw draws so the separation is bounded away from zero:
        // keep only points at pairwise wrap-around distance >= 1/(n+1).
        let mut locs = seed_locs;
        locs.sort_by(f64::total_cmp);
        let min_gap = 1.0 / (n as f64 + 1.0);
        let mut kept: Vec<f64> = Vec::new();
        for &t in &locs {
            if kept.iter().all(|&k| torus::distance(t, k) >= min_gap) {
                kept.push(t);
            }
        }
        prop_assume!(kept.len() >= 2);
        let r = kept.len();
        let delta = torus::min_separation(&kept).unwrap();
        let max_u = beta_frac * delta / 2.0;
        let mut u = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    // Deterministic but varied fill derived from indices.
                    let s = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
                    u[i * r + j] = 2.0 * s * max_u;
                }
            }
        }
        let check = check_summation_bound(&kept, Some(&u), n, order).unwrap();
        prop_assert!(
            check.holds,
            "violated: r={r} n={n} order={order} lhs={} rhs={}",
            check.lhs,
            check.rhs
        );
    }
}

#[test]
fn normalization_identities() {
    for n in 2..=64 {
        let f0 = fejer_eval(0.0, n, 0).unwrap();
        assert!((f0 - 1.0).abs() < 1e-14);
        let f2 = fejer_eval(0.0, n, 2).unwrap();
        let expect = second_derivative_at_zero(n);
        assert!((f2 - expect).abs() <= 1e-12 * expect.abs());
    }
}

/// The spot value quoted for the experiments: the curvature scale at n = 32.
#[test]
fn curvature_at_experiment_bandwidth() {
    let f2 = fejer_eval(0.0, 32, 2).unwrap();
    assert!((f2 - (-7158.753058923478)).abs() < 1e-8);
}

/// Just outside each switch threshold the closed form must already meet the
/// branch-agreement tolerance; this pins the threshold sizing.
#[test]
fn closed_branch_is_accurate_at_the_handoff() {
    for n in [2usize, 5, 16, 64] {
        for order in 0..=3 {
            for factor in [1.02, 1.5, 3.0] {
                let t = singular_threshold(order) * factor;
                if t >= 0.5 {
                    continue;
                }
                let closed = eval_closed(t, n, order);
                let sum = eval_by_sum(t, n, order);
                assert!(
                    branches_agree(closed, sum),
                    "n={n} order={order} t={t}: closed {closed} vs sum {sum}"
                );
            }
        }
    }
}
