//! Optimal spike-to-truth matching.
//!
//! Error metrics presume a correspondence between estimated and true spikes;
//! estimators like the grid initializer emit spikes in arbitrary order, so
//! metrics first align them by minimal total wrap-around location distance.
//! The assignment is solved exactly by subset dynamic programming, which is
//! comfortable at the model orders used here (well below 20 spikes).

use crate::linalg::Mat;
use crate::model::SpikeParams;
use crate::torus;

/// Exact minimum-cost assignment on a square cost matrix.
///
/// Returns `perm` with `perm[row] = column`, minimizing the total cost.
/// Panics when the matrix is larger than 20x20 (the bitmask DP would blow
/// up) — callers deal in spike counts an order of magnitude smaller.
pub fn optimal_assignment(cost: &Mat<f64>) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "assignment needs a square cost matrix");
    assert!(n <= 20, "assignment DP limited to 20 items, got {n}");
    if n == 0 {
        return Vec::new();
    }
    let full = 1usize << n;
    // dp[mask]: best cost assigning rows 0..popcount(mask) to column set mask.
    let mut dp = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    dp[0] = 0.0;
    for mask in 0..full - 1 {
        if dp[mask].is_infinite() {
            continue;
        }
        let row = mask.count_ones() as usize;
        for col in 0..n {
            if mask & (1 << col) != 0 {
                continue;
            }
            let next = mask | (1 << col);
            let cand = dp[mask] + cost[(row, col)];
            if cand < dp[next] {
                dp[next] = cand;
                choice[next] = col;
            }
        }
    }
    let mut perm = vec![0usize; n];
    let mut mask = full - 1;
    for row in (0..n).rev() {
        let col = choice[mask];
        perm[row] = col;
        mask &= !(1 << col);
    }
    perm
}

/// Reorder `estimate` so spike `i` corresponds to `truth` spike `i`, matched
/// by minimal wrap-around location distance.
pub fn align_to_truth(estimate: &SpikeParams, truth: &SpikeParams) -> SpikeParams {
    assert_eq!(estimate.r(), truth.r(), "aligning spike sets of different size");
    let r = truth.r();
    let cost = Mat::from_fn(r, r, |i, j| {
        torus::distance(truth.locations()[i], estimate.locations()[j])
    });
    let perm = optimal_assignment(&cost);
    estimate.reordered(&perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn identity_when_already_aligned() {
        let p = SpikeParams::new(
            vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)],
            vec![-0.2, 0.3],
        )
        .unwrap();
        let aligned = align_to_truth(&p, &p);
        assert_eq!(aligned, p);
    }

    #[test]
    fn recovers_a_shuffle() {
        let truth = SpikeParams::new(
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(3.0, 0.0),
            ],
            vec![-0.4, 0.0, 0.35],
        )
        .unwrap();
        let shuffled = truth.reordered(&[2, 0, 1]);
        let aligned = align_to_truth(&shuffled, &truth);
        assert_eq!(aligned, truth);
    }

    #[test]
    fn wraparound_beats_direct_distance() {
        // Estimates near +-1/2 belong to the truth spike across the seam.
        let truth = SpikeParams::new(
            vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)],
            vec![-0.49, 0.0],
        )
        .unwrap();
        let estimate = SpikeParams::new(
            vec![Complex64::new(5.0, 0.0), Complex64::new(6.0, 0.0)],
            vec![0.02, 0.48],
        )
        .unwrap();
        let aligned = align_to_truth(&estimate, &truth);
        // 0.48 wraps to within 0.03 of -0.49.
        assert_eq!(aligned.locations()[0], 0.48);
        assert_eq!(aligned.locations()[1], 0.02);
    }

    #[test]
    fn dp_matches_brute_force_on_random_costs() {
        // 5x5 random-ish costs; compare against full permutation search.
        let vals = [
            0.93, 0.12, 0.55, 0.78, 0.01, 0.34, 0.66, 0.21, 0.98, 0.47, 0.05, 0.83, 0.39, 0.62,
            0.27, 0.71, 0.14, 0.90, 0.08, 0.52, 0.45, 0.30, 0.76, 0.19, 0.88,
        ];
        let cost = Mat::from_fn(5, 5, |i, j| vals[i * 5 + j]);
        let perm = optimal_assignment(&cost);
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();

        let mut best = f64::INFINITY;
        let mut indices = [0usize, 1, 2, 3, 4];
        permute(&mut indices, 0, &mut |p| {
            let t: f64 = p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            if t < best {
                best = t;
            }
        });
        assert!((total - best).abs() < 1e-12);
    }

    fn permute(items: &mut [usize; 5], k: usize, visit: &mut impl FnMut(&[usize; 5])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }
}
