//! Structured decomposition of the loss Hessian and the scaled deviation
//! that controls local contraction of the preconditioned iteration.
//!
//! The `2r x 2r` complex Hessian splits as `H = G + E`. `G` carries the
//! kernel Gramian structure
//!
//! ```text
//! G = diag([1_r; s a])^H  D(tau)  diag([1_r; s a]),     s = sqrt(-F''(0)),
//! D = [[D0, D1], [D1^H, D2]],
//! D0[i][j] = F(tau_i - tau_j),
//! D1[i][j] = -F'(tau_i - tau_j) / s,
//! D2[i][j] = F''(tau_i - tau_j) / F''(0),
//! ```
//!
//! while `E` collects the residual terms that vanish at the ground truth:
//! diagonal blocks built from `<delta'_{tau_j}, residual measure>` and
//! `a_j <delta''_{tau_j}, residual measure>`, evaluated in the sample domain
//! so noisy observations are handled identically.

use num_complex::Complex64;

use crate::gd::Preconditioner;
use crate::kernel;
use crate::linalg::{inf_norm_minus_identity, Mat};
use crate::model::{residual, residual_projections, ModelError, Observation, SpikeParams};

/// Hessian pieces at a parameter point.
#[derive(Debug, Clone)]
pub struct HessianBlocks {
    r: usize,
    n: usize,
    d0: Mat<f64>,
    d1: Mat<f64>,
    d2: Mat<f64>,
    g: Mat<Complex64>,
    e1: Vec<Complex64>,
    e2: Vec<Complex64>,
    h: Mat<Complex64>,
    /// `<delta''_{tau_j}, residual measure>` per spike; kept separately
    /// because the real-coordinate Jacobian needs it under a conjugate
    /// weight (`e2` stores `a_j` times this value).
    second_projection: Vec<Complex64>,
}

impl HessianBlocks {
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d0(&self) -> &Mat<f64> {
        &self.d0
    }

    pub fn d1(&self) -> &Mat<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &Mat<f64> {
        &self.d2
    }

    /// The Gramian part `G`, `2r x 2r`.
    pub fn g_matrix(&self) -> &Mat<Complex64> {
        &self.g
    }

    /// Diagonal of the amplitude-location residual block.
    pub fn e1(&self) -> &[Complex64] {
        &self.e1
    }

    /// Diagonal of the location-location residual block.
    pub fn e2(&self) -> &[Complex64] {
        &self.e2
    }

    /// The assembled Hessian `H = G + E`, `2r x 2r`.
    pub fn h(&self) -> &Mat<Complex64> {
        &self.h
    }

    /// Largest residual-block entry modulus; zero exactly at the truth on
    /// noiseless data.
    pub fn e_inf(&self) -> f64 {
        self.e1
            .iter()
            .chain(&self.e2)
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// The `3r x 3r` Jacobian of the gradient map over the real coordinates
    /// `(Re a_1..r, Im a_1..r, tau_1..r)`, assembled from the complex
    /// blocks.
    ///
    /// Row blocks are the derivatives of `(Re grad_a, Im grad_a, grad_tau)`;
    /// column blocks are the differentiation directions in the same order.
    /// The correspondence, pinned symbolically on `r = 1` in the tests:
    ///
    /// * amplitude rows are complex-linear, so the `(Re a, Im a)` square is
    ///   `[[D0, 0], [0, D0]]` (kernel values are real), and their `tau`
    ///   column is `H_{a,tau}` split into real and imaginary parts;
    /// * the location rows against `(Re a_j, Im a_j)` read off the
    ///   *transpose* `H_{a,tau}[j][i]` (not the conjugate transpose);
    /// * the location-location diagonal uses the conjugate-weighted second
    ///   projection `Re(conj(a_i) <delta''_{tau_i}, residual>)`, whereas the
    ///   complex block stores `a_i` times the projection.
    pub fn real_jacobian(&self, params: &SpikeParams) -> Mat<f64> {
        let r = self.r;
        let mut j = Mat::<f64>::zeros(3 * r, 3 * r);
        let h_atau = |i: usize, jj: usize| self.h[(i, r + jj)];
        for i in 0..r {
            for jj in 0..r {
                let d0 = self.d0[(i, jj)];
                j[(i, jj)] = d0;
                j[(r + i, r + jj)] = d0;
                let at = h_atau(i, jj);
                j[(i, 2 * r + jj)] = at.re;
                j[(r + i, 2 * r + jj)] = at.im;
                let ta = h_atau(jj, i);
                j[(2 * r + i, jj)] = ta.re;
                j[(2 * r + i, r + jj)] = ta.im;
                let mut tt = self.g[(r + i, r + jj)].re;
                if i == jj {
                    tt += (params.amplitudes()[i].conj() * self.second_projection[i]).re;
                }
                j[(2 * r + i, 2 * r + jj)] = tt;
            }
        }
        j
    }
}

/// Assemble the Hessian decomposition at `params` for the given observation.
pub fn hessian_blocks(params: &SpikeParams, obs: &Observation) -> HessianBlocks {
    let r = params.r();
    let n = obs.n();
    let scale = kernel::location_scale(n);
    let curvature = kernel::second_derivative_at_zero(n);
    let tau = params.locations();

    let mut d0 = Mat::<f64>::zeros(r, r);
    let mut d1 = Mat::<f64>::zeros(r, r);
    let mut d2 = Mat::<f64>::zeros(r, r);
    for i in 0..r {
        // Diagonal values are exact: F(0) = 1, F'(0) = 0, F''(0)/F''(0) = 1.
        d0[(i, i)] = 1.0;
        d1[(i, i)] = 0.0;
        d2[(i, i)] = 1.0;
        for j in 0..r {
            if i == j {
                continue;
            }
            let t = tau[i] - tau[j];
            d0[(i, j)] = kernel::eval(t, n, 0);
            d1[(i, j)] = -kernel::eval(t, n, 1) / scale;
            d2[(i, j)] = kernel::eval(t, n, 2) / curvature;
        }
    }

    // D as a real 2r x 2r block matrix, then G by diagonal congruence.
    let d_full = Mat::<f64>::from_fn(2 * r, 2 * r, |i, j| match (i < r, j < r) {
        (true, true) => d0[(i, j)],
        (true, false) => d1[(i, j - r)],
        (false, true) => d1[(j, i - r)],
        (false, false) => d2[(i - r, j - r)],
    });
    let weight: Vec<Complex64> = (0..2 * r)
        .map(|i| {
            if i < r {
                Complex64::new(1.0, 0.0)
            } else {
                scale * params.amplitudes()[i - r]
            }
        })
        .collect();
    let g = Mat::<Complex64>::from_fn(2 * r, 2 * r, |i, j| {
        weight[i].conj() * d_full[(i, j)] * weight[j]
    });

    let res = residual(params, obs);
    let proj = residual_projections(params, obs, &res);
    let e1: Vec<Complex64> = proj.iter().map(|p| p[1]).collect();
    let second_projection: Vec<Complex64> = proj.iter().map(|p| p[2]).collect();
    let e2: Vec<Complex64> = params
        .amplitudes()
        .iter()
        .zip(&second_projection)
        .map(|(a, p)| a * p)
        .collect();

    let h = Mat::<Complex64>::from_fn(2 * r, 2 * r, |i, j| {
        let mut v = g[(i, j)];
        if i < r && j >= r && i == j - r {
            v += e1[i];
        }
        if i >= r && j < r && i - r == j {
            v += e1[j].conj();
        }
        if i >= r && j >= r && i == j {
            v += e2[i - r];
        }
        v
    });

    HessianBlocks { r, n, d0, d1, d2, g, e1, e2, h, second_projection }
}

/// `||S P H(params) S^{-1} - I||_inf` with the weighting built from the
/// truth amplitudes: `S = diag([1/a*_j ; sqrt(-F''(0)) 1_r])`.
///
/// This is the quantity whose uniform smallness over a neighborhood drives
/// the linear convergence guarantees; the norm is the maximum absolute row
/// sum with complex entries contributing their modulus.
pub fn scaled_hessian_deviation(
    params: &SpikeParams,
    truth: &SpikeParams,
    precond: &Preconditioner,
    obs: &Observation,
) -> Result<f64, ModelError> {
    let r = params.r();
    if truth.r() != r {
        return Err(ModelError::SpikeCountMismatch { left: r, right: truth.r() });
    }
    if let Some(index) = truth.amplitudes().iter().position(|a| a.norm() == 0.0) {
        return Err(ModelError::ZeroTruthAmplitude { index });
    }
    assert_eq!(precond.diagonal().len(), 2 * r, "preconditioner size mismatch");

    let blocks = hessian_blocks(params, obs);
    let scale = kernel::location_scale(obs.n());
    let s_diag: Vec<Complex64> = (0..2 * r)
        .map(|i| {
            if i < r {
                truth.amplitudes()[i].inv()
            } else {
                Complex64::new(scale, 0.0)
            }
        })
        .collect();
    let p = precond.diagonal();
    let m = Mat::<Complex64>::from_fn(2 * r, 2 * r, |i, j| {
        s_diag[i] * p[i] * blocks.h()[(i, j)] * s_diag[j].inv()
    });
    Ok(inf_norm_minus_identity(&m))
}

/// Constants of the uniform scaled-Hessian bound for the invariant scheme
/// (valid once `(n+1) Delta >= 16.5`).
///
/// `K_delta` caps `||D - I||_inf` through the order-0..2 summation bounds
/// at `(alpha, beta) = (16.5, 0)`; `K_theta = 4 (K_a + K_tau)` folds the
/// residual-block bounds at `(16.5, 16.5/4)` through the curvature ratios
/// `(n+1)^2 / (-F''(0)) <= 27/(16 pi^2)`. The numeric caps are derived in
/// the tests from [`crate::kernel::bound_constants`]; `K_theta` uses the
/// corrected order-3 constant (see the kernel module), which makes it
/// larger than a derivation from the misprinted variant would give — the
/// smaller variant is falsifiable by randomized search over the stated
/// hypothesis region.
pub const SEP_FLOOR_INVARIANT: f64 = 16.5;
pub const K_DELTA_INVARIANT: f64 = 2.13;
pub const K_THETA_INVARIANT: f64 = 72.85;

/// Constants of the uniform scaled-Hessian bound for the adaptive scheme
/// (valid once `(n+1) Delta >= 4.7`), with `K_theta = 4 (K_delta + K_a +
/// K_tau)` at `(alpha, beta) = (4.7, 4.7/4)`.
pub const SEP_FLOOR_ADAPTIVE: f64 = 4.7;
pub const K_DELTA_ADAPTIVE: f64 = 2.32;
pub const K_THETA_ADAPTIVE: f64 = 104.23;

/// Curvature-variation ratio `F''''(0) / (2 F''(0)^2)`; dimensionless,
/// about 1.2 for large `n`. Controls how fast the location curvature seen
/// by a spike drifts as it moves off its true position.
pub fn curvature_variation_ratio(n: usize) -> f64 {
    let f2 = kernel::second_derivative_at_zero(n);
    kernel::fourth_derivative_at_zero(n) / (2.0 * f2 * f2)
}

/// Upper bound on the scaled-Hessian deviation for the invariant
/// preconditioner, as a function of the weighted error `s` of the iterate,
/// the ratios `a*_min / A` and `||a*||_inf / A`, the dynamic range, and
/// `(n+1) Delta(tau*)`.
///
/// Besides the diagonal-deficit and separation-decaying coupling terms,
/// the bound carries a self-interaction term
/// `s (1+s) (1 + kappa4 s) (||a*||_inf / A)^2` that does not decay with
/// separation: the residual blocks of the Hessian contain each spike's own
/// contribution `a_j <delta''_j, residual>`, whose leading part
/// `|a_j| |a_j - a*_j| |F''(0)|` survives any spacing (the frequency-domain
/// envelopes `|F''(t)| <= -F''(0)`, `|F''''(t)| <= F''''(0)` make the term
/// rigorous, with `kappa4 = `[`curvature_variation_ratio`]). Dropping it
/// leaves a bound that randomized search falsifies at large separations.
pub fn invariant_deviation_bound(
    weighted_err: f64,
    amin_over_cap: f64,
    amax_over_cap: f64,
    dyn_range: f64,
    sep_scaled: f64,
    n: usize,
) -> f64 {
    let s = weighted_err;
    let kappa4 = curvature_variation_ratio(n);
    1.0 - amin_over_cap * amin_over_cap * (1.0 - s) * (1.0 - s)
        + s * (1.0 + s) * (1.0 + kappa4 * s) * amax_over_cap * amax_over_cap
        + (4.0 * K_DELTA_INVARIANT + K_THETA_INVARIANT * s) * dyn_range / (sep_scaled * sep_scaled)
            * (1.0 + s)
            * (1.0 + s)
}

/// Upper bound on the scaled-Hessian deviation for the adaptive
/// preconditioner built at the same iterate.
pub fn adaptive_deviation_bound(weighted_err: f64, dyn_range: f64, sep_scaled: f64) -> f64 {
    let s = weighted_err;
    let shrink = (1.0 - s) * (1.0 - s);
    1.0 / shrink - 1.0
        + (4.0 * K_DELTA_ADAPTIVE + K_THETA_ADAPTIVE * s) * dyn_range
            / (sep_scaled * sep_scaled)
            / shrink
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gd::{build_preconditioner, PreconditionerKind};
    use crate::model::{observe, PsfWeights};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn well_separated(n: usize, r: usize, seed: f64) -> SpikeParams {
        let amps = (0..r)
            .map(|i| Complex64::from_polar(1.0 + 0.3 * (i as f64), seed + 0.7 * i as f64))
            .collect();
        let locs = (0..r).map(|i| -0.5 + (i as f64 + 0.31) / r as f64).collect();
        let _ = n;
        SpikeParams::new(amps, locs).unwrap()
    }

    #[test]
    fn residual_blocks_vanish_at_truth() {
        let psf = PsfWeights::new(24).unwrap();
        let truth = well_separated(24, 5, 0.4);
        let obs = observe(&truth, &psf);
        let blocks = hessian_blocks(&truth, &obs);
        assert_eq!(blocks.e_inf(), 0.0);
    }

    #[test]
    fn d_blocks_have_exact_diagonals() {
        let psf = PsfWeights::new(16).unwrap();
        let truth = well_separated(16, 4, 1.2);
        let perturbed = SpikeParams::new(
            truth.amplitudes().iter().map(|a| a * 1.1).collect(),
            truth.locations().iter().map(|t| t + 0.002).collect(),
        )
        .unwrap();
        let obs = observe(&truth, &psf);
        let blocks = hessian_blocks(&perturbed, &obs);
        for i in 0..blocks.r() {
            assert_eq!(blocks.d0()[(i, i)], 1.0);
            assert_eq!(blocks.d1()[(i, i)], 0.0);
            assert_eq!(blocks.d2()[(i, i)], 1.0);
        }
        // Symmetry of the even-order blocks.
        for i in 0..blocks.r() {
            for j in 0..blocks.r() {
                assert!((blocks.d0()[(i, j)] - blocks.d0()[(j, i)]).abs() < 1e-12);
                assert!((blocks.d2()[(i, j)] - blocks.d2()[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_spike_adaptive_deviation_is_zero_at_truth() {
        let psf = PsfWeights::new(20).unwrap();
        let truth = SpikeParams::single(c(1.7, -0.9), 0.13);
        let obs = observe(&truth, &psf);
        let precond =
            build_preconditioner(PreconditionerKind::Adaptive, truth.amplitudes(), 20).unwrap();
        let dev = scaled_hessian_deviation(&truth, &truth, &precond, &obs).unwrap();
        assert!(dev < 1e-10, "deviation {dev}");
    }

    #[test]
    fn zero_truth_amplitude_is_rejected() {
        let psf = PsfWeights::new(8).unwrap();
        let truth = SpikeParams::new(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![-0.2, 0.2]).unwrap();
        let obs = observe(&truth, &psf);
        let precond = build_preconditioner(
            PreconditionerKind::Invariant { amplitude_cap: 1.0 },
            truth.amplitudes(),
            8,
        )
        .unwrap();
        let err = scaled_hessian_deviation(&truth, &truth, &precond, &obs).unwrap_err();
        assert!(matches!(err, ModelError::ZeroTruthAmplitude { index: 0 }));
    }

    #[test]
    fn bound_constants_trace_to_the_summation_constants() {
        use crate::kernel::{bound_constants, BoundParams};
        let q: f64 = 27.0 / (16.0 * std::f64::consts::PI * std::f64::consts::PI);

        let k_delta = |alpha: f64| {
            let c = bound_constants(&BoundParams::new(alpha, 0.0).unwrap());
            (c.c0 + q.sqrt() * c.c1).max(q.sqrt() * c.c1 + q * c.c2)
        };
        let k_theta_terms = |alpha: f64| {
            let c = bound_constants(&BoundParams::new(alpha, alpha / 4.0).unwrap());
            let k_a = q.sqrt() * c.c1 + q * c.c2;
            let k_tau = q * c.c2 + q.powf(1.5) * c.c3;
            (k_a, k_tau)
        };

        let kd = k_delta(SEP_FLOOR_INVARIANT);
        assert!(kd <= K_DELTA_INVARIANT && kd > K_DELTA_INVARIANT - 0.01, "{kd}");
        let (k_a, k_tau) = k_theta_terms(SEP_FLOOR_INVARIANT);
        let k_theta = 4.0 * (k_a + k_tau);
        assert!(
            k_theta <= K_THETA_INVARIANT && k_theta > K_THETA_INVARIANT - 0.01,
            "{k_theta}"
        );

        let kd = k_delta(SEP_FLOOR_ADAPTIVE);
        assert!(kd <= K_DELTA_ADAPTIVE && kd > K_DELTA_ADAPTIVE - 0.01, "{kd}");
        let (k_a, k_tau) = k_theta_terms(SEP_FLOOR_ADAPTIVE);
        let k_theta = 4.0 * (kd + k_a + k_tau);
        assert!(
            k_theta <= K_THETA_ADAPTIVE && k_theta > K_THETA_ADAPTIVE - 0.01,
            "{k_theta}"
        );
    }

    #[test]
    fn deviation_at_truth_respects_adaptive_bound() {
        // r well-separated spikes, adaptive preconditioner at the truth:
        // the deviation must stay below 4 K_Delta * kappa / ((n+1) Delta)^2.
        let n = 640;
        let psf = PsfWeights::new(n).unwrap();
        let r = 6;
        let truth = well_separated(n, r, 2.2);
        let obs = observe(&truth, &psf);
        let precond =
            build_preconditioner(PreconditionerKind::Adaptive, truth.amplitudes(), n).unwrap();
        let dev = scaled_hessian_deviation(&truth, &truth, &precond, &obs).unwrap();
        let delta = crate::torus::min_separation(truth.locations()).unwrap();
        let sep = (n + 1) as f64 * delta;
        assert!(sep >= SEP_FLOOR_ADAPTIVE, "instance violates the separation floor");
        let moduli: Vec<f64> = truth.amplitudes().iter().map(|a| a.norm()).collect();
        let kappa = moduli.iter().cloned().fold(0.0f64, f64::max)
            / moduli.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = 4.0 * K_DELTA_ADAPTIVE * kappa / (sep * sep);
        assert!(dev <= bound, "dev {dev} vs bound {bound}");
        assert!((adaptive_deviation_bound(0.0, kappa, sep) - bound).abs() < 1e-12);
    }
}
