//! The normalized Fejér kernel and certified summation bounds.
//!
//! For a half-bandwidth `n >= 2` (so `N = 2n + 1` Fourier samples), the
//! kernel is the 1-periodic trigonometric polynomial
//!
//! ```text
//! F_N(t) = (1/(n+1)) * sum_{k=-n..n} (1 - |k|/(n+1)) e^{i 2 pi k t}
//!        = sin^2(pi (n+1) t) / ((n+1)^2 sin^2(pi t))   for t not integer,
//! ```
//!
//! with `F_N(t) = 1` at integers. Two independent evaluation routes are
//! implemented for `F_N` and its first three derivatives: closed
//! trigonometric expressions, and term-by-term differentiation of the
//! defining sum. The closed forms suffer catastrophic cancellation near
//! integers, so evaluation switches to the sum branch there; the test suite
//! cross-validates the two branches everywhere else.
//!
//! `check_summation_bound` certifies, instance by instance, the inequality
//!
//! ```text
//! max_i sum_{j != i} |F_N^(l)(tau_j - tau_i + u_{i,j})|
//!     <= C_l (n+1)^l ((n+1) Delta(tau))^{-2}
//! ```
//!
//! valid whenever `(n+1) Delta(tau) >= alpha` and the perturbations satisfy
//! `(n+1) max |u| = beta < alpha / 2`, with the constants `C_l` given in
//! closed form by [`bound_constants`].

use std::f64::consts::PI;

use thiserror::Error;

use crate::torus;

/// Smallest admissible half-bandwidth; every bound below assumes `n >= 2`.
pub const MIN_HALF_BANDWIDTH: usize = 2;

/// Highest supported derivative order.
pub const MAX_ORDER: usize = 3;

/// Distance to the nearest integer below which evaluation uses the
/// trigonometric-polynomial sum. The closed forms divide by powers of
/// `sin(pi t)` and cancel catastrophically as `t` approaches an integer,
/// with severity growing in the derivative order (the order-3 form cancels
/// across five powers of `t`); the sum branch is exact everywhere, merely
/// `O(n)` slower, and no hot path evaluates the kernel this close to the
/// singular points. Thresholds are sized so the closed branch keeps at
/// least ~9 significant digits at its boundary for every `n >= 2`.
pub fn singular_threshold(order: usize) -> f64 {
    match order {
        0 => 1e-4,
        1 | 2 => 1e-3,
        _ => 5e-2,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("derivative order {0} is not supported (expected 0..=3)")]
    InvalidOrder(usize),
    #[error("half-bandwidth n = {0} is too small (need n >= 2)")]
    BandwidthTooSmall(usize),
    #[error("invalid bound parameters alpha = {alpha}, beta = {beta}: need alpha > 0 and 0 <= beta < alpha/2")]
    InvalidBoundParams { alpha: f64, beta: f64 },
    #[error("summation bound requires perturbations of shape r x r, got {got} entries for r = {r}")]
    PerturbationShape { r: usize, got: usize },
}

/// `F_N''(0) = -(2/3) pi^2 n (n+2)`, the curvature of the kernel at the
/// origin. Negative for every admissible `n`.
pub fn second_derivative_at_zero(n: usize) -> f64 {
    -(2.0 / 3.0) * PI * PI * (n as f64) * ((n + 2) as f64)
}

/// `sqrt(-F_N''(0))`, the natural scale converting location errors into the
/// unitless weighted metric.
pub fn location_scale(n: usize) -> f64 {
    (-second_derivative_at_zero(n)).sqrt()
}

/// `F_N''''(0) = (1/(n+1)) sum_k (2 pi k)^4 (1 - |k|/(n+1))`, by direct
/// summation. Positive; by the triangle inequality in the frequency domain
/// it dominates `|F_N''''(t)|` for every `t`, which makes it the right
/// envelope for curvature-variation bounds.
pub fn fourth_derivative_at_zero(n: usize) -> f64 {
    let m = (n + 1) as f64;
    let mut acc = 0.0;
    for k in 1..=n {
        let x = 2.0 * PI * k as f64;
        acc += x * x * x * x * (1.0 - k as f64 / m);
    }
    2.0 * acc / m
}

/// Evaluate `F_N^(order)(t)` for `order` in `0..=3`.
///
/// The result is real and 1-periodic in `t`.
pub fn fejer_eval(t: f64, n: usize, order: usize) -> Result<f64, KernelError> {
    if order > MAX_ORDER {
        return Err(KernelError::InvalidOrder(order));
    }
    if n < MIN_HALF_BANDWIDTH {
        return Err(KernelError::BandwidthTooSmall(n));
    }
    Ok(eval(t, n, order))
}

/// Branch-selecting evaluation; callers guarantee `n >= 2`, `order <= 3`.
pub(crate) fn eval(t: f64, n: usize, order: usize) -> f64 {
    // All four derivatives are 1-periodic; reduce once so both branches see
    // an argument in [-1/2, 1/2].
    let tf = t - t.round();
    if tf.abs() < singular_threshold(order) {
        eval_by_sum(tf, n, order)
    } else {
        eval_closed(tf, n, order)
    }
}

/// Term-by-term differentiation of the defining sum:
/// `F_N^(l)(t) = (1/(n+1)) sum_k (i 2 pi k)^l (1 - |k|/(n+1)) e^{i 2 pi k t}`,
/// folded over `+-k` so only the real part survives.
pub fn eval_by_sum(t: f64, n: usize, order: usize) -> f64 {
    let m = (n + 1) as f64;
    let mut acc = 0.0;
    for k in 1..=n {
        let w = 1.0 - k as f64 / m;
        let x = 2.0 * PI * k as f64;
        let (s, c) = (x * t).sin_cos();
        acc += match order {
            0 => w * c,
            1 => -w * x * s,
            2 => -w * x * x * c,
            _ => w * x * x * x * s,
        };
    }
    let zero_mode = if order == 0 { 1.0 } else { 0.0 };
    (2.0 * acc + zero_mode) / m
}

/// Closed trigonometric forms, valid away from integers.
///
/// Derived by repeated differentiation of
/// `F_N(t) = sin^2(m pi t) / (m^2 sin^2(pi t))` with `m = n + 1`.
pub fn eval_closed(t: f64, n: usize, order: usize) -> f64 {
    let m = (n + 1) as f64;
    let (sm, cm) = (m * PI * t).sin_cos();
    let s = (PI * t).sin();
    let c = (PI * t).cos();
    let csc2 = 1.0 / (s * s);
    let cot = c / s;
    match order {
        0 => sm * sm / (m * m * s * s),
        1 => (2.0 * PI / m) * sm * cm * csc2 - (2.0 * PI / (m * m)) * sm * sm * cot * csc2,
        2 => {
            2.0 * PI * PI * (cm * cm - sm * sm) * csc2
                - (8.0 * PI * PI / m) * sm * cm * cot * csc2
                + (2.0 * PI * PI / (m * m)) * sm * sm * (3.0 * cot * cot + 1.0) * csc2
        }
        _ => {
            let pi3 = PI * PI * PI;
            -m * 8.0 * pi3 * cm * sm * csc2
                - 12.0 * pi3 * (cm * cm - sm * sm) * cot * csc2
                + (12.0 * pi3 / m) * cm * sm * (3.0 * cot * cot + 1.0) * csc2
                - (8.0 * pi3 / (m * m)) * sm * sm * (3.0 * cot * cot * cot + 2.0 * cot) * csc2
        }
    }
}

/// Separation/perturbation regime for the summation bounds: locations with
/// `(n+1) Delta(tau) >= alpha` and perturbations with
/// `(n+1) max |u| <= beta < alpha / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    alpha: f64,
    beta: f64,
}

impl BoundParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, KernelError> {
        if !(alpha > 0.0) || !(beta >= 0.0) || !(beta < alpha / 2.0) {
            return Err(KernelError::InvalidBoundParams { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// The four summation-bound constants; each depends only on `(alpha, beta)`
/// and is strictly positive and finite for admissible parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl BoundConstants {
    pub fn order(&self, order: usize) -> f64 {
        match order {
            0 => self.c0,
            1 => self.c1,
            2 => self.c2,
            _ => self.c3,
        }
    }
}

/// Closed forms for the constants `C_0..C_3`.
///
/// Each constant collects the envelope bounds of one derivative order:
/// `|F_N^(l)|` is dominated by combinations of `cot^m(pi t) csc^2(pi t)`,
/// whose sums over a separated location set are bounded by the Riemann
/// majorant `S_m <= (2/(pi Delta))^{m+2} / ((m+1)(1 - 2 beta/alpha)^{m+1})`.
/// Folding the envelope coefficients through that majorant gives, for
/// `l = 3`, the leading summand `(64/3) pi (alpha - 2 beta)^{-1} alpha`
/// (from `(n+1) 4 pi^3 (1 + 3/(n+1)^2) S_0` with `n >= 2`); the remaining
/// summands come from `S_1..S_3` the same way.
pub fn bound_constants(params: &BoundParams) -> BoundConstants {
    let a = params.alpha;
    let d = a - 2.0 * params.beta;
    let d1 = 1.0 / d;
    let d2 = d1 * d1;
    let d3 = d2 * d1;
    let d4 = d3 * d1;
    let pi2 = PI * PI;
    BoundConstants {
        c0: 4.0 / pi2 * d1 * a,
        c1: (4.0 / PI * d1 + 8.0 / pi2 * d2) * a,
        c2: (80.0 / 9.0 * d1 + 16.0 / PI * d2 + 64.0 / (3.0 * pi2) * d3) * a,
        c3: (64.0 / 3.0 * PI * d1 + 1488.0 / 27.0 * d2 + 192.0 / PI * d3 + 192.0 / pi2 * d4) * a,
    }
}

/// Outcome of one instance-level certification of the summation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummationCheck {
    /// `max_i sum_{j != i} |F_N^(l)(tau_j - tau_i + u_{i,j})|`.
    pub lhs: f64,
    /// `C_l (n+1)^l ((n+1) Delta(tau))^{-2}` at the tightest admissible
    /// `(alpha, beta)` — `alpha = (n+1) Delta(tau)`, `beta = (n+1) max |u|`.
    pub rhs: f64,
    pub holds: bool,
}

/// Certify the summation bound on a concrete location set.
///
/// `perturbations`, when given, is a row-major `r x r` matrix of `u_{i,j}`
/// values (the diagonal is ignored); `None` means `u = 0`. A single location
/// yields an empty sum: `lhs = 0` and the bound holds vacuously.
pub fn check_summation_bound(
    tau: &[f64],
    perturbations: Option<&[f64]>,
    n: usize,
    order: usize,
) -> Result<SummationCheck, KernelError> {
    if order > MAX_ORDER {
        return Err(KernelError::InvalidOrder(order));
    }
    if n < MIN_HALF_BANDWIDTH {
        return Err(KernelError::BandwidthTooSmall(n));
    }
    let r = tau.len();
    if let Some(u) = perturbations {
        if u.len() != r * r {
            return Err(KernelError::PerturbationShape { r, got: u.len() });
        }
    }
    if r < 2 {
        return Ok(SummationCheck { lhs: 0.0, rhs: f64::INFINITY, holds: true });
    }

    let m = (n + 1) as f64;
    let delta = torus::min_separation(tau).expect("r >= 2");
    let max_u = perturbations
        .map(|u| u.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
        .unwrap_or(0.0);

    // Tightest admissible pair: the inequality holds for any (alpha, beta)
    // bracketing the instance, so certifying at the instance values is the
    // strongest check the lemma permits.
    let params = BoundParams::new(m * delta, m * max_u)?;
    let constants = bound_constants(&params);

    let mut lhs = 0.0f64;
    for i in 0..r {
        let mut row = 0.0;
        for j in 0..r {
            if i == j {
                continue;
            }
            let u_ij = perturbations.map(|u| u[i * r + j]).unwrap_or(0.0);
            row += eval(tau[j] - tau[i] + u_ij, n, order).abs();
        }
        lhs = lhs.max(row);
    }

    let sep = m * delta;
    let rhs = constants.order(order) * m.powi(order as i32) / (sep * sep);
    Ok(SummationCheck { lhs, rhs, holds: lhs <= rhs })
}
