//! Preconditioned gradient descent on the spike deconvolution loss.
//!
//! The update is `theta <- theta - P grad L(theta)` with a positive diagonal
//! preconditioner `P` whose amplitude entries are 1 and whose location
//! entries absorb the kernel curvature:
//!
//! * invariant scheme: `(-F''(0))^{-1} A^{-2}` with a fixed cap `A > 0`;
//! * adaptive scheme: `(-F''(0))^{-1} |a_{k,j}|^{-2}`, rebuilt from the
//!   current amplitude moduli at every iteration.
//!
//! Progress is measured in the weighted infinity norm
//! `max_j { |a_j - a*_j| / |a*_j|, sqrt(-F''(0)) |tau_j - tau*_j| }`, which
//! makes amplitude and location errors unitless and comparable.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::kernel;
use crate::model::{gradient, loss, Observation, SpikeParams};
use crate::torus;

#[derive(Debug, Error, PartialEq)]
pub enum GdError {
    #[error("invariant preconditioner needs a positive amplitude cap, got {0}")]
    NonPositiveCap(f64),
    #[error("adaptive preconditioner is degenerate: amplitude {index} has zero modulus")]
    DegenerateAmplitude { index: usize },
    #[error("spike count mismatch: {left} vs {right}")]
    SpikeCountMismatch { left: usize, right: usize },
    #[error("truth amplitude {index} is zero; the weighted metric is undefined")]
    ZeroTruthAmplitude { index: usize },
    #[error("rate constants need at least two spikes (separation undefined)")]
    SeparationUndefined,
    #[error("max_iters must be at least 1")]
    NoIterations,
}

/// Which preconditioner design drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreconditionerKind {
    /// Fixed location scaling `(-F''(0))^{-1} A^{-2}`; `amplitude_cap` is `A`.
    Invariant { amplitude_cap: f64 },
    /// Per-spike location scaling `(-F''(0))^{-1} |a_j|^{-2}` from the
    /// current iterate.
    Adaptive,
}

/// Materialized diagonal of length `2r`: ones for the amplitude rows, the
/// scheme-specific positive entries for the location rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    diag: Vec<f64>,
}

impl Preconditioner {
    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

/// Build the diagonal preconditioner for the given amplitudes.
///
/// The adaptive design requires every current amplitude to have nonzero
/// modulus; a degenerate iterate aborts the run rather than being clamped.
pub fn build_preconditioner(
    kind: PreconditionerKind,
    current_amplitudes: &[Complex64],
    n: usize,
) -> Result<Preconditioner, GdError> {
    let r = current_amplitudes.len();
    let inv_curvature = -1.0 / kernel::second_derivative_at_zero(n);
    let mut diag = vec![1.0; 2 * r];
    match kind {
        PreconditionerKind::Invariant { amplitude_cap } => {
            if !(amplitude_cap > 0.0) {
                return Err(GdError::NonPositiveCap(amplitude_cap));
            }
            let entry = inv_curvature / (amplitude_cap * amplitude_cap);
            for slot in diag.iter_mut().skip(r) {
                *slot = entry;
            }
        }
        PreconditionerKind::Adaptive => {
            for (j, a) in current_amplitudes.iter().enumerate() {
                let mag_sq = a.norm_sqr();
                if !(mag_sq > 0.0) || !mag_sq.is_finite() {
                    return Err(GdError::DegenerateAmplitude { index: j });
                }
                diag[r + j] = inv_curvature / mag_sq;
            }
        }
    }
    Ok(Preconditioner { kind, diag })
}

/// The weighting that turns parameter errors into the unitless metric:
/// inverse truth amplitudes for the amplitude rows, `sqrt(-F''(0))` for the
/// location rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    inv_truth_amplitudes: Vec<Complex64>,
    location_scale: f64,
}

impl WeightMatrix {
    pub fn new(truth: &SpikeParams, n: usize) -> Result<Self, GdError> {
        let mut inv = Vec::with_capacity(truth.r());
        for (index, a) in truth.amplitudes().iter().enumerate() {
            if a.norm() == 0.0 {
                return Err(GdError::ZeroTruthAmplitude { index });
            }
            inv.push(a.inv());
        }
        Ok(Self { inv_truth_amplitudes: inv, location_scale: kernel::location_scale(n) })
    }

    pub fn location_scale(&self) -> f64 {
        self.location_scale
    }

    pub fn inv_truth_amplitudes(&self) -> &[Complex64] {
        &self.inv_truth_amplitudes
    }
}

/// `max_j { |a_j - a*_j| / |a*_j|, sqrt(-F''(0)) dist(tau_j, tau*_j) }`.
///
/// Spike `j` of `params` is compared against spike `j` of `truth`; align the
/// orderings first (see [`crate::assign`]) when they come from independent
/// sources. Location differences are measured around the torus.
pub fn weighted_error(params: &SpikeParams, truth: &SpikeParams, n: usize) -> Result<f64, GdError> {
    if params.r() != truth.r() {
        return Err(GdError::SpikeCountMismatch { left: params.r(), right: truth.r() });
    }
    let weights = WeightMatrix::new(truth, n)?;
    let mut err = 0.0f64;
    for j in 0..params.r() {
        let amp = (params.amplitudes()[j] - truth.amplitudes()[j]).norm()
            * weights.inv_truth_amplitudes[j].norm();
        let loc = weights.location_scale
            * torus::distance(params.locations()[j], truth.locations()[j]);
        err = err.max(amp).max(loc);
    }
    Ok(err)
}

/// One preconditioned descent step; locations are wrapped back into
/// `[-1/2, 1/2)` after the update.
pub fn gd_step(params: &SpikeParams, obs: &Observation, precond: &Preconditioner) -> SpikeParams {
    let r = params.r();
    debug_assert_eq!(precond.diag.len(), 2 * r);
    let grad = gradient(params, obs);
    let amplitudes = (0..r)
        .map(|j| params.amplitudes()[j] - precond.diag[j] * grad.amplitude[j])
        .collect();
    let locations = (0..r)
        .map(|j| torus::wrap(params.locations()[j] - precond.diag[r + j] * grad.location[j]))
        .collect();
    SpikeParams::from_wrapped_parts(amplitudes, locations)
}

/// Per-iteration record of a descent run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Weighted error against the truth; `NaN` when no truth was supplied.
    pub weighted_error: f64,
    pub loss: f64,
    /// `weighted_error / previous weighted_error`; `NaN` for the first
    /// record and in truth-free runs.
    pub contraction_ratio: f64,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// The adaptive preconditioner hit a zero-modulus amplitude.
    DegenerateIterate { iteration: usize, index: usize },
}

/// Full trace of one descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub final_params: SpikeParams,
    pub iterations_run: usize,
    pub converged: bool,
    pub stop: StopReason,
}

impl RunTrace {
    pub fn failed(&self) -> bool {
        matches!(self.stop, StopReason::DegenerateIterate { .. })
    }

    pub fn final_weighted_error(&self) -> f64 {
        self.records.last().map(|r| r.weighted_error).unwrap_or(f64::NAN)
    }

    /// CSV serialization: `iteration,weighted_error,loss,contraction_ratio`,
    /// floats printed with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,weighted_error,loss,contraction_ratio\n");
        for rec in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                rec.iteration, rec.weighted_error, rec.loss, rec.contraction_ratio
            );
        }
        out
    }
}

/// Iterate preconditioned descent from `params0`.
///
/// With a truth available the run tracks the weighted error and stops once
/// it falls to `tol`; without one it stops when the gradient infinity norm
/// falls to `tol`. `tol = 0` disables early exit so exactly `max_iters`
/// steps run. A degenerate adaptive iterate aborts the run with the trace
/// marked failed.
pub fn run(
    params0: &SpikeParams,
    obs: &Observation,
    truth: Option<&SpikeParams>,
    kind: PreconditionerKind,
    max_iters: usize,
    tol: f64,
) -> Result<RunTrace, GdError> {
    if max_iters == 0 {
        return Err(GdError::NoIterations);
    }
    if let Some(t) = truth {
        if t.r() != params0.r() {
            return Err(GdError::SpikeCountMismatch { left: params0.r(), right: t.r() });
        }
    }
    let n = obs.n();
    let mut params = params0.clone();
    let mut records = Vec::with_capacity(max_iters + 1);
    let mut prev_err = f64::NAN;
    let mut stop = StopReason::MaxIterations;

    for iteration in 0..=max_iters {
        let err = match truth {
            Some(t) => weighted_error(&params, t, n)?,
            None => f64::NAN,
        };
        records.push(IterationRecord {
            iteration,
            weighted_error: err,
            loss: loss(&params, obs),
            contraction_ratio: if iteration == 0 { f64::NAN } else { err / prev_err },
        });
        prev_err = err;

        let converged = match truth {
            Some(_) => tol > 0.0 && err <= tol,
            None => tol > 0.0 && gradient(&params, obs).inf_norm() <= tol,
        };
        if converged {
            stop = StopReason::Converged;
            break;
        }
        if iteration == max_iters {
            break;
        }

        let precond = match build_preconditioner(kind, params.amplitudes(), n) {
            Ok(p) => p,
            Err(GdError::DegenerateAmplitude { index }) => {
                stop = StopReason::DegenerateIterate { iteration, index };
                break;
            }
            Err(other) => return Err(other),
        };
        params = gd_step(&params, obs, &precond);
    }

    let iterations_run = records.last().map(|r| r.iteration).unwrap_or(0);
    let converged = matches!(stop, StopReason::Converged);
    Ok(RunTrace { records, final_params: params, iterations_run, converged, stop })
}

/// Theoretical rate ingredients for a given truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    /// `276.21 A^2 ||a*||_inf / (a*_min)^3 ((n+1) Delta)^{-2}`; `None`
    /// without an amplitude cap.
    pub eta: Option<f64>,
    /// `11.60 (||a*||_inf / a*_min) ((n+1) Delta)^{-2}`.
    pub gamma: f64,
    /// `1 - (1/4)(a*_min / A)^2 (1 - eta)`; meaningful only when `eta < 1`.
    pub predicted_rate_invariant: Option<f64>,
    /// `1/2 + gamma`; meaningful only when `gamma < 1/2`.
    pub predicted_rate_adaptive: f64,
    /// Whether `eta < 1` holds (always `false` without a cap).
    pub invariant_hypothesis_met: bool,
    /// Whether `gamma < 1/2` holds.
    pub adaptive_hypothesis_met: bool,
}

/// Coefficient of the invariant-scheme hypothesis quantity `eta`.
pub const ETA_COEFF: f64 = 276.21;
/// Coefficient of the adaptive-scheme hypothesis quantity `gamma`.
pub const GAMMA_COEFF: f64 = 11.60;
/// Radius of the certified basin for the invariant scheme.
pub const BASIN_RADIUS_INVARIANT: f64 = 0.5;
/// Radius of the certified basin for the adaptive scheme: `1 - sqrt(2/3)`.
pub fn basin_radius_adaptive() -> f64 {
    1.0 - (2.0f64 / 3.0).sqrt()
}

/// Compute the rate constants for a truth configuration. Rates are reported
/// even when the hypotheses fail; the flags say which regime applies.
pub fn rate_constants(
    truth: &SpikeParams,
    n: usize,
    amplitude_cap: Option<f64>,
) -> Result<RateConstants, GdError> {
    let delta = torus::min_separation(truth.locations()).ok_or(GdError::SeparationUndefined)?;
    let moduli: Vec<f64> = truth.amplitudes().iter().map(|a| a.norm()).collect();
    if let Some(index) = moduli.iter().position(|&m| m == 0.0) {
        return Err(GdError::ZeroTruthAmplitude { index });
    }
    let a_max = moduli.iter().cloned().fold(0.0f64, f64::max);
    let a_min = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
    let sep = (n + 1) as f64 * delta;
    let sep_inv_sq = 1.0 / (sep * sep);

    let gamma = GAMMA_COEFF * (a_max / a_min) * sep_inv_sq;
    let (eta, predicted_rate_invariant) = match amplitude_cap {
        Some(cap) => {
            if !(cap > 0.0) {
                return Err(GdError::NonPositiveCap(cap));
            }
            let eta = ETA_COEFF * cap * cap * a_max / (a_min * a_min * a_min) * sep_inv_sq;
            let ratio = a_min / cap;
            let rate = 1.0 - 0.25 * ratio * ratio * (1.0 - eta);
            (Some(eta), Some(rate))
        }
        None => (None, None),
    };

    Ok(RateConstants {
        eta,
        gamma,
        predicted_rate_invariant,
        predicted_rate_adaptive: 0.5 + gamma,
        invariant_hypothesis_met: eta.map(|e| e < 1.0).unwrap_or(false),
        adaptive_hypothesis_met: gamma < 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{observe, PsfWeights};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn invariant_preconditioner_entries() {
        // A = 1, n = 2: location entries are 3 / (16 pi^2).
        let p = build_preconditioner(
            PreconditionerKind::Invariant { amplitude_cap: 1.0 },
            &[c(9.0, 0.0)],
            2,
        )
        .unwrap();
        assert_eq!(p.diagonal()[0], 1.0);
        let expect = 3.0 / (16.0 * PI * PI);
        assert!((p.diagonal()[1] - expect).abs() < 1e-15, "{}", p.diagonal()[1]);
    }

    #[test]
    fn adaptive_matches_invariant_at_unit_modulus() {
        let amps = [Complex64::from_polar(1.0, 0.3), Complex64::from_polar(1.0, -2.0)];
        let adaptive = build_preconditioner(PreconditionerKind::Adaptive, &amps, 2).unwrap();
        let invariant = build_preconditioner(
            PreconditionerKind::Invariant { amplitude_cap: 1.0 },
            &amps,
            2,
        )
        .unwrap();
        for (a, b) in adaptive.diagonal().iter().zip(invariant.diagonal()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((adaptive.diagonal()[2] - 3.0 / (16.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn adaptive_rejects_zero_amplitude() {
        let err =
            build_preconditioner(PreconditionerKind::Adaptive, &[c(0.0, 0.0)], 4).unwrap_err();
        assert_eq!(err, GdError::DegenerateAmplitude { index: 0 });
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let psf = PsfWeights::new(16).unwrap();
        let truth =
            SpikeParams::new(vec![c(1.0, 0.4), c(-0.7, 0.2)], vec![-0.22, 0.31]).unwrap();
        let obs = observe(&truth, &psf);
        for kind in [
            PreconditionerKind::Invariant { amplitude_cap: 1.5 },
            PreconditionerKind::Adaptive,
        ] {
            let p = build_preconditioner(kind, truth.amplitudes(), 16).unwrap();
            let next = gd_step(&truth, &obs, &p);
            let err = weighted_error(&next, &truth, 16).unwrap();
            assert!(err < 1e-12, "fixed point drift {err}");
        }
    }

    #[test]
    fn single_spike_amplitude_recovers_in_one_step() {
        let psf = PsfWeights::new(12).unwrap();
        let truth = SpikeParams::single(c(1.0, 0.0), 0.2);
        let obs = observe(&truth, &psf);
        let start = SpikeParams::single(c(3.0, 0.0), 0.2);
        let p = build_preconditioner(
            PreconditionerKind::Invariant { amplitude_cap: 2.0 },
            start.amplitudes(),
            12,
        )
        .unwrap();
        let next = gd_step(&start, &obs, &p);
        assert!((next.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn run_from_truth_converges_immediately() {
        let psf = PsfWeights::new(10).unwrap();
        let truth = SpikeParams::new(vec![c(1.0, 0.0), c(0.5, 0.5)], vec![-0.1, 0.3]).unwrap();
        let obs = observe(&truth, &psf);
        let trace =
            run(&truth, &obs, Some(&truth), PreconditionerKind::Adaptive, 50, 1e-9).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations_run, 0);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let psf = PsfWeights::new(8).unwrap();
        let truth = SpikeParams::new(vec![c(1.0, 0.0), c(1.0, 0.2)], vec![-0.3, 0.25]).unwrap();
        let obs = observe(&truth, &psf);
        let start = SpikeParams::new(vec![c(1.2, 0.0), c(0.9, 0.2)], vec![-0.29, 0.26]).unwrap();
        let trace =
            run(&start, &obs, Some(&truth), PreconditionerKind::Adaptive, 5, 0.0).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,weighted_error,loss,contraction_ratio");
        assert_eq!(lines.len(), trace.records.len() + 1);
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn rate_constant_arithmetic() {
        // Unit-modulus truth with (n+1) Delta = 50: gamma = 11.60 / 2500.
        // Two spikes at distance 1/2 with n + 1 = 100.
        let truth = SpikeParams::new(
            vec![Complex64::from_polar(1.0, 0.4), Complex64::from_polar(1.0, -1.0)],
            vec![-0.25, 0.25],
        )
        .unwrap();
        let rc = rate_constants(&truth, 99, Some(1.5)).unwrap();
        assert!((rc.gamma - 11.60 / 2500.0).abs() < 1e-12);
        assert!((rc.predicted_rate_adaptive - 0.50464).abs() < 1e-9);
        let eta = rc.eta.unwrap();
        assert!((eta - 276.21 * 2.25 / 2500.0).abs() < 1e-12);
        let rate = rc.predicted_rate_invariant.unwrap();
        let expect = 1.0 - 0.25 * (1.0 / 1.5f64).powi(2) * (1.0 - eta);
        assert!((rate - expect).abs() < 1e-12);
        assert!((rate - 0.9165).abs() < 1e-4);
        assert!(rc.invariant_hypothesis_met && rc.adaptive_hypothesis_met);
    }

    #[test]
    fn rate_constants_limit_and_errors() {
        let truth = SpikeParams::new(
            vec![Complex64::from_polar(1.0, 0.0), Complex64::from_polar(1.0, 1.0)],
            vec![-0.25, 0.25],
        )
        .unwrap();
        // Separation growing without bound drives gamma to 0 and the
        // adaptive rate to 1/2.
        let rc = rate_constants(&truth, 99_999, None).unwrap();
        assert!(rc.gamma < 1e-6);
        assert!((rc.predicted_rate_adaptive - 0.5).abs() < 1e-6);
        assert!(rc.eta.is_none());
        let single = SpikeParams::single(c(1.0, 0.0), 0.0);
        assert_eq!(rate_constants(&single, 10, None), Err(GdError::SeparationUndefined));
    }
}
