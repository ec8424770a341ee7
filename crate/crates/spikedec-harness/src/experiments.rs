//! The three desk-scale experiments: basin of attraction, convergence
//! versus dynamic range, and statistical error versus SNR.
//!
//! Protocol shared by all three: `N = 2n+1` samples, `r` spikes with scaled
//! separation at least `min_sep_scaled`, amplitudes uniform over the
//! annulus `1 <= |a| <= kappa`, invariant-scheme cap `A = (3/2) max |a*|`
//! unless overridden, runs of a fixed iteration count, and the weighted
//! infinity-norm error as the figure of merit. Every trial derives its own
//! seeds from the master seed and its indices, so tables are reproducible
//! and schedule-independent.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikedec_core::assign::align_to_truth;
use spikedec_core::gd::{run, weighted_error, PreconditionerKind, RunTrace};
use spikedec_core::init::omp_init;
use spikedec_core::kernel;
use spikedec_core::model::{observe, Observation, PsfWeights, SpikeParams};
use spikedec_core::Complex64;

use crate::instance::{gen_instance, InstanceSpec};
use crate::noise::{add_noise, NoiseSpec};
use crate::parallel::map_trials;
use crate::seeding::{mix, TAG_BASIN, TAG_CONVERGENCE, TAG_SNR};
use crate::{crb, HarnessError};

/// Success rule for basin-style experiments: weighted error after the run
/// at most `1e-2`.
pub const SUCCESS_THRESHOLD: f64 = 1e-2;

/// Preconditioning scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Invariant,
    Adaptive,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Invariant => "invariant",
            Scheme::Adaptive => "adaptive",
        }
    }
}

/// How the invariant scheme's amplitude cap is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapPolicy {
    /// `A = (3/2) max_j |a*_j|` from the instance truth.
    Auto,
    /// Caller-supplied cap (for library use where the truth is unknown).
    Explicit(f64),
}

impl CapPolicy {
    fn cap_for(&self, truth: &SpikeParams) -> f64 {
        match self {
            CapPolicy::Auto => {
                1.5 * truth.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max)
            }
            CapPolicy::Explicit(a) => *a,
        }
    }
}

fn kind_for(scheme: Scheme, cap: CapPolicy, truth: &SpikeParams) -> PreconditionerKind {
    match scheme {
        Scheme::Adaptive => PreconditionerKind::Adaptive,
        Scheme::Invariant => {
            PreconditionerKind::Invariant { amplitude_cap: cap.cap_for(truth) }
        }
    }
}

/// Draw a start point at weighted distance exactly `distance` from the
/// truth: each amplitude gets a complex box perturbation, each location a
/// real one, and the whole vector is rescaled so the weighted infinity norm
/// lands on the sphere.
pub fn draw_equidistant(
    truth: &SpikeParams,
    n: usize,
    distance: f64,
    rng: &mut ChaCha8Rng,
) -> SpikeParams {
    let r = truth.r();
    let scale = kernel::location_scale(n);
    loop {
        let amp_dirs: Vec<Complex64> = (0..r)
            .map(|_| Complex64::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let loc_dirs: Vec<f64> = (0..r).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let mut norm = 0.0f64;
        for d in &amp_dirs {
            norm = norm.max(d.norm());
        }
        for d in &loc_dirs {
            norm = norm.max(d.abs());
        }
        if norm == 0.0 {
            continue;
        }
        let gain = distance / norm;
        let amplitudes = truth
            .amplitudes()
            .iter()
            .zip(&amp_dirs)
            .map(|(a, d)| a * (1.0 + gain * d))
            .collect();
        let locations = truth
            .locations()
            .iter()
            .zip(&loc_dirs)
            .map(|(t, d)| t + gain * d / scale)
            .collect();
        return SpikeParams::new(amplitudes, locations).expect("perturbed parameters are valid");
    }
}

// ---------------------------------------------------------------------------
// Basin of attraction
// ---------------------------------------------------------------------------

/// Success counts per initialization distance.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinResult {
    pub scheme: Scheme,
    pub kappa: f64,
    pub trials: usize,
    pub distances: Vec<f64>,
    pub successes: Vec<usize>,
    /// Runs aborted by a degenerate adaptive iterate (counted as failures).
    pub aborted: Vec<usize>,
}

impl BasinResult {
    pub fn success_rate(&self, idx: usize) -> f64 {
        self.successes[idx] as f64 / self.trials as f64
    }

    /// Smallest swept distance whose success rate drops below one half;
    /// `None` when no such distance was observed. Assumes the sweep was
    /// given in ascending order.
    pub fn half_success_distance(&self) -> Option<f64> {
        self.distances
            .iter()
            .zip(&self.successes)
            .find(|(_, &s)| (s as f64) < 0.5 * self.trials as f64)
            .map(|(&d, _)| d)
    }

    /// `distance,trials,successes,success_rate,aborted` per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance,trials,successes,success_rate,aborted\n");
        for (i, &d) in self.distances.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                d,
                self.trials,
                self.successes[i],
                self.success_rate(i),
                self.aborted[i]
            );
        }
        out
    }
}

/// Success rate of a scheme as a function of the initialization distance.
///
/// Each trial draws a fresh instance and a start point uniformly on the
/// weighted sphere of the given radius, runs `iterations` steps, and counts
/// success when the final weighted error is at most [`SUCCESS_THRESHOLD`].
pub fn basin_experiment(
    spec: &InstanceSpec,
    scheme: Scheme,
    cap: CapPolicy,
    distances: &[f64],
    trials: usize,
    iterations: usize,
) -> Result<BasinResult, HarnessError> {
    spec.validate()?;
    let psf = PsfWeights::new(spec.n)?;
    let mut successes = Vec::with_capacity(distances.len());
    let mut aborted = Vec::with_capacity(distances.len());
    for (d_idx, &distance) in distances.iter().enumerate() {
        let outcomes = map_trials(trials, |trial| {
            let inst_seed = mix(&[spec.seed, TAG_BASIN, d_idx as u64, trial as u64, 0]);
            let truth = gen_instance(&spec.with_seed(inst_seed))
                .expect("validated spec cannot fail to generate");
            let obs = observe(&truth, &psf);
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
                spec.seed,
                TAG_BASIN,
                d_idx as u64,
                trial as u64,
                1,
            ]));
            let start = draw_equidistant(&truth, spec.n, distance, &mut rng);
            let kind = kind_for(scheme, cap, &truth);
            let trace = run(&start, &obs, Some(&truth), kind, iterations, 0.0)
                .expect("run preconditions hold");
            let success =
                !trace.failed() && trace.final_weighted_error() <= SUCCESS_THRESHOLD;
            (success, trace.failed())
        });
        successes.push(outcomes.iter().filter(|(s, _)| *s).count());
        aborted.push(outcomes.iter().filter(|(_, a)| *a).count());
    }
    Ok(BasinResult {
        scheme,
        kappa: spec.kappa,
        trials,
        distances: distances.to_vec(),
        successes,
        aborted,
    })
}

// ---------------------------------------------------------------------------
// Convergence versus dynamic range
// ---------------------------------------------------------------------------

/// Median weighted-error curves per dynamic range.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceResult {
    pub scheme: Scheme,
    pub kappas: Vec<f64>,
    pub trials: usize,
    /// `curves[i][k]` is the median weighted error at iteration `k` for
    /// `kappas[i]`; one entry per iteration including the start.
    pub curves: Vec<Vec<f64>>,
    /// Trials whose run aborted or whose initialization failed, per kappa.
    pub failures: Vec<usize>,
}

impl ConvergenceResult {
    /// Long-format CSV: `scheme,kappa,iteration,weighted_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,kappa,iteration,weighted_error\n");
        for (i, curve) in self.curves.iter().enumerate() {
            for (k, err) in curve.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", self.scheme.label(), self.kappas[i], k, err);
            }
        }
        out
    }

    /// Least-squares slope of `ln(err)` per iteration over the linear decay
    /// window (from iteration 1 down to the floor).
    pub fn fitted_log_slope(&self, kappa_idx: usize, floor: f64) -> f64 {
        fitted_log_slope(&self.curves[kappa_idx], floor)
    }

    /// First iteration at which the median curve reaches `tol`.
    pub fn iterations_to(&self, kappa_idx: usize, tol: f64) -> Option<usize> {
        self.curves[kappa_idx].iter().position(|&e| e <= tol)
    }
}

/// Slope of `ln(err)` against the iteration index, fitted over iterations
/// `1..` while the curve stays above `floor`.
pub fn fitted_log_slope(curve: &[f64], floor: f64) -> f64 {
    let points: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(_, &e)| e > floor)
        .filter(|(_, &e)| e.is_finite() && e > 0.0)
        .map(|(k, &e)| (k as f64, e.ln()))
        .collect();
    least_squares_slope(&points)
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let (sx, sy): (f64, f64) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in points {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

fn pointwise_median(mut columns: Vec<Vec<f64>>) -> Vec<f64> {
    columns
        .iter_mut()
        .map(|col| {
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m == 0 {
                f64::NAN
            } else if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect()
}

/// Convergence curves from spectral initialization across dynamic ranges.
///
/// Runs `trials` seeded instances per `kappa`, initializes with orthogonal
/// matching pursuit, iterates the chosen scheme for the full budget, and
/// reports the pointwise median weighted-error curve.
pub fn convergence_experiment(
    base: &InstanceSpec,
    kappas: &[f64],
    scheme: Scheme,
    cap: CapPolicy,
    trials: usize,
    iterations: usize,
) -> Result<ConvergenceResult, HarnessError> {
    let mut curves = Vec::with_capacity(kappas.len());
    let mut failures = Vec::with_capacity(kappas.len());
    for (k_idx, &kappa) in kappas.iter().enumerate() {
        let spec = InstanceSpec { kappa, ..*base };
        spec.validate()?;
        let psf = PsfWeights::new(spec.n)?;
        let runs = map_trials(trials, |trial| {
            let inst_seed = mix(&[spec.seed, TAG_CONVERGENCE, k_idx as u64, trial as u64]);
            let truth = gen_instance(&spec.with_seed(inst_seed))
                .expect("validated spec cannot fail to generate");
            let obs = observe(&truth, &psf);
            run_from_spectral_init(&truth, &obs, scheme, cap, iterations, 0.0)
        });
        let mut failed = 0usize;
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); iterations + 1];
        for outcome in runs {
            match outcome {
                Ok(trace) if !trace.failed() => {
                    for rec in &trace.records {
                        columns[rec.iteration].push(rec.weighted_error);
                    }
                }
                _ => failed += 1,
            }
        }
        curves.push(pointwise_median(columns));
        failures.push(failed);
    }
    Ok(ConvergenceResult { scheme, kappas: kappas.to_vec(), trials, curves, failures })
}

/// Initialize by OMP (aligned to the truth for the error metric) and run.
pub fn run_from_spectral_init(
    truth: &SpikeParams,
    obs: &Observation,
    scheme: Scheme,
    cap: CapPolicy,
    iterations: usize,
    tol: f64,
) -> Result<RunTrace, HarnessError> {
    let init = omp_init(obs, truth.r())?;
    let start = align_to_truth(&init.params, truth);
    let kind = kind_for(scheme, cap, truth);
    Ok(run(&start, obs, Some(truth), kind, iterations, tol)?)
}

// ---------------------------------------------------------------------------
// Statistical error versus SNR
// ---------------------------------------------------------------------------

/// One SNR sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrRow {
    pub snr_db: f64,
    pub invariant_mean_error: f64,
    pub adaptive_mean_error: f64,
    pub crb_benchmark_mean: f64,
    pub failures: usize,
}

/// Error-versus-SNR table with the Cramér-Rao overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrResult {
    pub kappa: f64,
    pub trials: usize,
    pub r: usize,
    pub rows: Vec<SnrRow>,
    /// Mean per-parameter bounds per SNR point, layout
    /// `[Re a_1..r, Im a_1..r, tau_1..r]`, so the scalar reduction stays
    /// auditable.
    pub per_param_crb: Vec<Vec<f64>>,
}

impl SnrResult {
    /// `snr_db,invariant_mean_error,adaptive_mean_error,crb_weighted_benchmark,failures`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "snr_db,invariant_mean_error,adaptive_mean_error,crb_weighted_benchmark,failures\n",
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.snr_db,
                row.invariant_mean_error,
                row.adaptive_mean_error,
                row.crb_benchmark_mean,
                row.failures
            );
        }
        out
    }

    /// Per-parameter table: `snr_db,parameter,spike,mean_crb`.
    pub fn per_param_csv(&self) -> String {
        let mut out = String::from("snr_db,parameter,spike,mean_crb\n");
        for (row, params) in self.rows.iter().zip(&self.per_param_crb) {
            for (idx, &value) in params.iter().enumerate() {
                let kind = match idx / self.r {
                    0 => "re_amplitude",
                    1 => "im_amplitude",
                    _ => "location",
                };
                let _ = writeln!(out, "{},{},{},{}", row.snr_db, kind, idx % self.r, value);
            }
        }
        out
    }

    /// Log-log slope of the mean error against the linear SNR, fitted over
    /// points at or above `min_snr_db`.
    pub fn high_snr_slope(&self, scheme: Scheme, min_snr_db: f64) -> f64 {
        let points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|row| row.snr_db >= min_snr_db)
            .map(|row| {
                let err = match scheme {
                    Scheme::Invariant => row.invariant_mean_error,
                    Scheme::Adaptive => row.adaptive_mean_error,
                };
                ((10f64.powf(row.snr_db / 10.0)).ln(), err.ln())
            })
            .collect();
        least_squares_slope(&points)
    }
}

/// Mean weighted error of both schemes across an SNR sweep, with the
/// weighted Cramér-Rao benchmark computed from the realized noise level.
///
/// Instances are paired across SNR points (trial `t` reuses its truth), the
/// initialization is OMP on the noisy observation, and per-trial failures
/// (degenerate initialization or aborted run) are excluded from the means
/// and counted in the row.
pub fn snr_experiment(
    spec: &InstanceSpec,
    snrs_db: &[f64],
    trials: usize,
    iterations: usize,
) -> Result<SnrResult, HarnessError> {
    spec.validate()?;
    let psf = PsfWeights::new(spec.n)?;
    let len = psf.len() as f64;
    let mut rows = Vec::with_capacity(snrs_db.len());
    let mut per_param_crb = Vec::with_capacity(snrs_db.len());
    for (s_idx, &snr_db) in snrs_db.iter().enumerate() {
        let outcomes = map_trials(trials, |trial| -> Result<_, HarnessError> {
            let inst_seed = mix(&[spec.seed, TAG_SNR, trial as u64]);
            let truth = gen_instance(&spec.with_seed(inst_seed))
                .expect("validated spec cannot fail to generate");
            let clean = observe(&truth, &psf);
            let noise = NoiseSpec {
                snr: 10f64.powf(snr_db / 10.0),
                seed: mix(&[spec.seed, TAG_SNR, trial as u64, s_idx as u64, 1]),
            };
            let noisy = add_noise(&clean, &noise)?;
            let sigma_sq = clean.energy() / (len * noise.snr);
            let report = crb::crb(&truth, &psf, sigma_sq)?;

            let mut errors = [f64::NAN; 2];
            for (slot, scheme) in [Scheme::Invariant, Scheme::Adaptive].iter().enumerate() {
                let trace = run_from_spectral_init(
                    &truth,
                    &noisy,
                    *scheme,
                    CapPolicy::Auto,
                    iterations,
                    0.0,
                )?;
                if trace.failed() {
                    return Err(HarnessError::Descent(
                        spikedec_core::gd::GdError::DegenerateAmplitude { index: 0 },
                    ));
                }
                errors[slot] = weighted_error(&trace.final_params, &truth, spec.n)?;
            }
            Ok((errors[0], errors[1], report))
        });

        let mut inv_sum = 0.0;
        let mut adp_sum = 0.0;
        let mut crb_sum = 0.0;
        let mut param_sums = vec![0.0f64; 3 * spec.r];
        let mut ok = 0usize;
        for outcome in &outcomes {
            if let Ok((inv, adp, report)) = outcome {
                inv_sum += inv;
                adp_sum += adp;
                crb_sum += report.weighted_benchmark;
                for (slot, v) in param_sums.iter_mut().zip(&report.per_param) {
                    *slot += v;
                }
                ok += 1;
            }
        }
        let denom = ok.max(1) as f64;
        rows.push(SnrRow {
            snr_db,
            invariant_mean_error: inv_sum / denom,
            adaptive_mean_error: adp_sum / denom,
            crb_benchmark_mean: crb_sum / denom,
            failures: trials - ok,
        });
        per_param_crb.push(param_sums.into_iter().map(|v| v / denom).collect());
    }
    Ok(SnrResult { kappa: spec.kappa, trials, r: spec.r, rows, per_param_crb })
}
