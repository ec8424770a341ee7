//! Command dispatch: run the requested operation, write its artifacts, and
//! map failures onto exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;
use spikedec_core::assign::align_to_truth;
use spikedec_core::gd::{run, weighted_error, PreconditionerKind};
use spikedec_core::init::omp_init;
use spikedec_core::kernel::check_summation_bound;
use spikedec_core::model::hessian::{
    adaptive_deviation_bound, hessian_blocks, invariant_deviation_bound,
    scaled_hessian_deviation, SEP_FLOOR_ADAPTIVE, SEP_FLOOR_INVARIANT,
};
use spikedec_core::model::{
    gradient, loss, observe, InstanceRecord, Observation, PsfWeights, SpikeParams,
};
use spikedec_core::torus;
use spikedec_core::Complex64;
use spikedec_harness::experiments::{
    basin_experiment, convergence_experiment, draw_equidistant, snr_experiment, BasinResult,
    CapPolicy, ConvergenceResult, Scheme, SnrResult,
};
use spikedec_harness::seeding::mix;
use spikedec_harness::svg::{LinePlot, Series};
use spikedec_harness::{add_noise, gen_instance, HarnessError, InstanceSpec, NoiseSpec};

use crate::config::{Command, RunConfig, SchemeChoice};
use crate::VERSION;

pub enum Outcome {
    Success,
    NumericalFailure(String),
}

#[derive(Debug)]
pub enum RunError {
    Io(std::io::Error),
    Harness(HarnessError),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Io(e) => write!(f, "{e}"),
            RunError::Harness(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<HarnessError> for RunError {
    fn from(e: HarnessError) -> Self {
        RunError::Harness(e)
    }
}

pub fn exit_code_for(err: &RunError) -> u8 {
    match err {
        RunError::Harness(HarnessError::Infeasible { .. })
        | RunError::Harness(HarnessError::InvalidSpec(_)) => 3,
        _ => 2,
    }
}

fn schemes_of(choice: SchemeChoice) -> Vec<Scheme> {
    match choice {
        SchemeChoice::Invariant => vec![Scheme::Invariant],
        SchemeChoice::Adaptive => vec![Scheme::Adaptive],
        SchemeChoice::Both => vec![Scheme::Invariant, Scheme::Adaptive],
    }
}

fn cap_policy(config: &RunConfig) -> CapPolicy {
    match config.a_cap {
        Some(a) => CapPolicy::Explicit(a),
        None => CapPolicy::Auto,
    }
}

fn instance_spec(config: &RunConfig) -> InstanceSpec {
    InstanceSpec {
        n: config.n,
        r: config.r,
        kappa: config.kappa,
        min_sep_scaled: config.min_sep,
        seed: config.seed,
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(config: &RunConfig) -> Result<Self, RunError> {
        fs::create_dir_all(&config.out_dir)?;
        Ok(Self { dir: config.out_dir.clone(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn finish(mut self, config: &RunConfig, stem: &str) -> Result<(), RunError> {
        self.write(&format!("{stem}.meta"), &config.to_config_text(VERSION))?;
        for path in &self.written {
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

pub fn execute(config: &RunConfig) -> Result<Outcome, RunError> {
    spikedec_harness::parallel::configure_threads(config.threads);
    match config.command {
        Command::Solve => solve(config),
        Command::Basin => basin(config),
        Command::DynamicRange => dynamic_range(config),
        Command::Snr => snr(config),
        Command::VerifyBounds => verify_bounds(config),
        Command::CheckDerivatives => check_derivatives(config),
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

fn solve(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = instance_spec(config);
    let truth = gen_instance(&spec)?;
    let psf = PsfWeights::new(config.n).map_err(HarnessError::Model)?;
    let clean = observe(&truth, &psf);
    let obs: Observation = match config.snr_db {
        Some(db) => add_noise(&clean, &NoiseSpec::from_db(db, mix(&[config.seed, 0x501])))?,
        None => clean,
    };

    let mut artifacts = Artifacts::new(config)?;
    let record = InstanceRecord { n: config.n, seed: config.seed, params: truth.clone() };
    let stem = format!("solve_seed{}", config.seed);
    artifacts.write(&format!("{stem}_instance.txt"), &record.to_string_record())?;

    let init = omp_init(&obs, config.r).map_err(HarnessError::Init)?;
    let start = align_to_truth(&init.params, &truth);
    let mut failed: Option<String> = None;
    for scheme in schemes_of(config.scheme) {
        let kind = match scheme {
            Scheme::Adaptive => PreconditionerKind::Adaptive,
            Scheme::Invariant => PreconditionerKind::Invariant {
                amplitude_cap: match cap_policy(config) {
                    CapPolicy::Explicit(a) => a,
                    CapPolicy::Auto => {
                        1.5 * truth.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max)
                    }
                },
            },
        };
        let trace = run(&start, &obs, Some(&truth), kind, config.iterations, config.tolerance)
            .map_err(HarnessError::Descent)?;
        artifacts.write(&format!("{stem}_{}.csv", scheme.label()), &trace.to_csv())?;
        let final_err = weighted_error(&trace.final_params, &truth, config.n)
            .map_err(HarnessError::Descent)?;
        println!(
            "{}: {} iterations, weighted error {:.3e}, loss {:.3e}{}",
            scheme.label(),
            trace.iterations_run,
            final_err,
            loss(&trace.final_params, &obs),
            if trace.failed() { " [ABORTED]" } else { "" }
        );
        if trace.failed() {
            failed = Some(format!("{} run aborted on a degenerate iterate", scheme.label()));
        }
        let estimate = InstanceRecord {
            n: config.n,
            seed: config.seed,
            params: trace.final_params.sorted_by_location(),
        };
        artifacts
            .write(&format!("{stem}_{}_estimate.txt", scheme.label()), &estimate.to_string_record())?;
    }
    artifacts.finish(config, &stem)?;
    Ok(match failed {
        Some(reason) => Outcome::NumericalFailure(reason),
        None => Outcome::Success,
    })
}

// ---------------------------------------------------------------------------
// basin
// ---------------------------------------------------------------------------

fn basin(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = instance_spec(config);
    let mut artifacts = Artifacts::new(config)?;
    let stem = format!("basin_kappa{}_seed{}", config.kappa, config.seed);
    let mut plot_series = Vec::new();
    for scheme in schemes_of(config.scheme) {
        let result: BasinResult = basin_experiment(
            &spec,
            scheme,
            cap_policy(config),
            &config.distances,
            config.trials,
            config.iterations,
        )?;
        artifacts.write(&format!("{stem}_{}.csv", scheme.label()), &result.to_csv())?;
        println!(
            "{}: success rates {:?}",
            scheme.label(),
            (0..config.distances.len())
                .map(|i| result.success_rate(i))
                .collect::<Vec<_>>()
        );
        plot_series.push(Series {
            label: scheme.label().into(),
            points: config
                .distances
                .iter()
                .enumerate()
                .map(|(i, &d)| (d, result.success_rate(i)))
                .collect(),
        });
    }
    if config.svg {
        let plot = LinePlot {
            title: format!("Basin of attraction (kappa = {})", config.kappa),
            x_label: "initialization distance".into(),
            y_label: "success rate".into(),
            log_y: false,
            series: plot_series,
        };
        artifacts.write(&format!("{stem}.svg"), &plot.render())?;
    }
    artifacts.finish(config, &stem)?;
    Ok(Outcome::Success)
}

// ---------------------------------------------------------------------------
// dynamic-range
// ---------------------------------------------------------------------------

fn dynamic_range(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = instance_spec(config);
    let mut artifacts = Artifacts::new(config)?;
    let stem = format!("dynrange_seed{}", config.seed);
    for scheme in schemes_of(config.scheme) {
        let result: ConvergenceResult = convergence_experiment(
            &spec,
            &config.kappas,
            scheme,
            cap_policy(config),
            config.trials,
            config.iterations,
        )?;
        artifacts.write(&format!("{stem}_{}.csv", scheme.label()), &result.to_csv())?;
        for (i, &kappa) in config.kappas.iter().enumerate() {
            println!(
                "{} kappa={kappa}: slope per iteration {:.4}, failures {}",
                scheme.label(),
                result.fitted_log_slope(i, 1e-11),
                result.failures[i]
            );
        }
        if config.svg {
            let plot = LinePlot {
                title: format!("Convergence ({})", scheme.label()),
                x_label: "iteration".into(),
                y_label: "median weighted error".into(),
                log_y: true,
                series: config
                    .kappas
                    .iter()
                    .enumerate()
                    .map(|(i, &kappa)| Series {
                        label: format!("kappa = {kappa}"),
                        points: result.curves[i]
                            .iter()
                            .enumerate()
                            .map(|(k, &e)| (k as f64, e))
                            .collect(),
                    })
                    .collect(),
            };
            artifacts.write(&format!("{stem}_{}.svg", scheme.label()), &plot.render())?;
        }
    }
    artifacts.finish(config, &stem)?;
    Ok(Outcome::Success)
}

// ---------------------------------------------------------------------------
// snr
// ---------------------------------------------------------------------------

fn snr(config: &RunConfig) -> Result<Outcome, RunError> {
    let spec = instance_spec(config);
    let mut artifacts = Artifacts::new(config)?;
    let stem = format!("snr_kappa{}_seed{}", config.kappa, config.seed);
    let result: SnrResult =
        snr_experiment(&spec, &config.snrs_db, config.trials, config.iterations)?;
    artifacts.write(&format!("{stem}.csv"), &result.to_csv())?;
    artifacts.write(&format!("{stem}_crb_params.csv"), &result.per_param_csv())?;
    for row in &result.rows {
        println!(
            "{} dB: invariant {:.3e}, adaptive {:.3e}, CRB {:.3e}, failures {}",
            row.snr_db,
            row.invariant_mean_error,
            row.adaptive_mean_error,
            row.crb_benchmark_mean,
            row.failures
        );
    }
    if config.svg {
        let series = |label: &str, f: &dyn Fn(&spikedec_harness::experiments::SnrRow) -> f64| Series {
            label: label.into(),
            points: result.rows.iter().map(|r| (r.snr_db, f(r))).collect(),
        };
        let plot = LinePlot {
            title: format!("Error vs SNR (kappa = {})", config.kappa),
            x_label: "SNR (dB)".into(),
            y_label: "mean weighted error".into(),
            log_y: true,
            series: vec![
                series("invariant", &|r| r.invariant_mean_error),
                series("adaptive", &|r| r.adaptive_mean_error),
                series("CRB benchmark", &|r| r.crb_benchmark_mean),
            ],
        };
        artifacts.write(&format!("{stem}.svg"), &plot.render())?;
    }
    artifacts.finish(config, &stem)?;
    Ok(Outcome::Success)
}

// ---------------------------------------------------------------------------
// verify-bounds
// ---------------------------------------------------------------------------

fn separated_locations(rng: &mut ChaCha8Rng, r: usize, n: usize, target: f64) -> Vec<f64> {
    use rand::Rng;
    let delta_min = target / (n + 1) as f64;
    let slack = (1.0 / r as f64 - delta_min).max(0.0);
    let offset: f64 = rng.random_range(-0.5..0.5);
    (0..r)
        .map(|j| {
            torus::wrap(offset + j as f64 / r as f64 + rng.random_range(-0.45..0.45) * slack)
        })
        .collect()
}

fn verify_bounds(config: &RunConfig) -> Result<Outcome, RunError> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut artifacts = Artifacts::new(config)?;
    let stem = format!("verify_bounds_seed{}", config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, 0xB0D]));
    let mut rows = String::from("check,instances,violations,worst_lhs_over_rhs\n");
    let mut total_violations = 0usize;

    // Kernel summation bounds on randomized admissible configurations.
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    let sweeps = config.trials;
    for i in 0..sweeps {
        let n: usize = rng.random_range(4..=64);
        let r: usize = rng.random_range(2..=12);
        let mut tau: Vec<f64> = (0..r).map(|_| rng.random_range(-0.5..0.5)).collect();
        tau.sort_by(f64::total_cmp);
        let min_gap = 1.0 / (n as f64 + 1.0);
        let mut kept: Vec<f64> = Vec::new();
        for &t in &tau {
            if kept.iter().all(|&k| torus::distance(t, k) >= min_gap) {
                kept.push(t);
            }
        }
        if kept.len() < 2 {
            continue;
        }
        let delta = torus::min_separation(&kept).unwrap();
        let max_u = rng.random_range(1e-6..0.45) * delta;
        let u: Vec<f64> = (0..kept.len() * kept.len())
            .map(|_| rng.random_range(-max_u..=max_u))
            .collect();
        let check = check_summation_bound(&kept, Some(&u), n, i % 4)
            .map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        if !check.holds {
            violations += 1;
        }
        if check.rhs.is_finite() && check.rhs > 0.0 {
            worst = worst.max(check.lhs / check.rhs);
        }
    }
    let _ = writeln!(rows, "kernel_summation,{sweeps},{violations},{worst}");
    total_violations += violations;

    // Scaled-Hessian deviation bounds for both schemes.
    for (label, invariant) in [("hessian_invariant", true), ("hessian_adaptive", false)] {
        let mut violations = 0usize;
        let mut worst = 0.0f64;
        let count = 200usize;
        for trial in 0..count {
            let r = 2 + trial % 4;
            let floor = if invariant { SEP_FLOOR_INVARIANT } else { SEP_FLOOR_ADAPTIVE };
            let target = floor * (1.0 + rng.random::<f64>());
            let n = ((target * 1.35 * r as f64).ceil() as usize).max(8);
            let kappa = 1.0 + 1.5 * rng.random::<f64>();
            let amplitudes: Vec<Complex64> = (0..r)
                .map(|_| {
                    let um: f64 = rng.random();
                    Complex64::from_polar(
                        (1.0 + (kappa * kappa - 1.0) * um).sqrt(),
                        std::f64::consts::TAU * rng.random::<f64>(),
                    )
                })
                .collect();
            let truth =
                SpikeParams::new(amplitudes, separated_locations(&mut rng, r, n, target))
                    .map_err(HarnessError::Model)?;
            let delta = torus::min_separation(truth.locations()).unwrap();
            let sep = (n + 1) as f64 * delta;
            let psf = PsfWeights::new(n).map_err(HarnessError::Model)?;
            let obs = observe(&truth, &psf);
            let s: f64 = rng.random_range(0.0..0.95);
            let mut draw_rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, trial as u64]));
            let point = draw_equidistant(&truth, n, s, &mut draw_rng);
            let moduli: Vec<f64> = truth.amplitudes().iter().map(|a| a.norm()).collect();
            let a_max = moduli.iter().cloned().fold(0.0f64, f64::max);
            let a_min = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
            let (dev, bound) = if invariant {
                let cap = (1.5 * a_max)
                    .max(point.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max));
                let precond = spikedec_core::gd::build_preconditioner(
                    PreconditionerKind::Invariant { amplitude_cap: cap },
                    point.amplitudes(),
                    n,
                )
                .map_err(HarnessError::Descent)?;
                (
                    scaled_hessian_deviation(&point, &truth, &precond, &obs)
                        .map_err(HarnessError::Model)?,
                    invariant_deviation_bound(s, a_min / cap, a_max / cap, a_max / a_min, sep, n),
                )
            } else {
                let precond = spikedec_core::gd::build_preconditioner(
                    PreconditionerKind::Adaptive,
                    point.amplitudes(),
                    n,
                )
                .map_err(HarnessError::Descent)?;
                (
                    scaled_hessian_deviation(&point, &truth, &precond, &obs)
                        .map_err(HarnessError::Model)?,
                    adaptive_deviation_bound(s, a_max / a_min, sep),
                )
            };
            if dev > bound {
                violations += 1;
            }
            worst = worst.max(dev / bound);
        }
        let _ = writeln!(rows, "{label},{count},{violations},{worst}");
        total_violations += violations;
    }

    artifacts.write(&format!("{stem}.csv"), &rows)?;
    println!("{rows}");
    println!("{total_violations} violated inequalities");
    artifacts.finish(config, &stem)?;
    if total_violations > 0 {
        return Ok(Outcome::NumericalFailure(format!(
            "{total_violations} bound violations detected"
        )));
    }
    Ok(Outcome::Success)
}

// ---------------------------------------------------------------------------
// check-derivatives
// ---------------------------------------------------------------------------

fn check_derivatives(config: &RunConfig) -> Result<Outcome, RunError> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut artifacts = Artifacts::new(config)?;
    let stem = format!("check_derivatives_seed{}", config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, 0xFD]));
    let step = 1e-6;
    let mut rows = String::from("instance,r,n,max_gradient_rel,max_hessian_rel\n");
    let mut max_grad = 0.0f64;
    let mut max_hess = 0.0f64;
    for trial in 0..config.trials {
        let r = 1 + trial % 8;
        let n = 6 + 6 * (trial % 8);
        let psf = PsfWeights::new(n).map_err(HarnessError::Model)?;
        let mut locations: Vec<f64> = (0..r)
            .map(|i| -0.5 + (i as f64 + 0.2 + 0.6 * rng.random::<f64>()) / r as f64)
            .collect();
        locations.sort_by(f64::total_cmp);
        let amplitudes: Vec<Complex64> = (0..r)
            .map(|_| {
                Complex64::from_polar(
                    0.5 + 1.5 * rng.random::<f64>(),
                    std::f64::consts::TAU * rng.random::<f64>(),
                )
            })
            .collect();
        let truth = SpikeParams::new(amplitudes, locations).map_err(HarnessError::Model)?;
        let obs = observe(&truth, &psf);
        let scale = spikedec_core::kernel::location_scale(n);
        let point = SpikeParams::new(
            truth
                .amplitudes()
                .iter()
                .map(|a| {
                    a * (1.0
                        + 0.3
                            * Complex64::new(
                                rng.random::<f64>() - 0.5,
                                rng.random::<f64>() - 0.5,
                            ))
                })
                .collect(),
            truth
                .locations()
                .iter()
                .map(|t| t + 0.3 * (rng.random::<f64>() - 0.5) / scale)
                .collect(),
        )
        .map_err(HarnessError::Model)?;

        let coords = coords_of(&point);
        let dim = 3 * r;
        let analytic = flat_gradient(&gradient(&point, &obs));
        let grad_scale = analytic.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
        let mut inst_grad = 0.0f64;
        for idx in 0..dim {
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            plus[idx] += step;
            minus[idx] -= step;
            let fd = (loss(&params_from(&plus, r), &obs) - loss(&params_from(&minus, r), &obs))
                / (2.0 * step);
            let denom = analytic[idx].abs().max(fd.abs()).max(1e-3 * grad_scale);
            inst_grad = inst_grad.max((analytic[idx] - fd).abs() / denom);
        }
        let jac = hessian_blocks(&point, &obs).real_jacobian(&point);
        let jac_scale = jac.data().iter().map(|v| v.abs()).fold(1.0f64, f64::max);
        let mut inst_hess = 0.0f64;
        for col in 0..dim {
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            plus[col] += step;
            minus[col] -= step;
            let gp = flat_gradient(&gradient(&params_from(&plus, r), &obs));
            let gm = flat_gradient(&gradient(&params_from(&minus, r), &obs));
            for row in 0..dim {
                let fd = (gp[row] - gm[row]) / (2.0 * step);
                let a = jac[(row, col)];
                let denom = a.abs().max(fd.abs()).max(1e-5 * jac_scale);
                inst_hess = inst_hess.max((a - fd).abs() / denom);
            }
        }
        let _ = writeln!(rows, "{trial},{r},{n},{inst_grad},{inst_hess}");
        max_grad = max_grad.max(inst_grad);
        max_hess = max_hess.max(inst_hess);
    }
    artifacts.write(&format!("{stem}.csv"), &rows)?;
    println!(
        "max relative gradient error {max_grad:.3e} (tolerance 1e-6), max relative hessian error {max_hess:.3e} (tolerance 1e-5)"
    );
    artifacts.finish(config, &stem)?;
    if max_grad >= 1e-6 || max_hess >= 1e-5 {
        return Ok(Outcome::NumericalFailure(
            "finite-difference agreement exceeded tolerance".into(),
        ));
    }
    Ok(Outcome::Success)
}

fn coords_of(params: &SpikeParams) -> Vec<f64> {
    let r = params.r();
    let mut coords = Vec::with_capacity(3 * r);
    coords.extend(params.amplitudes().iter().map(|a| a.re));
    coords.extend(params.amplitudes().iter().map(|a| a.im));
    coords.extend_from_slice(params.locations());
    coords
}

fn params_from(coords: &[f64], r: usize) -> SpikeParams {
    SpikeParams::new(
        (0..r).map(|j| Complex64::new(coords[j], coords[r + j])).collect(),
        coords[2 * r..].to_vec(),
    )
    .expect("finite-difference coordinates are valid")
}

fn flat_gradient(g: &spikedec_core::model::Gradient) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * g.amplitude.len());
    out.extend(g.amplitude.iter().map(|z| z.re));
    out.extend(g.amplitude.iter().map(|z| z.im));
    out.extend_from_slice(&g.location);
    out
}
