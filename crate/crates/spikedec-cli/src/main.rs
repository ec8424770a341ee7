//! `spikedec` — point-source recovery from band-limited Fourier samples.
//!
//! Subcommands map onto the library operations: `solve` runs both
//! preconditioned descent schemes on one seeded instance; `basin`,
//! `dynamic-range` and `snr` run the experiment sweeps; `verify-bounds`
//! certifies the kernel summation bounds and the scaled-Hessian deviation
//! bounds on randomized instances; `check-derivatives` validates the
//! analytic gradient and Hessian against finite differences.
//!
//! Every run writes CSV tables plus a metadata file that is itself a valid
//! `--config` input reproducing the run byte for byte. Exit codes:
//! 0 success, 1 usage error, 2 numerical failure, 3 infeasible experiment.

mod config;
mod runner;

use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, Command as ClapCommand};

use config::{parse_config_file, Command, RawConfig, RunConfig, SchemeChoice};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn cli() -> ClapCommand {
    let run_args = [
        Arg::new("config").long("config").value_name("FILE")
            .help("Flat key = value config file; flags override its values"),
        Arg::new("n").long("n").value_name("INT")
            .help("Half-bandwidth; N = 2n+1 Fourier samples [default: 32]"),
        Arg::new("r").long("r").value_name("INT")
            .help("Number of spikes [default: 6]"),
        Arg::new("kappa").long("kappa").value_name("REAL")
            .help("Amplitude dynamic range, >= 1 [default: 1, snr: 3]"),
        Arg::new("min-sep").long("min-sep").value_name("REAL")
            .help("Scaled separation floor (n+1)*Delta [default: 2]"),
        Arg::new("seed").long("seed").value_name("INT")
            .help("Master seed [default: 0]"),
        Arg::new("scheme").long("scheme").value_name("NAME")
            .help("invariant | adaptive | both [default: both]"),
        Arg::new("a-cap").long("a-cap").value_name("REAL")
            .help("Invariant-scheme amplitude cap A (default: 3/2 max |a*|)"),
        Arg::new("iterations").long("iterations").value_name("INT")
            .help("Descent steps per run [default: 200]"),
        Arg::new("tolerance").long("tolerance").value_name("REAL")
            .help("Early-exit tolerance; 0 disables [default: 0]"),
        Arg::new("trials").long("trials").value_name("INT")
            .help("Trials per sweep point [default: 1000]"),
        Arg::new("distances").long("distances").value_name("LIST")
            .help("Comma-separated initialization distances (basin)"),
        Arg::new("snrs-db").long("snrs-db").value_name("LIST")
            .help("Comma-separated SNR sweep points in dB (snr)"),
        Arg::new("kappas").long("kappas").value_name("LIST")
            .help("Comma-separated dynamic ranges (dynamic-range)"),
        Arg::new("snr-db").long("snr-db").value_name("REAL")
            .help("Observation noise level for solve (default: noiseless)"),
        Arg::new("out-dir").long("out-dir").value_name("DIR")
            .help("Output directory [default: $SPIKEDEC_OUT_DIR or ./spikedec-out]"),
        Arg::new("threads").long("threads").value_name("INT")
            .help("Worker threads; 0 = available parallelism [default: 0]"),
        Arg::new("svg").long("svg").action(ArgAction::SetTrue)
            .help("Also render SVG plots next to the CSV tables"),
    ]
    .map(|arg| arg.global(true));
    ClapCommand::new("spikedec")
        .version(VERSION)
        .about("Point-source recovery from band-limited Fourier samples by preconditioned gradient descent")
        .subcommand_required(false)
        .args(&run_args)
        .subcommands([
            ClapCommand::new("solve").about("Recover one seeded instance from spectral initialization"),
            ClapCommand::new("basin").about("Success rate vs initialization distance"),
            ClapCommand::new("dynamic-range").about("Convergence curves across amplitude dynamic ranges"),
            ClapCommand::new("snr").about("Statistical error vs SNR with the Cramér-Rao benchmark"),
            ClapCommand::new("verify-bounds").about("Certify kernel summation and scaled-Hessian bounds on random instances"),
            ClapCommand::new("check-derivatives").about("Validate analytic gradient and Hessian against finite differences"),
        ])
}

fn raw_from_matches(m: &clap::ArgMatches) -> Result<RawConfig, String> {
    let mut raw = RawConfig::default();
    let get = |key: &str| -> Option<&String> {
        if m.value_source(key) == Some(ValueSource::CommandLine) {
            m.get_one::<String>(key)
        } else {
            None
        }
    };
    let parse_num = |key: &str, v: &str| -> Result<f64, String> {
        v.parse().map_err(|_| format!("bad value for --{key}: {v:?}"))
    };
    if let Some(v) = get("n") {
        raw.n = Some(v.parse().map_err(|_| format!("bad value for --n: {v:?}"))?);
    }
    if let Some(v) = get("r") {
        raw.r = Some(v.parse().map_err(|_| format!("bad value for --r: {v:?}"))?);
    }
    if let Some(v) = get("kappa") {
        raw.kappa = Some(parse_num("kappa", v)?);
    }
    if let Some(v) = get("min-sep") {
        raw.min_sep = Some(parse_num("min-sep", v)?);
    }
    if let Some(v) = get("seed") {
        raw.seed = Some(v.parse().map_err(|_| format!("bad value for --seed: {v:?}"))?);
    }
    if let Some(v) = get("scheme") {
        raw.scheme = Some(SchemeChoice::parse(v)?);
    }
    if let Some(v) = get("a-cap") {
        raw.a_cap = Some(parse_num("a-cap", v)?);
    }
    if let Some(v) = get("iterations") {
        raw.iterations =
            Some(v.parse().map_err(|_| format!("bad value for --iterations: {v:?}"))?);
    }
    if let Some(v) = get("tolerance") {
        raw.tolerance = Some(parse_num("tolerance", v)?);
    }
    if let Some(v) = get("trials") {
        raw.trials = Some(v.parse().map_err(|_| format!("bad value for --trials: {v:?}"))?);
    }
    let parse_list = |key: &str, v: &str| -> Result<Vec<f64>, String> {
        v.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("bad value for --{key}: {v:?}"))
    };
    if let Some(v) = get("distances") {
        raw.distances = Some(parse_list("distances", v)?);
    }
    if let Some(v) = get("snrs-db") {
        raw.snrs_db = Some(parse_list("snrs-db", v)?);
    }
    if let Some(v) = get("kappas") {
        raw.kappas = Some(parse_list("kappas", v)?);
    }
    if let Some(v) = get("snr-db") {
        raw.snr_db = Some(parse_num("snr-db", v)?);
    }
    if let Some(v) = get("out-dir") {
        raw.out_dir = Some(v.into());
    }
    if let Some(v) = get("threads") {
        raw.threads = Some(v.parse().map_err(|_| format!("bad value for --threads: {v:?}"))?);
    }
    if m.get_flag("svg") {
        raw.svg = Some(true);
    }
    Ok(raw)
}

enum ConfigOutcome {
    Run(Box<RunConfig>),
    /// Help or version text was printed; exit cleanly.
    Printed,
}

fn assemble_config() -> Result<ConfigOutcome, String> {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return Ok(ConfigOutcome::Printed);
        }
        Err(e) => return Err(e.to_string()),
    };
    let mut flags = raw_from_matches(&matches)?;
    if let Some((name, _)) = matches.subcommand() {
        flags.command = Some(Command::parse(name)?);
    }
    let base = match matches.get_one::<String>("config") {
        Some(path) => parse_config_file(std::path::Path::new(path))?,
        None => RawConfig::default(),
    };
    RunConfig::resolve(flags.over(base)).map(|cfg| ConfigOutcome::Run(Box::new(cfg)))
}

fn main() -> ExitCode {
    let config = match assemble_config() {
        Ok(ConfigOutcome::Run(cfg)) => *cfg,
        Ok(ConfigOutcome::Printed) => return ExitCode::SUCCESS,
        Err(message) => {
            let message = message.trim_start();
            if message.starts_with("error") {
                eprintln!("{message}");
            } else {
                eprintln!("error: {message}");
            }
            return ExitCode::from(1);
        }
    };
    match runner::execute(&config) {
        Ok(runner::Outcome::Success) => ExitCode::SUCCESS,
        Ok(runner::Outcome::NumericalFailure(reason)) => {
            eprintln!("numerical failure: {reason}");
            ExitCode::from(2)
        }
        Err(err) => {
            let code = runner::exit_code_for(&err);
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}
