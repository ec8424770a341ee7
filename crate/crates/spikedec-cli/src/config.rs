//! Run configuration: flat key-value config files, mirrored one-to-one by
//! command-line flags, with flags taking precedence.
//!
//! The resolved configuration is written next to every output as a
//! metadata file that is itself a valid config, so any run can be
//! reproduced with `spikedec --config <metadata-file>`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SPIKEDEC_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Basin,
    DynamicRange,
    Snr,
    VerifyBounds,
    CheckDerivatives,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "solve" => Ok(Command::Solve),
            "basin" => Ok(Command::Basin),
            "dynamic-range" => Ok(Command::DynamicRange),
            "snr" => Ok(Command::Snr),
            "verify-bounds" => Ok(Command::VerifyBounds),
            "check-derivatives" => Ok(Command::CheckDerivatives),
            other => Err(format!(
                "unknown command {other:?} (expected solve | basin | dynamic-range | snr | verify-bounds | check-derivatives)"
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Basin => "basin",
            Command::DynamicRange => "dynamic-range",
            Command::Snr => "snr",
            Command::VerifyBounds => "verify-bounds",
            Command::CheckDerivatives => "check-derivatives",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Invariant,
    Adaptive,
    Both,
}

impl SchemeChoice {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "invariant" => Ok(SchemeChoice::Invariant),
            "adaptive" => Ok(SchemeChoice::Adaptive),
            "both" => Ok(SchemeChoice::Both),
            other => Err(format!("unknown scheme {other:?} (expected invariant | adaptive | both)")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeChoice::Invariant => "invariant",
            SchemeChoice::Adaptive => "adaptive",
            SchemeChoice::Both => "both",
        }
    }
}

/// Raw option set before defaults; every field mirrors one config key and
/// one flag.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub command: Option<Command>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub kappa: Option<f64>,
    pub min_sep: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<SchemeChoice>,
    pub a_cap: Option<f64>,
    pub iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub trials: Option<usize>,
    pub distances: Option<Vec<f64>>,
    pub snrs_db: Option<Vec<f64>>,
    pub kappas: Option<Vec<f64>>,
    pub snr_db: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub svg: Option<bool>,
}

impl RawConfig {
    /// Overlay `self` on `base`: any field set here wins.
    pub fn over(self, base: RawConfig) -> RawConfig {
        RawConfig {
            command: self.command.or(base.command),
            n: self.n.or(base.n),
            r: self.r.or(base.r),
            kappa: self.kappa.or(base.kappa),
            min_sep: self.min_sep.or(base.min_sep),
            seed: self.seed.or(base.seed),
            scheme: self.scheme.or(base.scheme),
            a_cap: self.a_cap.or(base.a_cap),
            iterations: self.iterations.or(base.iterations),
            tolerance: self.tolerance.or(base.tolerance),
            trials: self.trials.or(base.trials),
            distances: self.distances.or(base.distances),
            snrs_db: self.snrs_db.or(base.snrs_db),
            kappas: self.kappas.or(base.kappas),
            snr_db: self.snr_db.or(base.snr_db),
            out_dir: self.out_dir.or(base.out_dir),
            threads: self.threads.or(base.threads),
            svg: self.svg.or(base.svg),
        }
    }
}

fn parse_list(value: &str, key: &str) -> Result<Vec<f64>, String> {
    let items: Result<Vec<f64>, _> = value
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect();
    items.map_err(|_| format!("bad value for {key}: {value:?} (expected comma-separated reals)"))
}

/// Parse the flat `key = value` config format. Unknown keys are rejected;
/// `#` starts a comment; later keys override earlier ones.
pub fn parse_config_text(text: &str) -> Result<RawConfig, String> {
    let mut cfg = RawConfig::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`, got {line:?}", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| format!("line {}: bad value for {key}: {what:?}", lineno + 1);
        match key {
            "command" => cfg.command = Some(Command::parse(value)?),
            "n" => cfg.n = Some(value.parse().map_err(|_| bad(value))?),
            "r" => cfg.r = Some(value.parse().map_err(|_| bad(value))?),
            "kappa" => cfg.kappa = Some(value.parse().map_err(|_| bad(value))?),
            "min-sep" => cfg.min_sep = Some(value.parse().map_err(|_| bad(value))?),
            "seed" => cfg.seed = Some(value.parse().map_err(|_| bad(value))?),
            "scheme" => cfg.scheme = Some(SchemeChoice::parse(value)?),
            "a-cap" => cfg.a_cap = Some(value.parse().map_err(|_| bad(value))?),
            "iterations" => cfg.iterations = Some(value.parse().map_err(|_| bad(value))?),
            "tolerance" => cfg.tolerance = Some(value.parse().map_err(|_| bad(value))?),
            "trials" => cfg.trials = Some(value.parse().map_err(|_| bad(value))?),
            "distances" => cfg.distances = Some(parse_list(value, key)?),
            "snrs-db" => cfg.snrs_db = Some(parse_list(value, key)?),
            "kappas" => cfg.kappas = Some(parse_list(value, key)?),
            "snr-db" => cfg.snr_db = Some(value.parse().map_err(|_| bad(value))?),
            "out-dir" => cfg.out_dir = Some(PathBuf::from(value)),
            "threads" => cfg.threads = Some(value.parse().map_err(|_| bad(value))?),
            "svg" => cfg.svg = Some(value.parse().map_err(|_| bad(value))?),
            other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
        }
    }
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<RawConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config_text(&text)
}

/// Fully resolved configuration with every default applied and every field
/// validated against the solver preconditions.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub r: usize,
    pub kappa: f64,
    pub min_sep: f64,
    pub seed: u64,
    pub scheme: SchemeChoice,
    pub a_cap: Option<f64>,
    pub iterations: usize,
    pub tolerance: f64,
    pub trials: usize,
    pub distances: Vec<f64>,
    pub snrs_db: Vec<f64>,
    pub kappas: Vec<f64>,
    pub snr_db: Option<f64>,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub svg: bool,
}

impl RunConfig {
    /// Apply defaults and validate. `raw` must carry a command by now.
    pub fn resolve(raw: RawConfig) -> Result<RunConfig, String> {
        let command = raw.command.ok_or_else(|| {
            "no command given (pass a subcommand or set `command = ...` in the config file)"
                .to_string()
        })?;
        let out_dir = raw
            .out_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("spikedec-out"));
        let cfg = RunConfig {
            command,
            n: raw.n.unwrap_or(32),
            r: raw.r.unwrap_or(6),
            // The SNR experiment's reference protocol runs at dynamic
            // range 3; everything else defaults to 1.
            kappa: raw.kappa.unwrap_or(match command {
                Command::Snr => 3.0,
                _ => 1.0,
            }),
            min_sep: raw.min_sep.unwrap_or(2.0),
            seed: raw.seed.unwrap_or(0),
            scheme: raw.scheme.unwrap_or(SchemeChoice::Both),
            a_cap: raw.a_cap,
            iterations: raw.iterations.unwrap_or(200),
            tolerance: raw.tolerance.unwrap_or(0.0),
            trials: raw.trials.unwrap_or(match command {
                Command::CheckDerivatives => 100,
                Command::DynamicRange => 24,
                _ => 1000,
            }),
            distances: raw
                .distances
                .unwrap_or_else(|| vec![0.05, 0.1, 0.18, 0.35, 0.5, 0.75, 1.0, 1.5]),
            snrs_db: raw
                .snrs_db
                .unwrap_or_else(|| (2..=10).map(|i| 5.0 * i as f64).collect()),
            kappas: raw.kappas.unwrap_or_else(|| vec![1.0, 3.0, 6.0]),
            snr_db: raw.snr_db,
            out_dir,
            threads: raw.threads.unwrap_or(0),
            svg: raw.svg.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if self.n < 2 {
            return Err(format!("n = {} rejected (need n >= 2)", self.n));
        }
        if self.r == 0 {
            return Err("r = 0 rejected (need at least one spike)".into());
        }
        if !(self.kappa >= 1.0) {
            return Err(format!("kappa = {} rejected (need kappa >= 1)", self.kappa));
        }
        if !(self.min_sep > 0.0) {
            return Err(format!("min-sep = {} rejected (need > 0)", self.min_sep));
        }
        if self.min_sep * self.r as f64 > (self.n + 1) as f64 {
            return Err(format!(
                "min-sep = {} infeasible for r = {} at n = {}",
                self.min_sep, self.r, self.n
            ));
        }
        if self.iterations == 0 {
            return Err("iterations = 0 rejected (need at least 1)".into());
        }
        if !(self.tolerance >= 0.0) {
            return Err(format!("tolerance = {} rejected (need >= 0)", self.tolerance));
        }
        if self.trials == 0 {
            return Err("trials = 0 rejected".into());
        }
        if let Some(a) = self.a_cap {
            if !(a > 0.0) {
                return Err(format!("a-cap = {a} rejected (need > 0)"));
            }
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(format!("snr-db = {snr} rejected"));
            }
        }
        if self.distances.iter().any(|d| !(*d >= 0.0)) {
            return Err("distances must be nonnegative".into());
        }
        if self.kappas.iter().any(|k| !(*k >= 1.0)) {
            return Err("kappas must all be >= 1".into());
        }
        Ok(())
    }

    /// Render as a config file reproducing this run exactly.
    pub fn to_config_text(&self, version: &str) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("command", self.command.name().into());
        map.insert("n", self.n.to_string());
        map.insert("r", self.r.to_string());
        map.insert("kappa", self.kappa.to_string());
        map.insert("min-sep", self.min_sep.to_string());
        map.insert("seed", self.seed.to_string());
        map.insert("scheme", self.scheme.name().into());
        if let Some(a) = self.a_cap {
            map.insert("a-cap", a.to_string());
        }
        map.insert("iterations", self.iterations.to_string());
        map.insert("tolerance", self.tolerance.to_string());
        map.insert("trials", self.trials.to_string());
        map.insert("distances", join(&self.distances));
        map.insert("snrs-db", join(&self.snrs_db));
        map.insert("kappas", join(&self.kappas));
        if let Some(snr) = self.snr_db {
            map.insert("snr-db", snr.to_string());
        }
        map.insert("out-dir", self.out_dir.display().to_string());
        map.insert("threads", self.threads.to_string());
        map.insert("svg", self.svg.to_string());

        let mut out = String::new();
        out.push_str(&format!("# spikedec {version} run metadata\n"));
        out.push_str("# re-run with: spikedec --config <this file>\n");
        for (k, v) in map {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
