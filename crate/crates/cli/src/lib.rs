//! Batch runner: build families from JSON configs, run certification suites and diffusion checks.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qp_tori::diffusion::{sweep_csv, Strategy};
use qp_tori::hamiltonian::HamiltonianFamily;
use qp_tori::numeric::parse_real;
use qp_tori::{Error, Result};

use commands::{CertifyOptions, DiffuseOptions, Suite};
use config::{canonical_hash, ExperimentConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PRECISION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "qptori", version, about = "Unstable quasi-periodic tori: family builder and certification runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Overrides the working precision (bits).
    #[arg(long)]
    pub precision_bits: Option<u32>,
    /// Main output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Construct a family and write it as family-v1 JSON.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a certification suite on a family file.
    Certify {
        #[arg(long)]
        family: PathBuf,
        /// conjugacy | convergence | bnf | flow-oracle | regularity
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Real radius Δ of the convergence domain (decimal string).
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        rho: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a diffusion predicate (or an escape time) and emit the witness orbit as CSV.
    Diffuse {
        #[arg(long)]
        family: PathBuf,
        /// P1..P6; defaults to the predicate of the family's variant.
        #[arg(long)]
        property: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 5)]
        grid: usize,
        /// closed_form_root | bisection | numeric
        #[arg(long, default_value = "closed_form_root")]
        strategy: String,
        /// τ of P2.
        #[arg(long)]
        tau: Option<String>,
        /// Escape distance; runs a bare escape-time search from the canonical initial condition.
        #[arg(long)]
        target: Option<String>,
        /// ln of the escape search ceiling.
        #[arg(long, default_value_t = 100.0)]
        log_t_max: f64,
        /// Witness CSV path; defaults to the --out path with extension .csv.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// List the resonance sequence (k_j, s_j) of the configured frequency map.
    Resonances {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Search Diophantine last components for the configured ω~.
    ExtendFrequency {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Invalid(_) | Error::VariantMismatch(_) => EXIT_USAGE,
        Error::Precision { .. } | Error::Capacity(_) => EXIT_PRECISION,
        _ => EXIT_FAIL,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Invalid(_) => "invalid",
        Error::Parse(_) => "parse",
        Error::Precision { .. } => "precision",
        Error::Capacity(_) => "capacity",
        Error::Resonance(_) => "resonance",
        Error::ResonantDenominator { .. } => "resonant_denominator",
        Error::Unsupported(_) => "unsupported",
        Error::DivergentBound(_) => "divergent_bound",
        Error::NoCandidate(_) => "no_candidate",
        Error::VariantMismatch(_) => "variant_mismatch",
        Error::Index(_) => "index",
    }
}

pub fn error_json(e: &Error, command: &str) -> Value {
    let mut err = json!({ "kind": error_kind(e), "message": e.to_string() });
    if let Error::Precision { required_bits, .. } = e {
        err["required_bits"] = json!(required_bits);
    }
    json!({ "command": command, "error": err, "exit_code": exit_code(e) })
}

fn meta(hash: &str, precision: u32, seed: u64, command: &str) -> Value {
    json!({
        "config_sha256": hash,
        "precision_bits": precision,
        "seed": seed,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, v: &Value) -> Result<()> {
    match out {
        Some(p) => write(p, &pretty(v)),
        None => {
            print!("{}", pretty(v));
            Ok(())
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Reads a family file; a precision override rewrites the stored precision first.
pub fn load_family(path: &Path, precision: Option<u32>) -> Result<(HamiltonianFamily, Value)> {
    let mut v: Value = serde_json::from_str(&read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let Some(p) = precision {
        v["precision"] = json!(p);
    }
    Ok((HamiltonianFamily::from_json(&v)?, v))
}

fn load_config(path: &Path, precision: Option<u32>) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(&read(path)?, precision)
}

fn real_arg(name: &str, text: &Option<String>, prec: u32) -> Result<Option<rug::Float>> {
    text.as_ref()
        .map(|t| parse_real(t, prec).map(|p| p.value).map_err(|e| Error::Parse(format!("--{name}: {e}"))))
        .transpose()
}

fn parse_property(text: &str) -> Result<u8> {
    let t = text.trim_start_matches(['P', 'p']);
    t.parse::<u8>()
        .ok()
        .filter(|i| (1..=6).contains(i))
        .ok_or_else(|| Error::Parse(format!("unknown property {text:?} (expected P1..P6)")))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Build { .. } => "build",
        Command::Certify { .. } => "certify",
        Command::Diffuse { .. } => "diffuse",
        Command::Resonances { .. } => "resonances",
        Command::ExtendFrequency { .. } => "extend-frequency",
    }
}

/// Runs one command; returns whether its outcome passed.
pub fn execute(cmd: &Command) -> Result<bool> {
    let name = command_name(cmd);
    match cmd {
        Command::Build { config, common } => {
            let cfg = load_config(config, common.precision_bits)?;
            let (fam, log) = commands::build(&cfg)?;
            let family = fam.to_json();
            let out = common.out.clone().or_else(|| cfg.outputs.family.clone().map(PathBuf::from));
            emit(out.as_deref(), &family)?;
            let log = json!({ "meta": meta(&cfg.hash, cfg.prec, common.seed, name), "build": log, "pass": true });
            let log_path = cfg
                .outputs
                .report
                .clone()
                .map(PathBuf::from)
                .or_else(|| out.as_deref().map(|p| sibling(p, ".build-log.json")));
            match log_path {
                Some(p) => write(&p, &pretty(&log))?,
                None => eprint!("{}", pretty(&log)),
            }
            Ok(true)
        }
        Command::Certify { family, suite, points, domain, rho, common } => {
            let suite: Suite = suite.parse()?;
            let (fam, raw) = load_family(family, common.precision_bits)?;
            let opts = CertifyOptions {
                seed: common.seed,
                points: *points,
                delta: real_arg("domain", domain, fam.prec())?,
                rho: real_arg("rho", rho, fam.prec())?,
            };
            let hash = canonical_hash(&json!({
                "family": raw,
                "suite": suite,
                "points": points,
                "domain": domain,
                "rho": rho,
            }));
            let (mut body, pass) = commands::certify(&fam, suite, &opts)?;
            body["meta"] = meta(&hash, fam.prec(), common.seed, name);
            emit(common.out.as_deref(), &body)?;
            Ok(pass)
        }
        Command::Diffuse { family, property, n, grid, strategy, tau, target, log_t_max, csv, common } => {
            let (fam, raw) = load_family(family, common.precision_bits)?;
            let prec = fam.prec();
            let opts = DiffuseOptions {
                property: property.as_deref().map(parse_property).transpose()?,
                n: *n,
                grid: *grid,
                strategy: strategy.parse::<Strategy>()?,
                tau: real_arg("tau", tau, prec)?,
                target: real_arg("target", target, prec)?,
                log_t_max: *log_t_max,
            };
            let hash = canonical_hash(&json!({
                "family": raw,
                "property": property,
                "n": n,
                "grid": grid,
                "strategy": strategy,
                "tau": tau,
                "target": target,
                "log_t_max": log_t_max,
            }));
            let (report, trajectory) = commands::diffuse(&fam, &opts)?;
            let mut body = serde_json::to_value(&report).expect("report");
            body["meta"] = meta(&hash, prec, common.seed, name);
            emit(common.out.as_deref(), &body)?;
            let csv_path = csv.clone().or_else(|| common.out.as_deref().map(|p| sibling(p, ".trajectory.csv")));
            if let Some(p) = csv_path {
                write(&p, &trajectory)?;
                if let Some(out) = &common.out {
                    write(&sibling(out, ".sweep.csv"), &sweep_csv(std::slice::from_ref(&report)))?;
                }
            }
            Ok(report.pass)
        }
        Command::Resonances { config, common } => {
            let cfg = load_config(config, common.precision_bits)?;
            let (mut body, pass) = commands::resonances(&cfg)?;
            body["meta"] = meta(&cfg.hash, cfg.prec, common.seed, name);
            emit(common.out.as_deref(), &body)?;
            Ok(pass)
        }
        Command::ExtendFrequency { config, common } => {
            let cfg = load_config(config, common.precision_bits)?;
            let (mut body, pass) = commands::extend(&cfg)?;
            body["meta"] = meta(&cfg.hash, cfg.prec, common.seed, name);
            emit(common.out.as_deref(), &body)?;
            Ok(pass)
        }
    }
}

/// Parses arguments, runs, prints error JSON on failure; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            print!("{}", pretty(&error_json(&e, command_name(&cli.command))));
            exit_code(&e)
        }
    }
}
