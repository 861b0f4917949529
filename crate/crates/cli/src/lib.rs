//! Command-line driver: campaign sweeps, complexity reports, audits, and
//! learning-curve export.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use hitscan_core::campaign::run_sweep;
use hitscan_core::complexity::compute_complexity;
use hitscan_core::oracle::TabularSource;
use hitscan_core::theory::run_audit;
use hitscan_core::{Family, OracleSpec, Strategy, Threshold};
use serde::Serialize;

use crate::config::{Overrides, RunConfig};

pub const OUT_ENV: &str = "HITSCAN_OUT";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "hitscan", version, about = "Batched active search for threshold hits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a (strategy x seed) campaign sweep.
    Run(RunArgs),
    /// Compute dataset complexity metrics.
    Complexity(ComplexityArgs),
    /// Run the numerical audits on small instances.
    Audit(AuditArgs),
    /// Export long-format learning curves from a run directory.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (TOML, or a manifest.json from an earlier run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replaces the configured seeds; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "hitscan-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Replaces the configured strategies; repeatable.
    #[arg(long = "strategy", value_parser = parse_strategy)]
    pub strategies: Vec<Strategy>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Threshold such as `q0.10` (top fraction) or `a0.5` (absolute).
    #[arg(long, value_parser = parse_threshold)]
    pub tau: Option<Threshold>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Synthetic family, used when no config is given.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Delimited table to analyse instead of a synthetic family.
    #[arg(long, requires = "response")]
    pub tabular: Option<PathBuf>,
    /// Response column of `--tabular`.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_parser = parse_threshold)]
    pub tau: Option<Threshold>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Directory written by `hitscan run`.
    #[arg(long)]
    pub from: PathBuf,
    /// Output file; defaults to `curves.csv` inside `--from`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: hitscan_core::Error| e.to_string())
}

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    s.parse().map_err(|e: hitscan_core::Error| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: hitscan_core::Error| e.to_string())
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(runtime)?;
    s.push('\n');
    Ok(s)
}

fn load_config(path: Option<&Path>) -> Result<Option<RunConfig>, CliError> {
    path.map(RunConfig::load).transpose()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    jobs: usize,
    files: ManifestFiles,
    failed: Vec<String>,
    started_unix: f64,
    finished_unix: f64,
    wall_clock_secs: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct ManifestFiles {
    aggregate: String,
    events: Vec<String>,
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let started = now_unix();
    let mut cfg = load_config(args.common.config.as_deref())?
        .ok_or_else(|| CliError::Usage("run needs --config".into()))?;
    cfg.apply(&Overrides {
        seeds: args.common.seeds.clone(),
        strategies: args.strategies.clone(),
        cycles: args.cycles,
        batch_size: args.batch,
        threshold: args.tau,
    });
    let cfg = cfg.resolve()?;
    let sweep = run_sweep(&cfg.sweep(), args.jobs).map_err(runtime)?;

    let out = &args.common.out;
    let pool_size = cfg.oracle.pool_size.unwrap_or(0);
    let mut events = Vec::new();
    let mut failed = Vec::new();
    let mut wall = BTreeMap::new();
    for cell in &sweep.cells {
        let name = output::event_file_name(cell.strategy, cell.seed);
        let evs = match &cell.result {
            Ok(r) => {
                wall.insert(name.clone(), r.wall_clock.0.iter().sum());
                output::events_for(r, pool_size)
            }
            Err(e) => {
                failed.push(format!("{} seed {}: {e}", cell.strategy, cell.seed));
                vec![output::Event::Error {
                    strategy: cell.strategy,
                    seed: cell.seed,
                    message: e.to_string(),
                }]
            }
        };
        write(&out.join("events").join(&name), &output::jsonl(&evs)?)?;
        events.push(format!("events/{name}"));
    }
    write(&out.join("aggregate.csv"), &output::aggregate_csv(&sweep.aggregate))?;
    let manifest = Manifest {
        tool: "hitscan",
        version: VERSION,
        command: "run",
        config: &cfg,
        jobs: args.jobs,
        files: ManifestFiles {
            aggregate: "aggregate.csv".into(),
            events,
        },
        failed: failed.clone(),
        started_unix: started,
        finished_unix: now_unix(),
        wall_clock_secs: wall,
    };
    write(&out.join("manifest.json"), &to_json(&manifest)?)?;
    for row in sweep.aggregate.iter().filter(|r| r.cycle == cfg.cycles) {
        println!(
            "{:<20} hit_ratio {:.3} +- {:.3} ({} seeds)",
            row.strategy.name(),
            row.mean_hit_ratio,
            row.std_hit_ratio,
            row.n_seeds
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} campaign(s) failed: {}", failed.len(), failed.join("; "))))
    }
}

pub fn cmd_complexity(args: &ComplexityArgs) -> Result<(), CliError> {
    let mut cfg = match (load_config(args.common.config.as_deref())?, &args.tabular, args.family) {
        (Some(c), None, None) => c,
        (None, Some(path), None) => RunConfig::new(OracleSpec::tabular(TabularSource {
            path: path.clone(),
            response: args.response.clone().expect("clap requires --response"),
            features: None,
            name_column: None,
        })),
        (None, None, Some(f)) => RunConfig::new(OracleSpec::new(f)),
        _ => {
            return Err(CliError::Usage(
                "complexity needs exactly one of --config, --family, --tabular".into(),
            ))
        }
    };
    if !args.common.seeds.is_empty() {
        cfg.seeds = args.common.seeds.clone();
    }
    if let Some(t) = args.tau {
        cfg.complexity.threshold = t;
    }
    cfg.complexity.threshold.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let report = compute_complexity(&cfg.oracle, &cfg.seeds, &cfg.complexity).map_err(|e| match e {
        hitscan_core::Error::Tabular(_) | hitscan_core::Error::Io(_) | hitscan_core::Error::InvalidInput(_) => {
            CliError::Config(e.to_string())
        }
        other => runtime(other),
    })?;
    let out = &args.common.out;
    write(&out.join("complexity.csv"), &output::complexity_csv(&report))?;
    write(&out.join("complexity.json"), &to_json(&report)?)?;
    let m = &report.mean;
    println!(
        "{}: smoothness {:.4}  clusters {:.2}  d_eff {:.2}  rho_max {:.3}  rho_dy {:.3}",
        report.family, m.smoothness, m.n_clusters, m.d_eff, m.rho_max, m.rho_dy
    );
    Ok(())
}

pub fn cmd_audit(args: &AuditArgs) -> Result<(), CliError> {
    let mut audit = load_config(args.common.config.as_deref())?
        .map(|c| c.audit)
        .unwrap_or_default();
    if let Some(&s) = args.common.seeds.first() {
        audit.seed = s;
    }
    audit.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let report = run_audit(&audit).map_err(runtime)?;
    write(&args.common.out.join("audit.json"), &to_json(&report)?)?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!(
        "cdf bound        {}  min slack {:e} over {} points",
        verdict(report.cdf.pass),
        report.cdf.min_slack,
        report.cdf.points
    );
    println!(
        "batch sigma sum  {}  {} violations in {} instances",
        verdict(report.batch_sigma_violations == 0),
        report.batch_sigma_violations,
        report.batch_sigma.len()
    );
    println!(
        "greedy gamma     {}  {} violations in {} instances",
        verdict(report.gamma_violations == 0),
        report.gamma_violations,
        report.gamma.len()
    );
    println!(
        "mistake sigma    {}  {} violations in {} checks",
        verdict(report.mistake.violations.is_empty()),
        report.mistake.violations.len(),
        report.mistake.checked
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Runtime("audit found violations".into()))
    }
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<(), CliError> {
    let manifest_path = args.from.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let files = manifest["files"]["events"]
        .as_array()
        .ok_or_else(|| CliError::Config(format!("{}: no files.events list", manifest_path.display())))?;
    let mut events = Vec::new();
    for f in files {
        let rel = f
            .as_str()
            .ok_or_else(|| CliError::Config("files.events entries must be strings".into()))?;
        events.extend(output::read_events(&args.from.join(rel))?);
    }
    let dest = args.out.clone().unwrap_or_else(|| args.from.join("curves.csv"));
    write(&dest, &output::curves_csv(&events))?;
    Ok(())
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Complexity(a) => cmd_complexity(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Curves(a) => cmd_curves(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
