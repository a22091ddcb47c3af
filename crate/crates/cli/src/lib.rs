//! Experiment driver: `dilatlab <kind> --config <file> [--out <dir>] [--seed N]`.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails (the report
//! is still written), 2 on invalid input.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

use clap::Parser;
use config::{Config, Kind};
use dilatlab::gh::{gh_distance, GhConfig, Mode};
use dilatlab::metric::FiniteSample;
use error::CliError;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "dilatlab", version, about = "Run dilatation-structure experiments")]
pub struct Args {
    /// metric, groupoid, gh, length, axioms, tangent, profile, rnp,
    /// tempered, gamma or equivalence.
    pub kind: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `gh` without a config: first matrix file.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// `gh` without a config: second matrix file.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// `gh` without a config: exact or heuristic.
    #[arg(long)]
    pub mode: Option<String>,
}

/// Run with the given arguments; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let start = Instant::now();
    let code = match execute(&args) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    code
}

fn execute(args: &Args) -> Result<bool, CliError> {
    let kind = Kind::parse(&args.kind).ok_or_else(|| CliError::Usage(format!("unknown experiment kind `{}`", args.kind)))?;
    let direct_gh = args.a.is_some() || args.b.is_some() || args.mode.is_some();
    if direct_gh {
        if kind != Kind::Gh || args.config.is_some() {
            return Err(CliError::Usage("--a, --b and --mode belong to `gh` without --config".into()));
        }
        return gh_direct(args);
    }
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <file> is required".into()))?;
    let cfg = Config::load(path)?;
    let seed = match args.seed {
        Some(s) => s,
        None => cfg.seed()?.unwrap_or(0),
    };
    let section = cfg.section(kind)?;
    let outcome = run::run(kind, section, seed)?;
    let report = report::write_all(&args.out, kind, seed, &section.echo(), &outcome)?;
    for c in &outcome.checks {
        println!("{} {}", if c.pass { "pass" } else { "FAIL" }, c.name);
    }
    println!("report: {}", report.display());
    Ok(outcome.pass())
}

/// `dilatlab gh --a <file> --b <file> --mode exact|heuristic --seed N`:
/// prints the GhResult as JSON.
fn gh_direct(args: &Args) -> Result<bool, CliError> {
    let (Some(a), Some(b)) = (&args.a, &args.b) else {
        return Err(CliError::Usage("gh needs both --a and --b".into()));
    };
    let load = |p: &PathBuf| -> Result<FiniteSample, CliError> {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
        Ok(FiniteSample::parse_matrix_text(&text)?)
    };
    let mode = match args.mode.as_deref() {
        None => Mode::Heuristic,
        Some(m) => Mode::parse(m).ok_or_else(|| CliError::Usage(format!("unknown mode `{m}`")))?,
    };
    let cfg = GhConfig {
        mode,
        seed: args.seed.unwrap_or(0),
        ..GhConfig::default()
    };
    let r = gh_distance(&load(a)?, &load(b)?, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("GhResult serializes"));
    Ok(true)
}
