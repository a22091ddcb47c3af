//! Report and ladder files, written atomically.

use crate::config::Kind;
use crate::error::CliError;
use crate::run::Outcome;
use dilatlab::limit::LimitEstimate;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA: u32 = 1;

/// `eps,value,residual` rows, with `residual = |value − limit|`.
pub fn ladder_csv(est: &LimitEstimate) -> String {
    let mut s = String::from("eps,value,residual\n");
    for r in &est.rungs {
        let _ = writeln!(s, "{:?},{:?},{:?}", r.scale, r.value, (r.value - est.limit).abs());
    }
    s
}

fn file_name(kind: Kind, ladder: &str) -> String {
    format!("{}-{}.csv", kind.as_str(), ladder)
}

/// The JSON report. It carries no timing so reruns are byte-identical.
pub fn report_json(kind: Kind, seed: u64, config: &BTreeMap<String, String>, out: &Outcome) -> Value {
    let ladders: Vec<Value> = out
        .ladders
        .iter()
        .map(|(name, e)| {
            json!({
                "name": name,
                "file": file_name(kind, name),
                "limit": e.limit,
                "rate": e.rate,
                "oscillation": e.oscillation,
                "verdict": e.verdict,
            })
        })
        .collect();
    json!({
        "schema": SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "kind": kind.as_str(),
        "seed": seed,
        "config": config,
        "pass": out.pass(),
        "checks": out.checks,
        "ladders": ladders,
        "results": out.results,
    })
}

/// Write-temp-then-rename inside the target directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let wrap = |source: std::io::Error| CliError::Write {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(contents.as_bytes()).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

/// Write the report, the ladder CSVs and the artifacts; returns the
/// report path.
pub fn write_all(dir: &Path, kind: Kind, seed: u64, config: &BTreeMap<String, String>, out: &Outcome) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    for (name, e) in &out.ladders {
        write_atomic(&dir.join(file_name(kind, name)), &ladder_csv(e))?;
    }
    for (name, text) in &out.artifacts {
        write_atomic(&dir.join(name), text)?;
    }
    let mut text = serde_json::to_string_pretty(&report_json(kind, seed, config, out)).expect("report serializes");
    text.push('\n');
    let path = dir.join(format!("{}.json", kind.as_str()));
    write_atomic(&path, &text)?;
    Ok(path)
}
