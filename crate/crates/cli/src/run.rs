//! Dispatch from an experiment section to the library checks.

use crate::config::{parse_f64, Kind, Section};
use crate::error::CliError;
use dilatlab::algebra::{
    check_group_laws, invariance_residual, verify_groupoid, FreeGroup, RealVectorGroup, Side, TrivialGroupoid,
};
use dilatlab::curves::{length_distance, md_integral, variation, variation_by_refinement, PathConfig, SampledCurve};
use dilatlab::dilation::{
    check_axiom, equivalence_probe, first_order_comparison, AxiomTag, DilatationStructure,
};
use dilatlab::gh::{gh_distance, GhConfig, Mode};
use dilatlab::limit::{Ladder, LadderConfig, LimitEstimate};
use dilatlab::metric::{verify_metric, FiniteSample, VerifyOptions};
use dilatlab::profiles::{is_cone, profile_consistency, profile_snapshot, tangent_existence, PointedSpace, ProfileConfig};
use dilatlab::variational::{
    gamma_probe, length_formula_check, rnp_probe, standard_battery, BatteryFile, DerivativeConfig, GammaConfig,
    LengthFormulaConfig, NamedCurve, ProbeTimes,
};
use dilatlab::{rng, tolerances as tol, Error, Norm, Point};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::sync::Arc;

/// One named verdict of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

/// Everything a run produces before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub ladders: Vec<(String, LimitEstimate)>,
    /// Extra text files: (file name, contents).
    pub artifacts: Vec<(String, String)>,
    pub results: serde_json::Map<String, Value>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, pass: bool) {
        self.checks.push(Check { name: name.into(), pass });
    }

    fn put(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.to_string(), to_value(value));
    }

    fn ladder(&mut self, name: impl Into<String>, est: &LimitEstimate) {
        self.ladders.push((name.into(), est.clone()));
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn run(kind: Kind, s: &Section, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    match kind {
        Kind::Metric => metric(s, seed, &mut out)?,
        Kind::Groupoid => groupoid(s, seed, &mut out)?,
        Kind::Gh => gh(s, seed, &mut out)?,
        Kind::Length => length(s, seed, &mut out)?,
        Kind::Axioms => axioms(s, &mut out)?,
        Kind::Tangent => tangent(s, &mut out)?,
        Kind::Profile => profile(s, &mut out)?,
        Kind::Rnp => rnp(s, &mut out)?,
        Kind::Tempered => tempered(s, &mut out)?,
        Kind::Gamma => gamma(s, &mut out)?,
        Kind::Equivalence => equivalence(s, &mut out)?,
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Shared helpers

fn base(s: &Section, ds: &DilatationStructure) -> Result<Point, CliError> {
    Ok(s.point("base", ds.dim())?.unwrap_or_else(|| Point::zeros(ds.dim())))
}

/// Grid sample of `B̄(x, r)` with the base first.
fn region(ds: &DilatationStructure, x: &Point, r: f64, per_axis: usize) -> Result<FiniteSample, CliError> {
    let mut pts: Vec<Point> = ds.ball_sample(x, r, per_axis).into_iter().filter(|p| p != x).collect();
    pts.insert(0, x.clone());
    Ok(FiniteSample::with_points(pts, ds.distance()).with_base(0)?)
}

fn positive(v: &str) -> Result<f64, String> {
    let x = parse_f64(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{v}` must be positive"))
    }
}

fn read(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// A matrix file or random points of a structure in `[-1, 1]^k`.
fn sample(s: &Section, seed: u64) -> Result<FiniteSample, CliError> {
    if let Some(p) = s.path("matrix")? {
        return Ok(FiniteSample::parse_matrix_text(&read(&p)?)?);
    }
    let ds = s.structure("structure", "euclidean:k=2")?;
    let n = s.usize("points", 8)?;
    let mut r = rng::stream(seed, 0);
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::new((0..ds.dim()).map(|_| r.gen_range(-1.0..=1.0))))
        .collect();
    Ok(FiniteSample::with_points(pts, ds.distance()))
}

// ---------------------------------------------------------------------------
// Kinds

fn metric(s: &Section, seed: u64, out: &mut Outcome) -> Result<(), CliError> {
    let sample = sample(s, seed)?;
    let opts = VerifyOptions {
        tol: s.f64("tol", tol::EXACT)?,
        witness_cap: s.usize("witness_cap", tol::WITNESS_CAP)?,
    };
    let report = verify_metric(&sample, &opts)?;
    out.check("metric", report.pass);
    out.put("points", sample.len());
    out.put("metric", &report);
    Ok(())
}

fn groupoid(s: &Section, seed: u64, out: &mut Outcome) -> Result<(), CliError> {
    let sample = sample(s, seed)?;
    let opts = VerifyOptions {
        tol: s.f64("tol", tol::ALGEBRAIC)?,
        ..Default::default()
    };
    let g = TrivialGroupoid::new_unchecked(sample);
    let report = verify_groupoid(&g, &g.arrows(), &opts)?;
    out.check("groupoid", report.pass);
    out.check("right_translations", report.right_translation_residual <= opts.tol);
    out.put("groupoid", &report);

    let Some(spec) = s.opt("group", |v| Ok(v.to_string()))? else {
        return Ok(());
    };
    let triples = s.usize("triples", 100)?;
    let word_len = s.usize("word_len", 6)?;
    let mut r = rng::stream(seed, 1);
    let (name, params) = spec.split_once(':').unwrap_or((&spec, ""));
    let param = |key: &str| {
        params
            .split(',')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
    };
    let bad = |msg: String| {
        let line = s.entries["group"].line;
        CliError::Config {
            line,
            key: Some("group".into()),
            msg,
        }
    };
    let (residual, laws) = match name {
        "reals" => {
            let dim: usize = param("k").map_or(Ok(2), |v| v.parse()).map_err(|_| bad("bad `k`".into()))?;
            let norm = match param("norm") {
                None => Norm::L2,
                Some(n) => Norm::parse(&n).ok_or_else(|| bad(format!("unknown norm `{n}`")))?,
            };
            if !(1..=8).contains(&dim) {
                return Err(bad("`k` must be in 1..=8".into()));
            }
            let group = Arc::new(RealVectorGroup { dim, norm });
            let mut elem = || Point::new((0..dim).map(|_| r.gen_range(-1.0..=1.0)));
            let t: Vec<_> = (0..triples).map(|_| (elem(), elem(), elem())).collect();
            let flat: Vec<Point> = t.iter().flat_map(|(a, b, c)| [a.clone(), b.clone(), c.clone()]).collect();
            (invariance_residual(&group, Side::Left, &t), check_group_laws(group.as_ref(), &flat, opts.tol))
        }
        "free" => {
            let rank: u32 = param("rank").map_or(Ok(2), |v| v.parse()).map_err(|_| bad("bad `rank`".into()))?;
            if !(1..=26).contains(&rank) {
                return Err(bad("`rank` must be in 1..=26".into()));
            }
            let group = Arc::new(FreeGroup { rank });
            let t: Vec<_> = (0..triples)
                .map(|_| {
                    (
                        group.random_word(&mut r, word_len),
                        group.random_word(&mut r, word_len),
                        group.random_word(&mut r, word_len),
                    )
                })
                .collect();
            let flat: Vec<_> = t.iter().flat_map(|(a, b, c)| [a.clone(), b.clone(), c.clone()]).collect();
            (invariance_residual(&group, Side::Left, &t), check_group_laws(group.as_ref(), &flat, opts.tol))
        }
        other => return Err(bad(format!("unknown group `{other}`; expected reals or free"))),
    };
    out.check("group_laws", laws.pass);
    out.check("left_invariance", residual <= opts.tol);
    out.put("group", json!({ "spec": spec, "triples": triples, "left_invariance_residual": residual, "laws": laws }));
    Ok(())
}

fn gh(s: &Section, seed: u64, out: &mut Outcome) -> Result<(), CliError> {
    let a = FiniteSample::parse_matrix_text(&read(&s.required("a", |v| Ok(s.dir.join(v)))?)?)?;
    let b = FiniteSample::parse_matrix_text(&read(&s.required("b", |v| Ok(s.dir.join(v)))?)?)?;
    let mode = s.get("mode", Mode::Heuristic, |v| Mode::parse(v).ok_or_else(|| "expected exact or heuristic".into()))?;
    let mut cfg = GhConfig {
        mode,
        seed,
        ..GhConfig::default()
    };
    cfg.steps = s.usize("steps", cfg.steps)?;
    cfg.exact_cap = s.usize("exact_cap", cfg.exact_cap)?;
    let r = gh_distance(&a, &b, &cfg)?;
    if let Some(max) = s.opt("max_mu", parse_f64)? {
        out.check("max_mu", r.mu <= max);
    }
    out.put("gh", &r);
    Ok(())
}

fn path_config(s: &Section, seed: u64) -> Result<PathConfig, CliError> {
    let d = PathConfig::default();
    Ok(PathConfig {
        nodes: s.usize("nodes", d.nodes)?,
        restarts: s.usize("restarts", d.restarts)?,
        sweeps: s.usize("sweeps", d.sweeps)?,
        seed,
        ..d
    })
}

type Region = Box<dyn Fn(&Point) -> bool + Sync>;

/// `annulus:<r1>,<r2>` around the origin, or everything.
fn region_predicate(s: &Section) -> Result<Region, CliError> {
    let spec = s.opt("region", |v| {
        let rest = v.strip_prefix("annulus:").ok_or("expected annulus:<r1>,<r2>")?;
        let (a, b) = rest.split_once(',').ok_or("expected annulus:<r1>,<r2>")?;
        let (a, b) = (parse_f64(a.trim())?, parse_f64(b.trim())?);
        if !(0.0 <= a && a < b) {
            return Err("need 0 ≤ r1 < r2".into());
        }
        Ok((a, b))
    })?;
    Ok(match spec {
        None => Box::new(|_: &Point| true),
        Some((a, b)) => Box::new(move |p: &Point| {
            let r = p.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
            (a..=b).contains(&r)
        }),
    })
}

fn length(s: &Section, seed: u64, out: &mut Outcome) -> Result<(), CliError> {
    let ds = s.structure("structure", "euclidean:k=2")?;
    let ladder = s.ladder("ladder", Ladder::dyadic(8, 20))?;
    let lcfg = LadderConfig::default();
    if let Some(p) = s.path("curve")? {
        let c = SampledCurve::from_csv(&read(&p)?)?;
        if c.start().dim() != ds.dim() {
            return Err(CliError::Usage("curve dimension does not match the structure".into()));
        }
        let var = variation(&c, ds.distance());
        let refined = variation_by_refinement(&c, ds.distance(), c.len().max(2) - 1, 1e-4, 1 << 16);
        let cells = s.usize("md_cells", 256)?;
        let md = md_integral(&c, ds.distance(), cells, &ladder, &lcfg)?;
        let md_tol = s.f64("md_tolerance", 0.01)?;
        let agree = (md - var).abs() <= md_tol * var.max(f64::MIN_POSITIVE);
        out.check("md_integral", agree || var == 0.0 && md == 0.0);
        out.put("curve", json!({ "nodes": c.len(), "variation": var, "refinement": refined, "md_integral": md }));
    }
    let from = s.point("from", ds.dim())?;
    let to = s.point("to", ds.dim())?;
    let (Some(x), Some(y)) = (from, to) else {
        if s.has("from") || s.has("to") || s.bool("formula", false)? {
            return Err(CliError::Usage("`from` and `to` must be given together".into()));
        }
        return Ok(());
    };
    let inside = region_predicate(s)?;
    let pcfg = path_config(s, seed)?;
    let r = length_distance(ds.distance(), inside.as_ref(), &x, &y, &pcfg)?;
    out.put("length_distance", &r);
    if s.bool("formula", false)? {
        let cfg = LengthFormulaConfig {
            path: PathConfig {
                seed,
                ..LengthFormulaConfig::default().path
            },
            ..Default::default()
        };
        let gap_tol = s.f64("formula_tolerance", 0.01)?;
        match length_formula_check(&ds, &x, &y, &cfg) {
            Ok(f) => {
                out.check("length_formula", f.length_gap <= gap_tol && !f.partial);
                out.put("length_formula", &f);
            }
            Err(Error::NoRnpEvidence(msg)) => {
                out.check("length_formula", false);
                out.put("length_formula", json!({ "refused": msg }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn axioms(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let ds = s.structure("structure", "euclidean:k=2")?;
    let x = base(s, &ds)?;
    let reg = region(&ds, &x, s.get("radius", 1.0, positive)?, s.usize("per_axis", 5)?)?;
    let ladder = s.ladder("ladder", Ladder::default())?;
    let tags = s.get("axioms", vec![AxiomTag::A1, AxiomTag::A2, AxiomTag::A3, AxiomTag::A4], |v| {
        v.split(',')
            .map(|t| AxiomTag::parse(t).ok_or_else(|| format!("unknown axiom `{}`", t.trim())))
            .collect()
    })?;
    let mut reports = Vec::new();
    for tag in tags {
        let r = check_axiom(&ds, tag, &reg, &ladder, &LadderConfig::default())?;
        out.check(tag.as_str(), r.pass);
        if let Some(e) = &r.estimate {
            out.ladder(tag.as_str(), e);
        }
        if let Some(e) = &r.sigma_estimate {
            out.ladder(format!("{}-sigma", tag.as_str()), e);
        }
        reports.push(r);
    }
    out.put("structure", ds.label());
    out.put("axioms", &reports);
    Ok(())
}

fn tangent(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let ds = s.structure("structure", "euclidean:k=2")?;
    let x = base(s, &ds)?;
    let ladder = s.ladder("ladder", Ladder::dyadic(1, 20))?;
    let lcfg = LadderConfig::default();
    let first = first_order_comparison(&ds, &x, &ladder, &lcfg, s.usize("per_axis", 5)?);
    out.check("first_order", first.converged_to(0.0, tol::RESIDUAL_LIMIT));
    out.ladder("first_order", &first);
    let mu = s.get("mu", 0.2, positive)?;
    let space = PointedSpace::from_structure(&ds);
    let pcfg = ProfileConfig::default();
    let report = tangent_existence(&space, &x, &s.ladder("profile_ladder", Ladder::dyadic(1, 6))?, mu, &lcfg, &pcfg)?;
    out.check("tangent_exists", report.exists);
    out.ladder("tangent_residuals", &report.residuals);
    let mut cone = Value::Null;
    if s.bool("cone", true)? {
        if let Some(t) = &report.tangent {
            let (ok, worst) = is_cone(t, &Point::zeros(ds.dim()), &[1.0, 0.5, 0.25], mu, &pcfg)?;
            out.check("tangent_is_cone", ok);
            cone = json!({ "pass": ok, "worst": worst, "threshold": 2.0 * mu });
        }
    }
    out.put("structure", ds.label());
    out.put("first_order", &first);
    out.put(
        "tangent",
        json!({
            "exists": report.exists,
            "threshold": report.threshold,
            "residuals": report.residuals,
            "snapshot_points": report.snapshot.as_ref().map(|p| p.len()),
            "cone": cone,
        }),
    );
    if let Some(snap) = &report.snapshot {
        out.artifacts.push(("tangent-snapshot.txt".into(), snap.dump()));
    }
    Ok(())
}

fn profile(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let space = match s.opt("space", |v| Ok(v.to_string()))?.as_deref() {
        None => PointedSpace::from_structure(&s.structure("structure", "euclidean:k=2")?),
        Some("snowflake") => {
            if s.has("structure") {
                return Err(CliError::Usage("give either `space` or `structure`".into()));
            }
            PointedSpace::snowflake()
        }
        Some(other) => {
            return Err(CliError::Config {
                line: s.entries["space"].line,
                key: Some("space".into()),
                msg: format!("unknown space `{other}`; expected snowflake"),
            })
        }
    };
    let x = s.point("base", space.dim())?.unwrap_or_else(|| Point::zeros(space.dim()));
    let unit = |v: &str| {
        let e = parse_f64(v)?;
        if e > 0.0 && e <= 1.0 {
            Ok(e)
        } else {
            Err(format!("`{v}` must lie in (0, 1]"))
        }
    };
    let eps = s.get("eps", 0.5, unit)?;
    let mu = s.get("mu", 0.2, positive)?;
    let b = s.get("b", 0.5, unit)?;
    let cfg = ProfileConfig::default();
    let snap = profile_snapshot(&space, &x, eps, mu, &cfg)?;
    let consistency = profile_consistency(&space, &x, b, eps, mu, &cfg)?;
    out.check("consistency", consistency <= 2.0 * mu);
    let mut cone = Value::Null;
    if let Some(scales) = s.opt("cone_scales", |v| v.split(',').map(|t| unit(t.trim())).collect::<Result<Vec<_>, _>>())? {
        let (ok, worst) = is_cone(&space, &x, &scales, mu, &cfg)?;
        out.check("cone", ok);
        cone = json!({ "pass": ok, "worst": worst, "scales": scales });
    }
    out.put("space", space.label());
    out.put(
        "profile",
        json!({ "eps": eps, "mu_net": mu, "points": snap.len(), "covering": snap.covering, "consistency": consistency, "b": b, "cone": cone }),
    );
    out.artifacts.push(("profile-snapshot.txt".into(), snap.dump()));
    Ok(())
}

fn derivative_config(s: &Section) -> Result<DerivativeConfig, CliError> {
    let d = DerivativeConfig::default();
    Ok(DerivativeConfig {
        ladder: s.ladder("ladder", d.ladder.clone())?,
        oscillation_threshold: s.f64("oscillation", d.oscillation_threshold)?,
        ..d
    })
}

fn rnp(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let ds = s.structure("structure", "euclidean:k=2")?;
    let (battery, times) = match s.path("battery")? {
        Some(p) => {
            let (file, curves) = BatteryFile::load(&p)?;
            let named = file
                .curves
                .iter()
                .zip(curves)
                .map(|(path, c)| NamedCurve::new(path.display().to_string(), c))
                .collect::<Vec<_>>();
            if s.has("probes") {
                return Err(CliError::Usage("probe times come from the battery file".into()));
            }
            (named, file.probes.times())
        }
        None => (standard_battery(ds.dim()), ProbeTimes::Uniform(s.usize("probes", 64)?).times()),
    };
    let report = rnp_probe(&ds, &battery, &times, &derivative_config(s)?, s.f64("tolerance", 0.0)?)?;
    out.check("rnp_evidence", report.evidence);
    out.put("rnp", &report);
    Ok(())
}

fn tempered(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let ds = s.structure("structure", "euclidean:k=2")?;
    let d = if s.has("distance") {
        let other = s.structure("distance", "")?;
        if other.dim() != ds.dim() {
            return Err(CliError::Usage("`distance` structure has a different dimension".into()));
        }
        other.distance().clone()
    } else {
        ds.distance().clone()
    };
    let d = d.rescaled(1.0 / s.get("distance_scale", 1.0, positive)?);
    let x = base(s, &ds)?;
    let reg = region(&ds, &x, s.get("radius", 1.0, positive)?, s.usize("per_axis", 5)?)?;
    let ladder = s.ladder("ladder", Ladder::dyadic(1, 12))?;
    let report = dilatlab::variational::tempered_probe(&ds, &d, &reg, &ladder, &LadderConfig::default(), s.f64("margin", 1e-6)?)?;
    out.check("tempered", report.tempered);
    out.put("tempered", &report);
    Ok(())
}

fn default_gamma_battery(dim: usize) -> Vec<SampledCurve> {
    standard_battery(dim)
        .iter()
        .map(|nc| SampledCurve::from_curve(nc.curve.as_ref(), 64))
        .collect()
}

fn gamma(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let ds = s.structure("structure", "euclidean:k=2")?;
    let x = base(s, &ds)?;
    let battery = match s.path("battery")? {
        Some(p) => BatteryFile::load(&p)?.1,
        None => default_gamma_battery(ds.dim()),
    };
    let d = GammaConfig::default();
    let cfg = GammaConfig {
        eps: s.ladder("eps", Ladder::new(d.eps.clone())?)?.scales().to_vec(),
        tolerance: s.f64("tolerance", d.tolerance)?,
        amplitude: s.f64("amplitude", d.amplitude)?,
        frequency: s.usize("frequency", d.frequency)?,
        ladder: s.ladder("ladder", d.ladder.clone())?,
        ..d
    };
    let report = gamma_probe(&ds, &x, &battery, &cfg)?;
    out.check("gamma", report.pass);
    out.check("dsup", report.dsup_holds);
    out.put("gamma", &report);
    Ok(())
}

fn equivalence(s: &Section, out: &mut Outcome) -> Result<(), CliError> {
    let ds1 = s.structure("structure", "euclidean:k=2")?;
    let ds2 = s.structure("other", "euclidean:k=2")?;
    let x = base(s, &ds1)?;
    let reg = region(&ds1, &x, s.get("radius", 1.0, positive)?, s.usize("per_axis", 5)?)?;
    let samples = reg.points().unwrap_or_default().to_vec();
    let ladder = s.ladder("ladder", Ladder::default())?;
    let report = equivalence_probe(&ds1, &ds2, &x, &samples, &ladder, &LadderConfig::default())?;
    out.check("equivalent", report.equivalent);
    out.put("structures", [ds1.label(), ds2.label()]);
    out.put(
        "equivalence",
        json!({
            "base": report.base,
            "lipschitz_low": report.lipschitz_low,
            "lipschitz_high": report.lipschitz_high,
            "bilipschitz": report.bilipschitz,
            "oscillation": report.oscillation,
            "identity_residual": report.identity_residual,
            "isoequiv_residual": report.isoequiv_residual,
            "equivalent": report.equivalent,
        }),
    );
    Ok(())
}
