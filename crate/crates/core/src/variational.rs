//! Length functionals `l_ε`, curve derivatives and the Radon–Nikodym probe,
//! the length formula, `φ_d`, tempered constants and Γ-convergence checks.
//!
//! Derivatives `ċ(t)` are points of `X` near `c(t)`: every built-in tangent
//! cone is the vector group of the coordinates, so `D(N) = N` and
//! `inv^x(u) = Δ^x(u, x)`.

use crate::curves::{length_distance, variation, Curve, FnCurve, PathConfig, SampledCurve};
use crate::dilation::{tangent_distance, DilatationStructure, TangentDistance};
use crate::error::{precondition, Error, Result};
use crate::limit::{Ladder, LadderConfig, LimitEstimate, Rung, Verdict};
use crate::metric::{DistanceOracle, FiniteSample};
use crate::point::{euclidean, unit_grid, Point};
use crate::tolerances as tol;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Stated in reports that rely on the vector-cone representation.
pub const VECTOR_CONE_ASSUMPTION: &str =
    "derivative candidates are points of X; D(N) = N is assumed for the vector-space tangent cones of the built-ins";

/// Stated in every Γ report.
pub const SAMPLED_LIMINF_NOTE: &str =
    "liminf inequality checked on finitely many designed approaching sequences, not on all of them";

// ---------------------------------------------------------------------------
// Length functionals

/// One evaluation of `l_ε(x, c) = (1/ε) l_d(δ^x_ε c)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthValue {
    pub value: f64,
    /// `l_d(δ^x_ε c)`.
    pub variation: f64,
    /// Discrete Lipschitz constant of `δ^x_ε c`.
    pub lipschitz: f64,
    /// `Lip(δ^x_ε c) ≤ 2 l_d(δ^x_ε c)`, the parameterization selection.
    pub admissible: bool,
}

pub fn l_eps(ds: &DilatationStructure, x: &Point, c: &SampledCurve, eps: f64) -> Result<LengthValue> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(precondition(format!("scale {eps} outside (0, 1]")));
    }
    let pts = c
        .points()
        .iter()
        .map(|p| ds.dilate(x, eps, p))
        .collect::<Result<Vec<_>>>()?;
    let dc = SampledCurve::new(c.times().to_vec(), pts)?;
    let var = variation(&dc, ds.distance());
    let lip = dc.lipschitz(ds.distance());
    Ok(LengthValue {
        value: var / eps,
        variation: var,
        lipschitz: lip,
        admissible: lip <= 2.0 * var * (1.0 + tol::ALGEBRAIC),
    })
}

// ---------------------------------------------------------------------------
// Curve derivatives

/// Candidate search and verdict settings for curve derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeConfig {
    pub ladder: Ladder,
    pub ladder_cfg: LadderConfig,
    /// Candidates per axis of the search grid; odd keeps the centre.
    pub per_axis: usize,
    /// Half-width of the first grid around `c(t)`; `None` takes twice the
    /// largest difference quotient on the ladder.
    pub radius: Option<f64>,
    /// Grid halvings around the running winner.
    pub refinements: usize,
    /// Residual limits up to `derivative_limit · (1 + |ċ|)` count as zero.
    pub derivative_limit: f64,
    /// A residual ladder whose tail spread exceeds this is not derivable.
    pub oscillation_threshold: f64,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        DerivativeConfig {
            ladder: Ladder::dyadic(1, 20),
            ladder_cfg: LadderConfig::default(),
            per_axis: 5,
            radius: None,
            refinements: 64,
            derivative_limit: tol::DERIVATIVE_LIMIT,
            oscillation_threshold: tol::LADDER_OSCILLATION,
        }
    }
}

/// `ċ(t)` with its one-sided residual ladders
/// `(1/ε) d(c(t+ε), δ^{c(t)}_ε ċ)` and `(1/ε) d(c(t−ε), δ^{c(t)}_ε inv(ċ))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveDerivative {
    pub t: f64,
    pub base: Point,
    pub candidate: Point,
    pub forward: LimitEstimate,
    pub backward: LimitEstimate,
    /// Largest tail spread of the two residual ladders.
    pub oscillation: f64,
    pub derivable: bool,
}

fn residual(ds: &DilatationStructure, base: &Point, target: &Point, u: &Point, eps: f64) -> f64 {
    match ds.dilate(base, eps, u) {
        Ok(p) => ds.d(target, &p) / eps,
        Err(_) => f64::NAN,
    }
}

fn first_min(scored: impl Iterator<Item = (f64, Point)>) -> Option<(f64, Point)> {
    scored.fold(None, |best, (s, u)| match best {
        Some((b, _)) if !(s < b) => best,
        _ if s.is_nan() => best,
        _ => Some((s, u)),
    })
}

pub fn curve_derivative(ds: &DilatationStructure, c: &dyn Curve, t: f64, cfg: &DerivativeConfig) -> Result<CurveDerivative> {
    if !(t > 0.0 && t < 1.0) {
        return Err(precondition(format!("probe time {t} is not interior")));
    }
    let room = t.min(1.0 - t);
    let ladder = cfg
        .ladder
        .retain(|e| e <= room)
        .filter(|l| l.len() >= 2)
        .ok_or_else(|| precondition(format!("ladder does not fit around t = {t}")))?;
    let ct = c.eval(t);
    if ct.dim() != ds.dim() {
        return Err(precondition("curve dimension does not match the structure"));
    }
    let ahead: Vec<Point> = ladder.scales().iter().map(|&e| c.eval(t + e)).collect();
    let behind: Vec<Point> = ladder.scales().iter().map(|&e| c.eval(t - e)).collect();
    let radius = cfg.radius.unwrap_or_else(|| {
        2.0 * ladder
            .scales()
            .iter()
            .zip(&ahead)
            .map(|(&e, p)| euclidean(p, &ct) / e)
            .fold(0.0, f64::max)
    });

    // The grid keeps its centre, and the winner sits within a quarter of
    // the half-width of the optimum of a convex score, so halving is safe.
    let e_min = ladder.smallest();
    let target = ahead.last().unwrap();
    let grid = unit_grid(ds.dim(), cfg.per_axis.max(3) | 1);
    let mut centre = ct.clone();
    let mut r = radius;
    for _ in 0..cfg.refinements {
        if !(r > f64::EPSILON * (1.0 + euclidean(&centre, &Point::zeros(ds.dim())))) {
            break;
        }
        let scored = grid.iter().map(|w| {
            let u = centre.axpy(r, w);
            (residual(ds, &ct, target, &u, e_min), u)
        });
        if let Some((_, u)) = first_min(scored) {
            centre = u;
        }
        r *= 0.5;
    }
    let u = centre;
    let inv = ds
        .delta_limit(&ct, &u, &ct)
        .unwrap_or_else(|| ct.axpy(1.0, &(&ct - &u)));
    let ladder_of = |pts: &[Point], v: &Point| {
        let rungs = ladder
            .scales()
            .iter()
            .zip(pts)
            .map(|(&scale, p)| Rung {
                scale,
                value: residual(ds, &ct, p, v, scale),
            })
            .collect();
        LimitEstimate::from_rungs(rungs, &cfg.ladder_cfg)
    };
    let forward = ladder_of(&ahead, &u);
    let backward = ladder_of(&behind, &inv);
    let oscillation = forward.oscillation.max(backward.oscillation);
    let bound = cfg.derivative_limit * (1.0 + euclidean(&ct, &u));
    let settled = |e: &LimitEstimate| e.is_converged() && e.limit.abs() <= bound;
    let derivable = settled(&forward) && settled(&backward) && oscillation <= cfg.oscillation_threshold;
    Ok(CurveDerivative {
        t,
        base: ct,
        candidate: u,
        forward,
        backward,
        oscillation,
        derivable,
    })
}

// ---------------------------------------------------------------------------
// Radon–Nikodym probe

/// A curve with a name for reports.
#[derive(Clone)]
pub struct NamedCurve {
    pub name: String,
    pub curve: Arc<dyn Curve>,
}

impl NamedCurve {
    pub fn new(name: impl Into<String>, curve: impl Curve + 'static) -> Self {
        NamedCurve {
            name: name.into(),
            curve: Arc::new(curve),
        }
    }
}

impl std::fmt::Debug for NamedCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NamedCurve").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Segments, circles and parabolas (lines and monotone arcs in dimension
/// one), all inside the unit ball around the origin.
pub fn standard_battery(dim: usize) -> Vec<NamedCurve> {
    let embed = move |c: Vec<f64>| {
        let mut v = vec![0.0; dim];
        for (i, x) in c.into_iter().enumerate().take(dim) {
            v[i] = x;
        }
        Point::from(v)
    };
    if dim == 1 {
        return vec![
            NamedCurve::new("segment", FnCurve::new(move |t| embed(vec![t - 0.5]))),
            NamedCurve::new("parabola", FnCurve::new(move |t| embed(vec![t * t - 0.5]))),
            NamedCurve::new("sine", FnCurve::new(move |t| embed(vec![0.5 * (std::f64::consts::PI * (t - 0.5)).sin()]))),
        ];
    }
    vec![
        NamedCurve::new("segment", FnCurve::new(move |t| embed(vec![0.75 * t - 0.25, 0.5 * t - 0.25]))),
        NamedCurve::new(
            "circle",
            FnCurve::new(move |t| {
                let a = std::f64::consts::TAU * t;
                embed(vec![0.5 * a.cos(), 0.5 * a.sin()])
            }),
        ),
        NamedCurve::new("parabola", FnCurve::new(move |t| embed(vec![t - 0.5, (t - 0.5) * (t - 0.5)]))),
    ]
}

/// Probe-time grids for batteries.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTimes {
    /// Cell midpoints `(k + ½)/n`.
    Uniform(usize),
    List(Vec<f64>),
}

impl ProbeTimes {
    pub fn times(&self) -> Vec<f64> {
        match self {
            ProbeTimes::Uniform(n) => (0..*n).map(|k| (k as f64 + 0.5) / *n as f64).collect(),
            ProbeTimes::List(v) => v.clone(),
        }
    }

    /// `uniform:<n>` or `list:<t>,<t>,...` with times in `(0, 1)`.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = s.trim().split_once(':').ok_or("expected uniform:<n> or list:<t>,...")?;
        match kind.trim() {
            "uniform" => {
                let n: usize = rest.trim().parse().map_err(|_| format!("bad probe count `{}`", rest.trim()))?;
                if n == 0 || n > 1_000_000 {
                    return Err(format!("probe count {n} outside 1..=1000000"));
                }
                Ok(ProbeTimes::Uniform(n))
            }
            "list" => {
                let v = rest
                    .split(',')
                    .map(|t| {
                        let x: f64 = t.trim().parse().map_err(|_| format!("bad probe time `{}`", t.trim()))?;
                        if x > 0.0 && x < 1.0 {
                            Ok(x)
                        } else {
                            Err(format!("probe time {x} outside (0, 1)"))
                        }
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(ProbeTimes::List(v))
            }
            other => Err(format!("unknown probe grid `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub t: f64,
    pub derivable: bool,
    pub candidate: Point,
    pub forward_limit: f64,
    pub backward_limit: f64,
    pub forward_verdict: Verdict,
    pub backward_verdict: Verdict,
    pub oscillation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRnp {
    pub name: String,
    pub fraction: f64,
    pub probes: Vec<ProbeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RnpReport {
    pub structure: String,
    pub curves: Vec<CurveRnp>,
    /// Derivable fraction over all probes of all curves.
    pub fraction: f64,
    pub tolerance: f64,
    /// `fraction ≥ 1 − tolerance`.
    pub evidence: bool,
    pub assumptions: Vec<String>,
}

/// Derivable fraction of each battery curve at the probe times.
pub fn rnp_probe(
    ds: &DilatationStructure,
    battery: &[NamedCurve],
    times: &[f64],
    cfg: &DerivativeConfig,
    tolerance: f64,
) -> Result<RnpReport> {
    if battery.is_empty() || times.is_empty() {
        return Err(precondition("RNP probe needs at least one curve and one probe time"));
    }
    let curves = battery
        .par_iter()
        .map(|nc| {
            let probes = times
                .par_iter()
                .map(|&t| {
                    let cd = curve_derivative(ds, nc.curve.as_ref(), t, cfg)?;
                    Ok(ProbeOutcome {
                        t,
                        derivable: cd.derivable,
                        candidate: cd.candidate,
                        forward_limit: cd.forward.limit,
                        backward_limit: cd.backward.limit,
                        forward_verdict: cd.forward.verdict,
                        backward_verdict: cd.backward.verdict,
                        oscillation: cd.oscillation,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let fraction = probes.iter().filter(|p| p.derivable).count() as f64 / probes.len() as f64;
            Ok(CurveRnp {
                name: nc.name.clone(),
                fraction,
                probes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = curves.iter().map(|c| c.probes.len()).sum();
    let good: usize = curves.iter().map(|c| c.probes.iter().filter(|p| p.derivable).count()).sum();
    let fraction = good as f64 / total as f64;
    Ok(RnpReport {
        structure: ds.label().to_string(),
        curves,
        fraction,
        tolerance,
        evidence: fraction >= 1.0 - tolerance,
        assumptions: vec![VECTOR_CONE_ASSUMPTION.to_string()],
    })
}

/// [`rnp_probe`] on [`standard_battery`] with `probes` uniform times.
pub fn rnp_evidence(ds: &DilatationStructure, probes: usize, cfg: &DerivativeConfig, tolerance: f64) -> Result<RnpReport> {
    rnp_probe(ds, &standard_battery(ds.dim()), &ProbeTimes::Uniform(probes).times(), cfg, tolerance)
}

// ---------------------------------------------------------------------------
// Length formula

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrandNode {
    pub t: f64,
    pub weight: f64,
    pub value: f64,
    pub derivable: bool,
}

/// `∫ d^{c(t)}(c(t), ċ(t)) dt` with its quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentIntegral {
    pub value: f64,
    pub nodes: Vec<IntegrandNode>,
    /// Some node was not derivable or its tangent value was flagged.
    pub partial: bool,
}

fn integrand(ds: &DilatationStructure, c: &dyn Curve, t: f64, weight: f64, cfg: &DerivativeConfig) -> Result<IntegrandNode> {
    let cd = curve_derivative(ds, c, t, cfg)?;
    let tv = tangent_distance(ds, &cd.base, &cfg.ladder, &cfg.ladder_cfg).value(&cd.base, &cd.candidate);
    Ok(IntegrandNode {
        t,
        weight,
        value: tv.value,
        derivable: cd.derivable && !tv.flagged,
    })
}

fn collect_integral(nodes: Vec<IntegrandNode>) -> TangentIntegral {
    TangentIntegral {
        value: nodes.iter().map(|n| n.weight * n.value).sum(),
        partial: nodes.iter().any(|n| !n.derivable),
        nodes,
    }
}

/// Tangent length integral of a polyline. Nodes are kinks where `ċ` does
/// not exist, so each segment is probed at its midpoint, which is exact for
/// piecewise-constant speed.
pub fn tangent_length_integral(ds: &DilatationStructure, c: &SampledCurve, cfg: &DerivativeConfig) -> Result<TangentIntegral> {
    if c.points().windows(2).all(|w| w[0] == w[1]) {
        return Ok(TangentIntegral {
            value: 0.0,
            nodes: Vec::new(),
            partial: false,
        });
    }
    let nodes = c
        .times()
        .par_windows(2)
        .map(|w| integrand(ds, c, 0.5 * (w[0] + w[1]), w[1] - w[0], cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_integral(nodes))
}

/// Tangent length integral of an analytic curve: composite trapezoid on
/// `cells` uniform cells, probing interior nodes only and extrapolating the
/// integrand linearly to the endpoints.
pub fn tangent_length_integral_smooth(
    ds: &DilatationStructure,
    c: &dyn Curve,
    cells: usize,
    cfg: &DerivativeConfig,
) -> Result<TangentIntegral> {
    if cells < 3 {
        return Err(precondition("trapezoid rule needs at least three cells"));
    }
    let h = 1.0 / cells as f64;
    let mut nodes = (1..cells)
        .into_par_iter()
        .map(|i| integrand(ds, c, i as f64 * h, h, cfg))
        .collect::<Result<Vec<_>>>()?;
    let n = nodes.len();
    let ends = [
        (0.0, 2.0 * nodes[0].value - nodes[1].value, nodes[0].derivable && nodes[1].derivable),
        (1.0, 2.0 * nodes[n - 1].value - nodes[n - 2].value, nodes[n - 1].derivable && nodes[n - 2].derivable),
    ];
    for (t, value, derivable) in ends {
        nodes.push(IntegrandNode {
            t,
            weight: 0.5 * h,
            value: value.max(0.0),
            derivable,
        });
    }
    Ok(collect_integral(nodes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthFormulaConfig {
    pub path: PathConfig,
    pub derivative: DerivativeConfig,
    /// Uniform probes per curve of the standard battery for RNP evidence.
    pub evidence_probes: usize,
    pub evidence_tolerance: f64,
}

impl Default for LengthFormulaConfig {
    fn default() -> Self {
        LengthFormulaConfig {
            path: PathConfig {
                nodes: 63,
                ..PathConfig::default()
            },
            derivative: DerivativeConfig::default(),
            evidence_probes: 16,
            evidence_tolerance: 0.0,
        }
    }
}

/// `d(x, y)` against the infimum of tangent length integrals over polylines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthFormula {
    pub distance: f64,
    pub integral: f64,
    /// `|integral − distance| / distance`.
    pub gap: f64,
    /// Length distance of `d` by the same optimizer.
    pub length_distance: f64,
    /// `|integral − length_distance| / length_distance`.
    pub length_gap: f64,
    pub partial: bool,
    pub path: Vec<Point>,
    pub evidence_fraction: f64,
}

/// The length formula, refused without RNP evidence. Polylines are
/// optimized with the segment cost `d^m(m, m + (b − a))` at the midpoint
/// `m`; the reported integral is recomputed on the winner from derivative
/// probes.
pub fn length_formula_check(ds: &DilatationStructure, x: &Point, y: &Point, cfg: &LengthFormulaConfig) -> Result<LengthFormula> {
    if x.dim() != ds.dim() || y.dim() != ds.dim() {
        return Err(precondition("endpoint dimension does not match the structure"));
    }
    let evidence = rnp_evidence(ds, cfg.evidence_probes, &cfg.derivative, cfg.evidence_tolerance)?;
    if !evidence.evidence {
        return Err(Error::NoRnpEvidence(format!(
            "{}: derivable fraction {} on the standard battery",
            ds.label(),
            evidence.fraction
        )));
    }
    let distance = ds.d(x, y);
    if x == y {
        return Ok(LengthFormula {
            distance,
            integral: 0.0,
            gap: 0.0,
            length_distance: 0.0,
            length_gap: 0.0,
            partial: false,
            path: vec![x.clone()],
            evidence_fraction: evidence.fraction,
        });
    }
    let dcfg = &cfg.derivative;
    let cost = |a: &Point, b: &Point| {
        let m = a.lerp(b, 0.5);
        let v = m.axpy(1.0, &(b - a));
        ds.exact_tangent(&m, &m, &v)
            .unwrap_or_else(|| tangent_distance(ds, &m, &dcfg.ladder, &dcfg.ladder_cfg).eval(&m, &v))
    };
    let inside = |p: &Point| p.is_finite();
    let best = length_distance(&cost, &inside, x, y, &cfg.path)?;
    let curve = SampledCurve::polyline(best.path.clone())?;
    let integral = tangent_length_integral(ds, &curve, dcfg)?;
    let ld = length_distance(ds.distance(), &inside, x, y, &cfg.path)?.length;
    Ok(LengthFormula {
        distance,
        integral: integral.value,
        gap: (integral.value - distance).abs() / distance,
        length_distance: ld,
        length_gap: (integral.value - ld).abs() / ld,
        partial: integral.partial,
        path: best.path,
        evidence_fraction: evidence.fraction,
    })
}

// ---------------------------------------------------------------------------
// Tempered structures

/// `φ_d(x, u) = limsup (1/ε) d(x, δ^x_ε u)`, as the max over the ladder
/// tail.
pub fn phi_d(ds_ref: &DilatationStructure, d: &DistanceOracle, x: &Point, u: &Point, ladder: &Ladder, cfg: &LadderConfig) -> LimitEstimate {
    let rungs = ladder
        .scales()
        .iter()
        .map(|&eps| Rung {
            scale: eps,
            value: ds_ref.dilate(x, eps, u).map_or(f64::NAN, |p| d.eval(x, &p) / eps),
        })
        .collect();
    LimitEstimate::limsup(rungs, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperedReport {
    pub c_hat: f64,
    #[serde(rename = "C_hat")]
    pub cap_c_hat: f64,
    pub tempered: bool,
    pub probes: usize,
    /// Pairs with zero or untrusted tangent distance, or outside the domain.
    pub skipped: usize,
    pub margin: f64,
}

/// Extremes over region pairs and rungs of
/// `(1/ε) d(δ̄^x_ε u, δ̄^x_ε v) / d̄^x(u, v)`, with `x` the region base.
pub fn tempered_probe(
    ds: &DilatationStructure,
    d: &DistanceOracle,
    region: &FiniteSample,
    ladder: &Ladder,
    cfg: &LadderConfig,
    margin: f64,
) -> Result<TemperedReport> {
    let (pts, x) = region_points(ds, region)?;
    let td = tangent_distance(ds, x, ladder, cfg);
    let pairs: Vec<(usize, usize)> = (0..pts.len()).flat_map(|i| (i + 1..pts.len()).map(move |j| (i, j))).collect();
    let per_pair: Vec<Option<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let tv = td.value(&pts[i], &pts[j]);
            if tv.flagged || !(tv.value > 0.0) {
                return None;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &eps in ladder.scales() {
                let a = ds.dilate(x, eps, &pts[i]).ok()?;
                let b = ds.dilate(x, eps, &pts[j]).ok()?;
                let r = d.eval(&a, &b) / eps / tv.value;
                if !r.is_finite() {
                    return None;
                }
                lo = lo.min(r);
                hi = hi.max(r);
            }
            Some((lo, hi))
        })
        .collect();
    let probes = per_pair.iter().flatten().count();
    let skipped = per_pair.len() - probes;
    let c_hat = per_pair.iter().flatten().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let cap_c_hat = per_pair.iter().flatten().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(TemperedReport {
        c_hat,
        cap_c_hat,
        tempered: probes > 0 && c_hat >= margin && c_hat <= cap_c_hat && cap_c_hat <= 1.0 / margin,
        probes,
        skipped,
        margin,
    })
}

fn region_points<'a>(ds: &DilatationStructure, region: &'a FiniteSample) -> Result<(&'a [Point], &'a Point)> {
    let pts = region.points().ok_or_else(|| precondition("region needs coordinates"))?;
    let x = &pts[region.base().ok_or_else(|| precondition("region needs a base point"))?];
    if pts.iter().any(|p| p.dim() != ds.dim()) {
        return Err(precondition("region dimension does not match the structure"));
    }
    let a = ds.constants().a;
    if pts.iter().any(|p| ds.d(x, p) > a) {
        return Err(precondition(format!("region points must lie within {a} of the base")));
    }
    Ok((pts, x))
}

// ---------------------------------------------------------------------------
// Γ-convergence

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaConfig {
    /// The scale sequence `ε_n`.
    pub eps: Vec<f64>,
    /// Approaching sequences use amplitude `amplitude / n`.
    pub amplitude: f64,
    /// Half-periods of the sine bump.
    pub frequency: usize,
    /// Uniform cells added to the curve grid when perturbing.
    pub resample: usize,
    /// liminf over the last `tail` sequence elements.
    pub tail: usize,
    pub tolerance: f64,
    /// Optimizer for the induced distances of the `dsup` check.
    pub path: PathConfig,
    pub ladder: Ladder,
    pub ladder_cfg: LadderConfig,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig {
            eps: Ladder::dyadic(1, 10).scales().to_vec(),
            amplitude: 0.05,
            frequency: 3,
            resample: 256,
            tail: 5,
            tolerance: 1e-3,
            path: PathConfig {
                nodes: 8,
                restarts: 2,
                sweeps: 30,
                golden_iters: 20,
                ..PathConfig::default()
            },
            ladder: Ladder::dyadic(1, 20),
            ladder_cfg: LadderConfig::default(),
        }
    }
}

/// A designed sequence `(x_n, c_n) → (x, c)` in the product distance `D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproachingSequence {
    pub kind: String,
    /// `D((x_n, c_n), (x, c))`.
    pub distances: Vec<f64>,
    /// `l_{ε_n}(x_n, c_n)`; NaN where dropped as inadmissible.
    pub values: Vec<f64>,
    pub dropped: usize,
    pub liminf: f64,
    /// `liminf − l(x, c)`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCurve {
    pub index: usize,
    /// `l(x, c)`: the variation of `c` under `d^x`.
    pub limit: f64,
    /// `l_{ε_n}(x, c)`.
    pub values: Vec<f64>,
    /// `|l_{ε_N}(x, c) − l(x, c)|` for the constant sequence.
    pub recovery_error: f64,
    pub recovery_ok: bool,
    pub sequences: Vec<ApproachingSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedCurve {
    pub index: usize,
    pub reason: String,
}

/// `d̊^x(u, v) ≥ limsup d̊^x_ε(u, v) − tol` on a pair of curve endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsupProbe {
    pub curve: usize,
    pub limit_distance: f64,
    pub eps_distances: Vec<f64>,
    pub limsup: f64,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    pub eps: Vec<f64>,
    pub curves: Vec<GammaCurve>,
    pub dropped: Vec<DroppedCurve>,
    pub min_slack: f64,
    pub recovery_ok: bool,
    pub dsup: Vec<DsupProbe>,
    pub dsup_holds: bool,
    pub tolerance: f64,
    /// All slacks ≥ −tolerance and some recovery within tolerance.
    pub pass: bool,
    pub notes: Vec<String>,
}

/// `c` on the union of its own nodes and a uniform grid.
fn refined_times(c: &SampledCurve, cells: usize) -> Vec<f64> {
    let mut t: Vec<f64> = c.times().to_vec();
    t.extend((1..cells).map(|i| i as f64 / cells as f64));
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    t
}

/// Unit direction normal to the chord in the first two coordinates, or
/// the first axis.
fn bump_direction(c: &SampledCurve) -> Point {
    let k = c.start().dim();
    let mut e = vec![0.0; k];
    let chord = c.end() - c.start();
    if k >= 2 && (chord[0] != 0.0 || chord[1] != 0.0) {
        let n = chord[0].hypot(chord[1]);
        e[0] = -chord[1] / n;
        e[1] = chord[0] / n;
    } else {
        e[0] = 1.0;
    }
    Point::from(e)
}

fn tangent_variation(td: &TangentDistance, c: &SampledCurve) -> (f64, bool) {
    let mut flagged = false;
    let v = c
        .points()
        .windows(2)
        .map(|w| {
            let tv = td.value(&w[0], &w[1]);
            flagged |= tv.flagged;
            tv.value
        })
        .sum();
    (v, flagged)
}

fn liminf(values: &[f64], tail: usize) -> f64 {
    let kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    kept[kept.len().saturating_sub(tail.max(1))..]
        .iter()
        .copied()
        .fold(f64::NAN, |m, v| if m.is_nan() { v } else { m.min(v) })
}

/// Per-curve outcome: diagnostics, optional dsup probe, recovery flag.
type GammaOutcome = (GammaCurve, Option<DsupProbe>, bool);

/// Γ-convergence diagnostics of `l_{ε_n}(x, ·)` on a curve battery.
pub fn gamma_probe(ds: &DilatationStructure, x: &Point, battery: &[SampledCurve], cfg: &GammaConfig) -> Result<GammaReport> {
    if cfg.eps.is_empty() || cfg.eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(precondition("scale sequence must be nonempty and in (0, 1]"));
    }
    if battery.is_empty() {
        return Err(precondition("empty curve battery"));
    }
    let td = tangent_distance(ds, x, &cfg.ladder, &cfg.ladder_cfg);
    let mut notes = vec![SAMPLED_LIMINF_NOTE.to_string()];
    let outcomes: Vec<std::result::Result<GammaOutcome, DroppedCurve>> = battery
        .par_iter()
        .enumerate()
        .map(|(index, c)| gamma_curve(ds, x, &td, index, c, cfg))
        .collect();
    let mut curves = Vec::new();
    let mut dropped = Vec::new();
    let mut dsup = Vec::new();
    let mut any_flagged = false;
    for o in outcomes {
        match o {
            Ok((gc, probe, flagged)) => {
                curves.push(gc);
                dsup.extend(probe);
                any_flagged |= flagged;
            }
            Err(d) => dropped.push(d),
        }
    }
    if any_flagged {
        notes.push("some tangent distances were flagged; limit values use the extrapolated estimate".into());
    }
    let min_slack = curves
        .iter()
        .flat_map(|c| c.sequences.iter().map(|s| s.slack))
        .fold(f64::INFINITY, |m, s| if s.is_nan() { f64::NAN } else { m.min(s) });
    let recovery_ok = curves.iter().any(|c| c.recovery_ok);
    let dsup_holds = dsup.iter().all(|p| p.holds);
    let pass = !curves.is_empty() && min_slack >= -cfg.tolerance && recovery_ok;
    Ok(GammaReport {
        eps: cfg.eps.clone(),
        curves,
        dropped,
        min_slack,
        recovery_ok,
        dsup,
        dsup_holds,
        tolerance: cfg.tolerance,
        pass,
        notes,
    })
}

type CurveOutcome = std::result::Result<(GammaCurve, Option<DsupProbe>, bool), DroppedCurve>;

fn gamma_curve(
    ds: &DilatationStructure,
    x: &Point,
    td: &TangentDistance,
    index: usize,
    c: &SampledCurve,
    cfg: &GammaConfig,
) -> CurveOutcome {
    let drop = |reason: String| DroppedCurve { index, reason };
    let mut values = Vec::with_capacity(cfg.eps.len());
    for &e in &cfg.eps {
        let lv = l_eps(ds, x, c, e).map_err(|err| drop(err.to_string()))?;
        if !lv.admissible {
            return Err(drop(format!("inadmissible parameterization at eps={e}")));
        }
        values.push(lv.value);
    }
    let (limit, flagged) = tangent_variation(td, c);
    let recovery_error = (values.last().unwrap() - limit).abs();

    let times = refined_times(c, cfg.resample);
    let fine = SampledCurve::new(times.clone(), times.iter().map(|&t| c.eval(t)).collect())
        .map_err(|err| drop(err.to_string()))?;
    let e = bump_direction(c);
    let amp = |n: usize| cfg.amplitude / n as f64;
    let freq = cfg.frequency.max(1) as f64;

    let mut bump = ApproachingSequence::new("sine-bump");
    let mut moving = ApproachingSequence::new("moving-base");
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let a = amp(k + 1);
        let cn = fine.map_points(|p| p.clone());
        let pts: Vec<Point> = times
            .iter()
            .zip(cn.points())
            .map(|(&t, p)| p.axpy(a * (std::f64::consts::PI * freq * t).sin(), &e))
            .collect();
        let cn = SampledCurve::new(times.clone(), pts).map_err(|err| drop(err.to_string()))?;
        let dist = fine
            .points()
            .iter()
            .zip(cn.points())
            .map(|(p, q)| ds.d(p, q))
            .fold(0.0, f64::max);
        bump.push(dist, l_eps(ds, x, &cn, eps));

        let xn = x.axpy(a, &e);
        moving.push(ds.d(x, &xn), l_eps(ds, &xn, &fine, eps));
    }
    let sequences = vec![bump.finish(limit, cfg.tail), moving.finish(limit, cfg.tail)];

    let probe = dsup_probe(ds, x, td, index, c, cfg);
    Ok((
        GammaCurve {
            index,
            limit,
            values,
            recovery_error,
            recovery_ok: recovery_error <= cfg.tolerance * (1.0 + limit.abs()),
            sequences,
        },
        probe,
        flagged,
    ))
}

impl ApproachingSequence {
    fn new(kind: &str) -> Self {
        ApproachingSequence {
            kind: kind.to_string(),
            distances: Vec::new(),
            values: Vec::new(),
            dropped: 0,
            liminf: f64::NAN,
            slack: f64::NAN,
        }
    }

    fn push(&mut self, distance: f64, value: Result<LengthValue>) {
        self.distances.push(distance);
        match value {
            Ok(v) if v.admissible => self.values.push(v.value),
            _ => {
                self.dropped += 1;
                self.values.push(f64::NAN);
            }
        }
    }

    fn finish(mut self, limit: f64, tail: usize) -> Self {
        self.liminf = liminf(&self.values, tail);
        self.slack = self.liminf - limit;
        self
    }
}

/// Upper bounds for `d̊^x(u,v)` and `d̊^x_ε(u,v)` from the polyline
/// optimizer, with `u, v` the curve endpoints.
fn dsup_probe(
    ds: &DilatationStructure,
    x: &Point,
    td: &TangentDistance,
    index: usize,
    c: &SampledCurve,
    cfg: &GammaConfig,
) -> Option<DsupProbe> {
    let (u, v) = (c.start(), c.end());
    let inside = |p: &Point| ds.dilate(x, 0.5, p).is_ok();
    let tangent = |a: &Point, b: &Point| td.value(a, b).value;
    let limit_distance = length_distance(&tangent, &inside, u, v, &cfg.path).ok()?.length;
    let eps_distances: Vec<f64> = cfg
        .eps
        .iter()
        .map(|&e| {
            let rd = ds.rescaled(x, e);
            length_distance(&rd, &inside, u, v, &cfg.path).map_or(f64::NAN, |r| r.length)
        })
        .collect();
    let tail = &eps_distances[eps_distances.len().saturating_sub(cfg.tail.max(1))..];
    let limsup = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = limit_distance - limsup;
    Some(DsupProbe {
        curve: index,
        limit_distance,
        eps_distances,
        limsup,
        slack,
        holds: slack >= -cfg.tolerance * (1.0 + limit_distance),
    })
}

// ---------------------------------------------------------------------------
// Battery files

/// A battery file: `curve <path>` lines and an optional `probes <grid>`
/// line (default `uniform:64`); `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryFile {
    pub curves: Vec<PathBuf>,
    pub probes: ProbeTimes,
}

impl BatteryFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut curves = Vec::new();
        let mut probes = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest = rest.trim();
            let err = |msg: String| Error::Parse { line, msg };
            match key {
                "curve" => {
                    if rest.is_empty() {
                        return Err(err("curve needs a path".into()));
                    }
                    curves.push(PathBuf::from(rest));
                }
                "probes" => {
                    if probes.is_some() {
                        return Err(err("duplicate probes line".into()));
                    }
                    probes = Some(ProbeTimes::parse(rest).map_err(err)?);
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        if curves.is_empty() {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                msg: "battery lists no curves".into(),
            });
        }
        Ok(BatteryFile {
            curves,
            probes: probes.unwrap_or(ProbeTimes::Uniform(64)),
        })
    }

    /// Read the battery and its curve CSVs; relative paths resolve against
    /// the battery file's directory.
    pub fn load(path: &Path) -> Result<(BatteryFile, Vec<SampledCurve>)> {
        let battery = BatteryFile::parse(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let curves = battery
            .curves
            .iter()
            .map(|p| SampledCurve::from_csv(&std::fs::read_to_string(dir.join(p))?))
            .collect::<Result<Vec<_>>>()?;
        Ok((battery, curves))
    }
}
