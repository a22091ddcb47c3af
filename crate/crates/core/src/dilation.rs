//! Metric spaces with dilations: the structure type, the built-in examples,
//! numerical checks of the axioms A0–A4 and A4+, tangent distances, and the
//! morphism, equivalence and differentiability probes built on them.
//!
//! Every limit is taken down a [`Ladder`] and classified by
//! [`LimitEstimate`]; a check passes only on a converged ladder whose limit
//! is within [`tol::RESIDUAL_LIMIT`] of the target.

use crate::curves::ball_grid;
use crate::error::{precondition, DomainSet, Error, Result};
use crate::limit::{Ladder, LadderConfig, LimitEstimate, PointLimit, Rung, Verdict};
use crate::metric::{DistanceOracle, FiniteSample, Metric};
use crate::point::{Norm, Point};
use crate::tolerances as tol;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// The family `δ^x_ε y` as a pure function of `(x, ε, y)`.
pub trait DilationOracle: Send + Sync {
    fn dilate(&self, x: &Point, eps: f64, y: &Point) -> Point;
}

impl<F> DilationOracle for F
where
    F: Fn(&Point, f64, &Point) -> Point + Send + Sync,
{
    fn dilate(&self, x: &Point, eps: f64, y: &Point) -> Point {
        self(x, eps, y)
    }
}

/// `(x, u, v) ↦ d^x(u, v)`.
pub type TangentFn = Arc<dyn Fn(&Point, &Point, &Point) -> f64 + Send + Sync>;
/// `(x, u, v) ↦ point`, used for the declared limits of Δ and Σ.
pub type PairMapFn = Arc<dyn Fn(&Point, &Point, &Point) -> Point + Send + Sync>;
/// A map between model spaces.
pub type MapFn<'a> = &'a (dyn Fn(&Point) -> Point + Sync);

/// Parameters of the built-in structures, as parsed from a registry spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Builtin {
    Euclidean { k: usize, norm: Norm },
    Rotational { theta: f64 },
    Quadratic { eta: f64, k: usize, norm: Norm },
    LogPeriodic { kappa: f64 },
}

/// Constants of axiom A0: `1 < A < B`, and the compact-set constants
/// `R(K)`, `ε₀(K)` for the second inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A0Constants {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub eps0: f64,
}

impl Default for A0Constants {
    fn default() -> Self {
        A0Constants {
            a: 2.0,
            b: 4.0,
            r: 1.0,
            eps0: 0.5,
        }
    }
}

/// A metric space with dilations.
///
/// Domains: without a declared domain radius the dilations are global.
/// With radius `r`, `U(x) = B̄(x, r)`, `V_ε(x) = δ^x_ε U(x)` for `ε ≤ 1`,
/// and `W_ε(x) = { y : δ^x_ε y ∈ U(x) }` for `ε > 1`.
#[derive(Clone)]
pub struct DilatationStructure {
    label: String,
    builtin: Option<Builtin>,
    dim: usize,
    d: DistanceOracle,
    delta: Arc<dyn DilationOracle>,
    constants: A0Constants,
    domain: Option<f64>,
    box_factor: f64,
    tangent: Option<TangentFn>,
    delta_limit: Option<PairMapFn>,
    sigma_limit: Option<PairMapFn>,
}

impl std::fmt::Debug for DilatationStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DilatationStructure")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

fn affine_dilation(x: &Point, eps: f64, y: &Point) -> Point {
    x.axpy(eps, &(y - x))
}

fn complex_dilation(theta: f64) -> impl Fn(&Point, f64, &Point) -> Point + Send + Sync {
    move |x: &Point, eps: f64, y: &Point| {
        // ε^{1+iθ} = ε·e^{iθ ln ε}
        let z = Complex64::from_polar(eps, theta * eps.ln());
        let w = Complex64::new(y[0] - x[0], y[1] - x[1]) * z;
        Point::new([x[0] + w.re, x[1] + w.im])
    }
}

fn vector_delta(x: &Point, u: &Point, v: &Point) -> Point {
    &(x + v) - u
}

fn vector_sigma(x: &Point, u: &Point, v: &Point) -> Point {
    &(u + v) - x
}

impl DilatationStructure {
    /// A structure from its distance and dilations, with default A0
    /// constants, global domains and no declared tangent data.
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        d: DistanceOracle,
        delta: impl DilationOracle + 'static,
    ) -> Self {
        DilatationStructure {
            label: label.into(),
            builtin: None,
            dim,
            d,
            delta: Arc::new(delta),
            constants: A0Constants::default(),
            domain: None,
            box_factor: 1.0,
            tangent: None,
            delta_limit: None,
            sigma_limit: None,
        }
    }

    pub fn with_constants(mut self, constants: A0Constants) -> Self {
        self.constants = constants;
        self
    }

    /// Restrict `U(x)` to the closed ball of radius `r`.
    pub fn with_domain(mut self, r: f64) -> Self {
        self.domain = Some(r);
        self
    }

    /// Declare an exact tangent distance used in preference to the
    /// extrapolated one.
    pub fn with_exact_tangent(mut self, f: TangentFn) -> Self {
        self.tangent = Some(f);
        self
    }

    /// Declare that the tangent cones are the vector groups of the
    /// coordinates: `Δ^x(u,v) = x + v − u` and `Σ^x(u,v) = u + v − x`.
    pub fn with_vector_tangent(mut self) -> Self {
        self.delta_limit = Some(Arc::new(vector_delta));
        self.sigma_limit = Some(Arc::new(vector_sigma));
        self
    }

    /// Coordinate half-width per unit of distance: the `d`-ball of radius
    /// `r` around `x` lies in the coordinate box of half-width `factor·r`.
    pub fn with_box_factor(mut self, factor: f64) -> Self {
        self.box_factor = factor;
        self
    }

    /// `X = ℝᵏ` with the given norm and `δ^x_ε y = x + ε(y − x)`.
    pub fn euclidean(k: usize, norm: Norm) -> Self {
        let label = format!("euclidean:k={k},norm={}", norm.as_str());
        let mut ds = DilatationStructure::new(
            label,
            k,
            DistanceOracle::new(move |a: &Point, b: &Point| norm.dist(a, b)),
            affine_dilation,
        )
        .with_exact_tangent(Arc::new(move |_x: &Point, u: &Point, v: &Point| norm.dist(u, v)))
        .with_vector_tangent();
        ds.builtin = Some(Builtin::Euclidean { k, norm });
        ds
    }

    /// `X = ℝ² ≅ ℂ` with the Euclidean distance and
    /// `δ^x_ε y = x + ε^{1+iθ}(y − x)`.
    pub fn rotational(theta: f64) -> Self {
        let label = format!("rotational:theta={theta:?}");
        let mut ds = DilatationStructure::new(
            label,
            2,
            DistanceOracle::euclidean(),
            complex_dilation(theta),
        )
        .with_exact_tangent(Arc::new(|_x: &Point, u: &Point, v: &Point| {
            crate::point::euclidean(u, v)
        }))
        .with_vector_tangent();
        ds.builtin = Some(Builtin::Rotational { theta });
        ds
    }

    /// `X = ℝᵏ`, affine dilations, `d(x,y) = ‖x−y‖ + η‖x−y‖²`.
    pub fn quadratic(eta: f64, k: usize, norm: Norm) -> Self {
        let label = format!("quadratic:eta={eta:?},k={k},norm={}", norm.as_str());
        let mut ds = DilatationStructure::new(
            label,
            k,
            DistanceOracle::new(move |a: &Point, b: &Point| {
                let r = norm.dist(a, b);
                r + eta * r * r
            }),
            affine_dilation,
        )
        .with_exact_tangent(Arc::new(move |_x: &Point, u: &Point, v: &Point| norm.dist(u, v)))
        .with_vector_tangent();
        ds.builtin = Some(Builtin::Quadratic { eta, k, norm });
        ds
    }

    /// `X = ℝ`, affine dilations, `d(x,y) = |x−y|·(2 + sin(κ ln|x−y|))`.
    /// The rescaled distances are log-periodic in `ε`, so no tangent
    /// distance exists.
    pub fn log_periodic(kappa: f64) -> Self {
        let label = format!("logperiodic:kappa={kappa:?}");
        let mut ds = DilatationStructure::new(
            label,
            1,
            DistanceOracle::new(move |a: &Point, b: &Point| {
                let r = (a[0] - b[0]).abs();
                if r == 0.0 {
                    0.0
                } else {
                    r * (2.0 + (kappa * r.ln()).sin())
                }
            }),
            affine_dilation,
        )
        .with_vector_tangent();
        ds.builtin = Some(Builtin::LogPeriodic { kappa });
        ds
    }

    /// Build a structure from a registry spec such as
    /// `euclidean:k=2,norm=l2`, `rotational:theta=1.0`,
    /// `quadratic:eta=0.1,k=2` or `logperiodic:kappa=3.0`. Every kind also
    /// accepts `domain=<r>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, params) = match spec.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => (spec, ""),
        };
        let allowed: &[&str] = match name {
            "euclidean" => &["k", "norm", "domain"],
            "rotational" => &["theta", "domain"],
            "quadratic" => &["eta", "k", "norm", "domain"],
            "logperiodic" => &["kappa", "domain"],
            _ => return Err(Error::UnknownStructure(spec.to_string())),
        };
        let mut kv: Vec<(&str, &str)> = Vec::new();
        for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("parameter `{item}` is not key=value")))?;
            let k = k.trim();
            if kv.iter().any(|(seen, _)| *seen == k) {
                return Err(Error::Malformed(format!("parameter `{k}` given twice")));
            }
            kv.push((k, v.trim()));
        }
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(Error::Malformed(format!(
                "unknown parameter `{k}` for structure `{name}`"
            )));
        }
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let num = |key: &str, default: f64| -> Result<f64> {
            match get(key) {
                None => Ok(default),
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Malformed(format!("`{key}={v}` is not a finite number"))),
            }
        };
        let dim = |default: usize| -> Result<usize> {
            match get("k") {
                None => Ok(default),
                Some(v) => v
                    .parse::<usize>()
                    .ok()
                    .filter(|k| (1..=8).contains(k))
                    .ok_or_else(|| Error::Malformed(format!("`k={v}` must be an integer in 1..=8"))),
            }
        };
        let norm = || -> Result<Norm> {
            match get("norm") {
                None => Ok(Norm::L2),
                Some(v) => Norm::parse(v).ok_or_else(|| Error::Malformed(format!("unknown norm `{v}`"))),
            }
        };
        let mut ds = match name {
            "euclidean" => DilatationStructure::euclidean(dim(2)?, norm()?),
            "rotational" => DilatationStructure::rotational(num("theta", 1.0)?),
            "quadratic" => {
                let eta = num("eta", 0.1)?;
                if eta < 0.0 {
                    return Err(Error::Malformed("`eta` must be nonnegative".into()));
                }
                DilatationStructure::quadratic(eta, dim(2)?, norm()?)
            }
            _ => DilatationStructure::log_periodic(num("kappa", 3.0)?),
        };
        if get("domain").is_some() {
            let r = num("domain", f64::INFINITY)?;
            if r <= 0.0 {
                return Err(Error::Malformed("`domain` must be positive".into()));
            }
            ds = ds.with_domain(r);
            ds.label = format!("{},domain={r:?}", ds.label);
        }
        Ok(ds)
    }

    /// Canonical registry spec.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn builtin(&self) -> Option<&Builtin> {
        self.builtin.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distance(&self) -> &DistanceOracle {
        &self.d
    }

    pub fn d(&self, a: &Point, b: &Point) -> f64 {
        self.d.eval(a, b)
    }

    pub fn constants(&self) -> A0Constants {
        self.constants
    }

    pub fn domain(&self) -> Option<f64> {
        self.domain
    }

    pub fn box_factor(&self) -> f64 {
        self.box_factor
    }

    pub fn has_exact_tangent(&self) -> bool {
        self.tangent.is_some()
    }

    /// The declared tangent distance, when there is one.
    pub fn exact_tangent(&self, x: &Point, u: &Point, v: &Point) -> Option<f64> {
        self.tangent.as_ref().map(|f| f(x, u, v))
    }

    /// Declared `Δ^x(u,v)`.
    pub fn delta_limit(&self, x: &Point, u: &Point, v: &Point) -> Option<Point> {
        self.delta_limit.as_ref().map(|f| f(x, u, v))
    }

    /// Declared `Σ^x(u,v)`.
    pub fn sigma_limit(&self, x: &Point, u: &Point, v: &Point) -> Option<Point> {
        self.sigma_limit.as_ref().map(|f| f(x, u, v))
    }

    /// `δ^x_ε y` without domain checks.
    pub fn dilate_unchecked(&self, x: &Point, eps: f64, y: &Point) -> Point {
        self.delta.dilate(x, eps, y)
    }

    fn check_dim(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim {
            return Err(precondition(format!(
                "point of dimension {} in a {}-dimensional structure",
                p.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    fn in_domain(&self, x: &Point, y: &Point) -> bool {
        match self.domain {
            None => true,
            Some(r) => self.d(x, y) <= r * (1.0 + 1e-12),
        }
    }

    /// `δ^x_ε y`, checking that `(ε, x, y)` lies in the domain of `δ`.
    pub fn dilate(&self, x: &Point, eps: f64, y: &Point) -> Result<Point> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(precondition(format!("scale {eps} is not in (0, ∞)")));
        }
        let out = self.delta.dilate(x, eps, y);
        if eps <= 1.0 {
            if !self.in_domain(x, y) {
                return Err(Error::Domain {
                    set: DomainSet::U,
                    detail: format!("d(x, y) = {} exceeds the domain radius", self.d(x, y)),
                });
            }
        } else if !self.in_domain(x, &out) {
            return Err(Error::Domain {
                set: DomainSet::W,
                detail: format!("y is not in W_{eps}(x): its image leaves U(x)"),
            });
        }
        Ok(out)
    }

    /// `(δ^x_ε)^{-1} y = δ^x_{1/ε} y` for `ε ≤ 1`, requiring `y ∈ V_ε(x)`.
    pub fn undilate(&self, x: &Point, eps: f64, y: &Point) -> Result<Point> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
            return Err(precondition(format!("inverse dilation needs scale in (0, 1], got {eps}")));
        }
        let out = self.delta.dilate(x, 1.0 / eps, y);
        if !self.in_domain(x, &out) {
            return Err(Error::Domain {
                set: DomainSet::V,
                detail: format!("y is not in V_{eps}(x)"),
            });
        }
        Ok(out)
    }

    /// The rescaled distance `(δ, ε)` at `x`.
    pub fn rescaled(&self, x: &Point, eps: f64) -> RescaledDistance {
        RescaledDistance {
            ds: self.clone(),
            x: x.clone(),
            eps,
        }
    }

    /// Points of a `per_axis` coordinate grid lying in the closed `d`-ball
    /// of radius `r` around `x`.
    pub fn ball_sample(&self, x: &Point, r: f64, per_axis: usize) -> Vec<Point> {
        crate::point::unit_grid(self.dim, per_axis.max(2))
            .into_iter()
            .map(|g| x.axpy(r * self.box_factor, &g))
            .filter(|p| self.d(x, p) <= r)
            .collect()
    }
}

/// `(u, v) ↦ (1/ε) d(δ^x_ε u, δ^x_ε v)`.
#[derive(Clone, Debug)]
pub struct RescaledDistance {
    ds: DilatationStructure,
    x: Point,
    eps: f64,
}

impl RescaledDistance {
    pub fn eval(&self, u: &Point, v: &Point) -> Result<f64> {
        let a = self.ds.dilate(&self.x, self.eps, u)?;
        let b = self.ds.dilate(&self.x, self.eps, v)?;
        Ok(self.ds.d(&a, &b) / self.eps)
    }

    /// As an oracle; pairs outside the domain evaluate to NaN.
    pub fn oracle(&self) -> DistanceOracle {
        let me = self.clone();
        DistanceOracle::new(move |u: &Point, v: &Point| me.eval(u, v).unwrap_or(f64::NAN))
    }
}

impl Metric<Point> for RescaledDistance {
    fn distance(&self, a: &Point, b: &Point) -> f64 {
        self.eval(a, b).unwrap_or(f64::NAN)
    }
}

/// Largest value, with NaN absorbing.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn sup(values: impl ParallelIterator<Item = f64>) -> f64 {
    values.reduce(|| 0.0, nan_max)
}

// ---------------------------------------------------------------------------
// Tangent distance

/// One evaluation of the tangent distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentValue {
    pub value: f64,
    /// Set when no trustworthy value exists: the ladder did not converge or
    /// disagrees with the declared exact value.
    pub flagged: bool,
    pub exact: Option<f64>,
    pub estimate: LimitEstimate,
}

/// `d^x` at a fixed base point, estimated down a ladder of rescaled
/// distances and cross-checked against the declared exact value.
#[derive(Clone, Debug)]
pub struct TangentDistance {
    ds: DilatationStructure,
    x: Point,
    ladder: Ladder,
    cfg: LadderConfig,
}

/// The tangent distance `d^x` of `ds`.
pub fn tangent_distance(ds: &DilatationStructure, x: &Point, ladder: &Ladder, cfg: &LadderConfig) -> TangentDistance {
    TangentDistance {
        ds: ds.clone(),
        x: x.clone(),
        ladder: ladder.clone(),
        cfg: *cfg,
    }
}

impl TangentDistance {
    pub fn base(&self) -> &Point {
        &self.x
    }

    /// The ladder `ε ↦ (1/ε) d(δ^x_ε u, δ^x_ε v)`.
    pub fn estimate(&self, u: &Point, v: &Point) -> LimitEstimate {
        let rd = |eps: f64| self.ds.rescaled(&self.x, eps).eval(u, v).unwrap_or(f64::NAN);
        LimitEstimate::evaluate(&self.ladder, &self.cfg, rd)
    }

    pub fn value(&self, u: &Point, v: &Point) -> TangentValue {
        let estimate = self.estimate(u, v);
        let exact = self.ds.exact_tangent(&self.x, u, v);
        let agrees = |e: f64| (estimate.limit - e).abs() <= tol::RESIDUAL_LIMIT * (1.0 + e.abs());
        let (value, flagged) = match exact {
            Some(e) => (e, !(estimate.is_converged() && agrees(e))),
            None => (estimate.limit, !estimate.is_converged()),
        };
        TangentValue {
            value,
            flagged,
            exact,
            estimate,
        }
    }

    /// `d^x(u, v)`, or NaN when flagged.
    pub fn eval(&self, u: &Point, v: &Point) -> f64 {
        let tv = self.value(u, v);
        if tv.flagged {
            f64::NAN
        } else {
            tv.value
        }
    }

    pub fn oracle(&self) -> DistanceOracle {
        let me = self.clone();
        DistanceOracle::new(move |u: &Point, v: &Point| me.eval(u, v))
    }
}

// ---------------------------------------------------------------------------
// Axioms

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AxiomTag {
    A0,
    A1,
    A2,
    A3,
    A4,
    #[serde(rename = "A4plus")]
    A4Plus,
}

impl AxiomTag {
    pub const ALL: [AxiomTag; 6] = [
        AxiomTag::A0,
        AxiomTag::A1,
        AxiomTag::A2,
        AxiomTag::A3,
        AxiomTag::A4,
        AxiomTag::A4Plus,
    ];

    pub fn parse(s: &str) -> Option<AxiomTag> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a0" => Some(AxiomTag::A0),
            "a1" => Some(AxiomTag::A1),
            "a2" => Some(AxiomTag::A2),
            "a3" => Some(AxiomTag::A3),
            "a4" => Some(AxiomTag::A4),
            "a4plus" | "a4+" => Some(AxiomTag::A4Plus),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AxiomTag::A0 => "A0",
            AxiomTag::A1 => "A1",
            AxiomTag::A2 => "A2",
            AxiomTag::A3 => "A3",
            AxiomTag::A4 => "A4",
            AxiomTag::A4Plus => "A4plus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub axiom: AxiomTag,
    pub base: Point,
    /// Number of (point, scale) probes evaluated.
    pub probes: usize,
    /// Probes skipped because one side left the declared domains.
    pub skipped: usize,
    /// Residual of the exactly-checkable part, when there is one.
    pub residual: Option<f64>,
    /// Ladder of sup-residuals for the limit part, when there is one.
    pub estimate: Option<LimitEstimate>,
    /// Second ladder for A4+ (the Σ operator).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_estimate: Option<LimitEstimate>,
    pub pass: bool,
}

/// Base point and points of a probe region. The region must carry
/// coordinates and lie within `A` of its base, which is how the
/// "sufficiently close" contract is realized.
fn region_points(ds: &DilatationStructure, region: &FiniteSample) -> Result<(Point, Vec<Point>)> {
    let pts = region
        .points()
        .ok_or_else(|| precondition("probe region must carry coordinates"))?;
    if pts.is_empty() {
        return Err(precondition("probe region is empty"));
    }
    let x = pts[region.base().unwrap_or(0)].clone();
    for p in pts {
        ds.check_dim(p)?;
        if ds.d(&x, p) > ds.constants.a * (1.0 + 1e-12) {
            return Err(precondition(format!(
                "region point at distance {} from the base exceeds A = {}",
                ds.d(&x, p),
                ds.constants.a
            )));
        }
    }
    Ok((x, pts.to_vec()))
}

fn small_scales(ladder: &Ladder) -> Vec<f64> {
    ladder.scales().iter().copied().filter(|&e| e < 1.0).collect()
}

fn converged_to_zero(est: &LimitEstimate) -> bool {
    est.converged_to(0.0, tol::RESIDUAL_LIMIT)
}

/// Check one axiom on a probe region based at the region's base point.
pub fn check_axiom(
    ds: &DilatationStructure,
    axiom: AxiomTag,
    region: &FiniteSample,
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> Result<AxiomReport> {
    let (x, pts) = region_points(ds, region)?;
    let report = match axiom {
        AxiomTag::A0 => check_a0(ds, &x, &pts, ladder),
        AxiomTag::A1 => check_a1(ds, &x, &pts, ladder, cfg),
        AxiomTag::A2 => check_a2(ds, &x, &pts, ladder),
        AxiomTag::A3 => check_a3(ds, &x, &pts, ladder, cfg),
        AxiomTag::A4 | AxiomTag::A4Plus => check_a4(ds, axiom, &x, &pts, ladder, cfg),
    };
    Ok(report)
}

/// A0 on the canonical ball domains `V_ε = δ_ε B(x,A)`,
/// `W_{1/ε} = δ_ε B(x,B)`: the only non-tautological inclusion is
/// `B(x,ε) ⊆ δ^x_ε B(x,A)`, plus the compact-set condition
/// `δ_ε v ∈ W_{1/ε}(δ_ε u)` for `u, v ∈ B̄(x,R)`, `ε < ε₀`.
/// The residual is the largest excess over `A` (resp. `B`).
fn check_a0(ds: &DilatationStructure, x: &Point, pts: &[Point], ladder: &Ladder) -> AxiomReport {
    let c = ds.constants;
    let ordered = 1.0 < c.a && c.a < c.b;
    let scales = small_scales(ladder);
    let grid = crate::point::unit_grid(ds.dim, 9);
    let near: Vec<&Point> = pts.iter().filter(|p| ds.d(x, p) <= c.r).collect();
    let per_scale: Vec<(f64, usize)> = scales
        .par_iter()
        .map(|&eps| {
            let mut excess = f64::NEG_INFINITY;
            let mut probes = 0;
            for g in &grid {
                let y = x.axpy(eps * ds.box_factor, g);
                if ds.d(x, &y) >= eps {
                    continue;
                }
                probes += 1;
                let pre = ds.dilate_unchecked(x, 1.0 / eps, &y);
                excess = nan_max(excess, ds.d(x, &pre) - c.a);
            }
            if eps < c.eps0 {
                for u in &near {
                    let a = ds.dilate_unchecked(x, eps, u);
                    for v in &near {
                        probes += 1;
                        let b = ds.dilate_unchecked(x, eps, v);
                        let back = ds.dilate_unchecked(&a, 1.0 / eps, &b);
                        excess = nan_max(excess, ds.d(&a, &back) - c.b);
                    }
                }
            }
            (excess, probes)
        })
        .collect();
    let excess = per_scale.iter().map(|p| p.0).fold(f64::NEG_INFINITY, nan_max);
    let probes = per_scale.iter().map(|p| p.1).sum();
    AxiomReport {
        axiom: AxiomTag::A0,
        base: x.clone(),
        probes,
        skipped: 0,
        residual: Some(excess),
        estimate: None,
        sigma_estimate: None,
        pass: ordered && excess < 0.0,
    }
}

/// A1: `δ^x_ε x = x`, `δ^x_1 = id`, and `δ^x_ε y → x`.
fn check_a1(ds: &DilatationStructure, x: &Point, pts: &[Point], ladder: &Ladder, cfg: &LadderConfig) -> AxiomReport {
    let mut scales: Vec<f64> = ladder.scales().to_vec();
    scales.extend([1.0, 2.0, 4.0]);
    let fixed = sup(scales.par_iter().map(|&e| ds.d(&ds.dilate_unchecked(x, e, x), x)));
    let ident = sup(pts.par_iter().map(|y| ds.d(&ds.dilate_unchecked(x, 1.0, y), y)));
    let residual = nan_max(fixed, ident);
    let rungs = ladder
        .scales()
        .par_iter()
        .map(|&eps| Rung {
            scale: eps,
            value: sup(pts.par_iter().map(|y| ds.d(&ds.dilate_unchecked(x, eps, y), x))),
        })
        .collect();
    let est = LimitEstimate::from_rungs(rungs, cfg);
    let pass = residual <= tol::ALGEBRAIC && converged_to_zero(&est);
    AxiomReport {
        axiom: AxiomTag::A1,
        base: x.clone(),
        probes: scales.len() + pts.len() * (1 + ladder.len()),
        skipped: 0,
        residual: Some(residual),
        estimate: Some(est),
        sigma_estimate: None,
        pass,
    }
}

/// A2: `δ^x_ε δ^x_μ u = δ^x_{εμ} u` over all pairs of ladder scales and
/// `{1, 2, 4}`, skipping pairs where either side is undefined.
fn check_a2(ds: &DilatationStructure, x: &Point, pts: &[Point], ladder: &Ladder) -> AxiomReport {
    let mut scales: Vec<f64> = ladder.scales().to_vec();
    scales.extend([1.0, 2.0, 4.0]);
    let pairs: Vec<(f64, f64)> = scales
        .iter()
        .flat_map(|&e| scales.iter().map(move |&m| (e, m)))
        .collect();
    let results: Vec<Option<f64>> = pairs
        .par_iter()
        .flat_map_iter(|&(e, m)| {
            pts.iter().map(move |u| {
                let lhs = ds.dilate(x, m, u).and_then(|w| ds.dilate(x, e, &w));
                let rhs = ds.dilate(x, e * m, u);
                match (lhs, rhs) {
                    (Ok(a), Ok(b)) => Some(ds.d(&a, &b)),
                    _ => None,
                }
            })
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let residual = results.iter().flatten().copied().fold(0.0, nan_max);
    AxiomReport {
        axiom: AxiomTag::A2,
        base: x.clone(),
        probes: results.len(),
        skipped,
        residual: Some(residual),
        estimate: None,
        sigma_estimate: None,
        pass: residual <= tol::ALGEBRAIC && skipped < results.len(),
    }
}

/// A3: `sup_{u,v} |(1/ε) d(δ_ε u, δ_ε v) − d^x(u,v)|` down the ladder.
fn check_a3(ds: &DilatationStructure, x: &Point, pts: &[Point], ladder: &Ladder, cfg: &LadderConfig) -> AxiomReport {
    let td = tangent_distance(ds, x, ladder, cfg);
    let pairs: Vec<(usize, usize)> = (0..pts.len())
        .flat_map(|i| (i + 1..pts.len()).map(move |j| (i, j)))
        .collect();
    let tangents: Vec<TangentValue> = pairs.par_iter().map(|&(i, j)| td.value(&pts[i], &pts[j])).collect();
    let tangent_verdict = tangents
        .iter()
        .fold(Verdict::Converged, |v, t| v.worst(t.estimate.verdict));
    let rungs = ladder
        .scales()
        .par_iter()
        .map(|&eps| {
            let rd = ds.rescaled(x, eps);
            let value = sup(pairs.par_iter().zip(&tangents).map(|(&(i, j), t)| {
                let r = rd.eval(&pts[i], &pts[j]).unwrap_or(f64::NAN);
                (r - t.value).abs()
            }));
            Rung { scale: eps, value }
        })
        .collect();
    let mut est = LimitEstimate::from_rungs(rungs, cfg);
    est.verdict = est.verdict.worst(tangent_verdict);
    let pass = converged_to_zero(&est);
    AxiomReport {
        axiom: AxiomTag::A3,
        base: x.clone(),
        probes: pairs.len() * ladder.len(),
        skipped: 0,
        residual: None,
        estimate: Some(est),
        sigma_estimate: None,
        pass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Operator {
    Delta,
    Sigma,
}

/// `Δ^x_ε(u,v) = δ^{δ^x_ε u}_{1/ε} δ^x_ε v` or
/// `Σ^x_ε(u,v) = δ^x_{1/ε} δ^{δ^x_ε u}_ε v`.
pub fn delta_sigma(ds: &DilatationStructure, x: &Point, u: &Point, v: &Point, eps: f64, which: Operator) -> Result<Point> {
    let a = ds.dilate(x, eps, u)?;
    match which {
        Operator::Delta => {
            let b = ds.dilate(x, eps, v)?;
            ds.dilate(&a, 1.0 / eps, &b)
        }
        Operator::Sigma => {
            let b = ds.dilate(&a, eps, v)?;
            ds.dilate(x, 1.0 / eps, &b)
        }
    }
}

/// Sup-residual ladder of `Δ_ε` or `Σ_ε` against the declared limit, or,
/// without one, against the per-pair extrapolated limit.
fn operator_ladder(
    ds: &DilatationStructure,
    which: Operator,
    x: &Point,
    pts: &[Point],
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> LimitEstimate {
    let pairs: Vec<(usize, usize)> = (0..pts.len())
        .flat_map(|i| (0..pts.len()).map(move |j| (i, j)))
        .collect();
    let scales = ladder.scales();
    let per_pair: Vec<(Vec<f64>, Verdict)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (u, v) = (&pts[i], &pts[j]);
            let vals: Vec<Option<Point>> = scales
                .iter()
                .map(|&e| delta_sigma(ds, x, u, v, e, which).ok())
                .collect();
            let declared = match which {
                Operator::Delta => ds.delta_limit(x, u, v),
                Operator::Sigma => ds.sigma_limit(x, u, v),
            };
            let (target, verdict) = match declared {
                Some(p) => (Some(p), Verdict::Converged),
                None if vals.iter().all(Option::is_some) => {
                    let ps: Vec<Point> = vals.iter().flatten().cloned().collect();
                    let pl = PointLimit::from_points(scales, &ps, cfg);
                    (Some(pl.point), pl.verdict)
                }
                None => (None, Verdict::Inconclusive),
            };
            let res = vals
                .iter()
                .map(|p| match (p, &target) {
                    (Some(p), Some(t)) => ds.d(p, t),
                    _ => f64::NAN,
                })
                .collect();
            (res, verdict)
        })
        .collect();
    let rungs = scales
        .iter()
        .enumerate()
        .map(|(k, &scale)| Rung {
            scale,
            value: per_pair.iter().map(|(r, _)| r[k]).fold(0.0, nan_max),
        })
        .collect();
    let mut est = LimitEstimate::from_rungs(rungs, cfg);
    est.verdict = per_pair.iter().fold(est.verdict, |v, p| v.worst(p.1));
    est
}

fn check_a4(
    ds: &DilatationStructure,
    axiom: AxiomTag,
    x: &Point,
    pts: &[Point],
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> AxiomReport {
    let delta = operator_ladder(ds, Operator::Delta, x, pts, ladder, cfg);
    let sigma = (axiom == AxiomTag::A4Plus).then(|| operator_ladder(ds, Operator::Sigma, x, pts, ladder, cfg));
    let pass = converged_to_zero(&delta) && sigma.as_ref().is_none_or(converged_to_zero);
    AxiomReport {
        axiom,
        base: x.clone(),
        probes: pts.len() * pts.len() * ladder.len() * if sigma.is_some() { 2 } else { 1 },
        skipped: 0,
        residual: None,
        estimate: Some(delta),
        sigma_estimate: sigma,
        pass,
    }
}

// ---------------------------------------------------------------------------
// Cone property and first-order comparison

/// `|d^x(u,v) − (1/μ) d^x(δ^x_μ u, δ^x_μ v)|`; NaN when a tangent value
/// is flagged.
pub fn cone_residual(
    ds: &DilatationStructure,
    x: &Point,
    u: &Point,
    v: &Point,
    mu: f64,
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> Result<f64> {
    if ds.d(x, u) > 1.0 || ds.d(x, v) > 1.0 {
        return Err(precondition("cone residual needs d(x,u) ≤ 1 and d(x,v) ≤ 1"));
    }
    if !(mu > 0.0 && mu < ds.constants.a) {
        return Err(precondition(format!("μ = {mu} must lie in (0, A)")));
    }
    let td = tangent_distance(ds, x, ladder, cfg);
    let mu_u = ds.dilate(x, mu, u)?;
    let mu_v = ds.dilate(x, mu, v)?;
    Ok((td.eval(u, v) - td.eval(&mu_u, &mu_v) / mu).abs())
}

/// `(1/ε) sup { |d(u,v) − d^x(u,v)| : d(x,u), d(x,v) ≤ ε }` down the
/// ladder, with the ball sampled on a `per_axis` coordinate grid. Pairs
/// with flagged tangent values contribute their ladder's last value and
/// the worst tangent verdict is folded into the result.
pub fn first_order_comparison(
    ds: &DilatationStructure,
    x: &Point,
    ladder: &Ladder,
    cfg: &LadderConfig,
    per_axis: usize,
) -> LimitEstimate {
    let td = tangent_distance(ds, x, ladder, cfg);
    let per_rung: Vec<(Rung, Verdict)> = ladder
        .scales()
        .par_iter()
        .map(|&eps| {
            let ball = ds.ball_sample(x, eps, per_axis);
            let pairs: Vec<(usize, usize)> = (0..ball.len())
                .flat_map(|i| (i + 1..ball.len()).map(move |j| (i, j)))
                .collect();
            let (value, verdict) = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let tv = td.value(&ball[i], &ball[j]);
                    let dev = (ds.d(&ball[i], &ball[j]) - tv.value).abs() / eps;
                    (dev, if tv.flagged { tv.estimate.verdict.worst(Verdict::Inconclusive) } else { Verdict::Converged })
                })
                .reduce(|| (0.0, Verdict::Converged), |a, b| (nan_max(a.0, b.0), a.1.worst(b.1)));
            (Rung { scale: eps, value }, verdict)
        })
        .collect();
    let verdict = per_rung.iter().fold(Verdict::Converged, |v, r| v.worst(r.1));
    let mut est = LimitEstimate::from_rungs(per_rung.into_iter().map(|r| r.0).collect(), cfg);
    est.verdict = est.verdict.worst(verdict);
    est
}

// ---------------------------------------------------------------------------
// Morphisms, equivalence, differentials

/// `max d̄(f(δ^{x}_ε u), δ̄^{y}_ε f(u))` over samples and scales, with
/// `x`, `y` the neutral elements (base points) of source and target.
#[allow(clippy::too_many_arguments)]
pub fn conical_morphism_residual(
    f: MapFn<'_>,
    src: &DilatationStructure,
    src_base: &Point,
    dst: &DilatationStructure,
    dst_base: &Point,
    samples: &[Point],
    scales: &[f64],
) -> f64 {
    sup(scales.par_iter().flat_map_iter(|&eps| {
        samples.iter().map(move |u| {
            let lhs = f(&src.dilate_unchecked(src_base, eps, u));
            let rhs = dst.dilate_unchecked(dst_base, eps, &f(u));
            dst.d(&lhs, &rhs)
        })
    }))
}

/// Result of comparing two structures on a shared carrier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub base: Point,
    /// Extremes of `d̄/d` over sample pairs.
    pub lipschitz_low: f64,
    pub lipschitz_high: f64,
    pub bilipschitz: bool,
    /// `Q^x(u) = lim (δ̄^x_ε)^{-1} δ^x_ε u` per sample.
    pub q: Vec<PointLimit>,
    /// `P^x(u) = lim (δ^x_ε)^{-1} δ̄^x_ε u` per sample.
    pub p: Vec<PointLimit>,
    /// Largest tail oscillation over all coordinates of P and Q.
    pub oscillation: f64,
    /// `max d(P u, u), d̄(Q u, u)` over samples.
    pub identity_residual: f64,
    /// `max d̄(Σ̄^x(u,v), Q^x(Σ^x(P u, P v)))` over sample pairs, when
    /// equivalent.
    pub isoequiv_residual: Option<f64>,
    pub equivalent: bool,
}

fn quotient_limit(
    outer: &DilatationStructure,
    inner: &DilatationStructure,
    x: &Point,
    u: &Point,
    scales: &[f64],
    cfg: &LadderConfig,
) -> PointLimit {
    let pts: Vec<Point> = scales
        .iter()
        .map(|&e| {
            inner
                .dilate(x, e, u)
                .and_then(|w| outer.undilate(x, e, &w))
                .unwrap_or_else(|_| Point::new(std::iter::repeat_n(f64::NAN, u.dim())))
        })
        .collect();
    PointLimit::from_points(scales, &pts, cfg)
}

fn sigma_point(ds: &DilatationStructure, x: &Point, u: &Point, v: &Point, ladder: &Ladder, cfg: &LadderConfig) -> Point {
    if let Some(p) = ds.sigma_limit(x, u, v) {
        return p;
    }
    let scales = ladder.scales();
    let pts: Vec<Point> = scales
        .iter()
        .map(|&e| {
            delta_sigma(ds, x, u, v, e, Operator::Sigma)
                .unwrap_or_else(|_| Point::new(std::iter::repeat_n(f64::NAN, u.dim())))
        })
        .collect();
    PointLimit::from_points(scales, &pts, cfg).point
}

/// Probe whether `ds1 = (X, d, δ)` and `ds2 = (X, d̄, δ̄)` are equivalent at
/// `x`: bilipschitz identity on the samples and uniform convergence of the
/// quotient maps `P^x`, `Q^x`.
pub fn equivalence_probe(
    ds1: &DilatationStructure,
    ds2: &DilatationStructure,
    x: &Point,
    samples: &[Point],
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> Result<EquivalenceReport> {
    if ds1.dim != ds2.dim {
        return Err(precondition("structures do not share a carrier"));
    }
    if samples.is_empty() {
        return Err(precondition("equivalence probe needs samples"));
    }
    let scales = small_scales(ladder);
    if scales.is_empty() {
        return Err(precondition("ladder has no scale below 1"));
    }
    let mut all: Vec<Point> = vec![x.clone()];
    all.extend(samples.iter().cloned());
    let (mut low, mut high) = (f64::INFINITY, 0.0f64);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let d1 = ds1.d(&all[i], &all[j]);
            if d1 > 0.0 {
                let r = ds2.d(&all[i], &all[j]) / d1;
                low = low.min(r);
                high = high.max(r);
            }
        }
    }
    let bilipschitz = low > 0.0 && high.is_finite() && low <= high;

    let q: Vec<PointLimit> = samples
        .par_iter()
        .map(|u| quotient_limit(ds2, ds1, x, u, &scales, cfg))
        .collect();
    let p: Vec<PointLimit> = samples
        .par_iter()
        .map(|u| quotient_limit(ds1, ds2, x, u, &scales, cfg))
        .collect();
    let oscillation = q.iter().chain(&p).map(PointLimit::oscillation).fold(0.0, nan_max);
    let converged = q.iter().chain(&p).all(|l| l.verdict == Verdict::Converged);
    let identity_residual = samples
        .iter()
        .zip(&p)
        .zip(&q)
        .map(|((u, pu), qu)| nan_max(ds1.d(&pu.point, u), ds2.d(&qu.point, u)))
        .fold(0.0, nan_max);
    let equivalent = bilipschitz && converged;

    let isoequiv_residual = equivalent.then(|| {
        let pairs: Vec<(usize, usize)> = (0..samples.len())
            .flat_map(|i| (0..samples.len()).map(move |j| (i, j)))
            .collect();
        sup(pairs.par_iter().map(|&(i, j)| {
            let lhs = sigma_point(ds2, x, &samples[i], &samples[j], ladder, cfg);
            let inner = sigma_point(ds1, x, &p[i].point, &p[j].point, ladder, cfg);
            let rhs = quotient_limit(ds2, ds1, x, &inner, &scales, cfg).point;
            ds2.d(&lhs, &rhs)
        }))
    });
    Ok(EquivalenceReport {
        base: x.clone(),
        lipschitz_low: low,
        lipschitz_high: high,
        bilipschitz,
        q,
        p,
        oscillation,
        identity_residual,
        isoequiv_residual,
        equivalent,
    })
}

/// Derivative residual ladder
/// `ε ↦ sup { (1/ε) d̄(f(δ^x_ε u), δ̄^{f(x)}_ε Df(u)) : d(x,u) ≤ r }`
/// over a fixed probe ball of radius `r`, sampled on a `per_axis` grid.
#[allow(clippy::too_many_arguments)]
pub fn differential_probe(
    f: MapFn<'_>,
    src: &DilatationStructure,
    dst: &DilatationStructure,
    x: &Point,
    df: MapFn<'_>,
    ladder: &Ladder,
    cfg: &LadderConfig,
    radius: f64,
    per_axis: usize,
) -> LimitEstimate {
    let fx = f(x);
    let ball = ball_grid(x, radius, per_axis, src.distance());
    let dfu: Vec<Point> = ball.iter().map(df).collect();
    LimitEstimate::evaluate(ladder, cfg, |eps| {
        sup(ball.par_iter().zip(&dfu).map(|(u, du)| {
            let lhs = f(&src.dilate_unchecked(x, eps, u));
            let rhs = dst.dilate_unchecked(&fx, eps, du);
            dst.d(&lhs, &rhs) / eps
        }))
    })
}
