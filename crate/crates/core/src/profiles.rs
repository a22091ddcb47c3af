//! Metric profiles `ε ↦ [B̄(x,1), (1/ε)d, x]` as finite snapshots, the
//! profile-consistency and metric-cone checks, and tangent-space existence.
//!
//! All verdicts are relative to the net resolution `μ_net`: snapshots
//! identify isometry classes only up to it.

use crate::dilation::DilatationStructure;
use crate::error::{precondition, Error, Result};
use crate::gh::{gh_distance, GhConfig, GhResult, Mode};
use crate::limit::{Ladder, LadderConfig, LimitEstimate, Rung};
use crate::metric::{DistanceOracle, FiniteSample};
use crate::point::Point;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Coordinate half-width of a box containing the `d`-ball of radius `r`.
pub type HalfWidthFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A metric space on coordinates with a ball generator.
#[derive(Clone)]
pub struct PointedSpace {
    label: String,
    dim: usize,
    d: DistanceOracle,
    half_width: HalfWidthFn,
}

impl std::fmt::Debug for PointedSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PointedSpace")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl PointedSpace {
    pub fn new(label: impl Into<String>, dim: usize, d: DistanceOracle, half_width: HalfWidthFn) -> Self {
        PointedSpace {
            label: label.into(),
            dim,
            d,
            half_width,
        }
    }

    /// The ambient space of a dilatation structure.
    pub fn from_structure(ds: &DilatationStructure) -> Self {
        let factor = ds.box_factor();
        PointedSpace::new(ds.label(), ds.dim(), ds.distance().clone(), Arc::new(move |r| factor * r))
    }

    /// The snowflake line `d(x,y) = |x − y|^{1/2}`.
    pub fn snowflake() -> Self {
        PointedSpace::new(
            "snowflake",
            1,
            DistanceOracle::new(|a: &Point, b: &Point| (a[0] - b[0]).abs().sqrt()),
            Arc::new(|r| r * r),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d(&self, a: &Point, b: &Point) -> f64 {
        self.d.eval(a, b)
    }

    pub fn half_width(&self, r: f64) -> f64 {
        (self.half_width)(r)
    }

    /// The space seen through the profile at scale `s` around `x`, with
    /// coordinates recentred at the origin: `w ↦ x + c·w` with
    /// `c = half_width(s)` and distance `(1/s) d`. Its unit ball is the
    /// snapshot ball of scale `s`.
    pub fn zoom(&self, x: &Point, s: f64) -> PointedSpace {
        let c = self.half_width(s);
        let inner = self.clone();
        let x0 = x.clone();
        let hw = Arc::clone(&self.half_width);
        PointedSpace::new(
            format!("{}@{s:?}", self.label),
            self.dim,
            DistanceOracle::new(move |a: &Point, b: &Point| inner.d(&x0.axpy(c, a), &x0.axpy(c, b)) / s),
            Arc::new(move |r| hw(r * s) / c),
        )
    }
}

/// Snapshot and GH settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    /// Cap on candidate lattice points per snapshot.
    pub max_candidates: usize,
    pub gh: GhConfig,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            max_candidates: 40_000,
            gh: GhConfig::heuristic(0),
        }
    }
}

/// A finite pointed sample approximating `[B̄(x,1), (1/ε)d, x]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSnapshot {
    pub eps: f64,
    pub mu_net: f64,
    /// Rescaled distance matrix; base index 0 is `x`.
    pub sample: FiniteSample,
    /// Covering radius of the net over the candidate lattice.
    pub covering: f64,
    /// Rescaled cell diameter of the candidate lattice.
    pub lattice_spacing: f64,
}

impl ProfileSnapshot {
    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    /// Matrix text with a `# eps=<val> mu_net=<val>` comment line.
    pub fn dump(&self) -> String {
        self.sample
            .to_matrix_text(Some(&format!("eps={:?} mu_net={:?}", self.eps, self.mu_net)))
    }
}

/// Lattice `x + h·ℤᵏ` restricted to the box of half-width `half`, then to
/// the ball `d(x, p) ≤ radius`. The origin comes first.
fn lattice_ball(space: &PointedSpace, x: &Point, radius: f64, half: f64, h: f64) -> Vec<Point> {
    let n = (half / h + 1e-9).floor() as i64;
    let side = (2 * n + 1) as usize;
    let total = side.pow(space.dim as u32);
    let mut out: Vec<Point> = (0..total)
        .into_par_iter()
        .filter_map(|mut idx| {
            let mut c = x.coords().to_vec();
            for ci in c.iter_mut() {
                let k = (idx % side) as i64 - n;
                idx /= side;
                *ci += h * k as f64;
            }
            let p = Point::new(c);
            (p != *x && space.d(x, &p) <= radius * (1.0 + 1e-9)).then_some(p)
        })
        .collect();
    out.insert(0, x.clone());
    out
}

/// Candidates in `B̄(x, radius)` from a lattice seeded at spacing `h0` and
/// halved until the rescaled cell diameter is at most `target`.
fn ball_candidates(
    space: &PointedSpace,
    x: &Point,
    radius: f64,
    h0: f64,
    target: f64,
    cap: usize,
) -> (Vec<Point>, f64) {
    let half = space.half_width(radius);
    let diag = Point::new(vec![1.0; space.dim]);
    let mut h = h0;
    loop {
        let pts = lattice_ball(space, x, radius, half, h);
        let spacing = pts
            .par_iter()
            .map(|p| space.d(p, &p.axpy(h, &diag)) / radius)
            .reduce(|| 0.0, f64::max);
        let next = (2.0 * (half / h * 2.0).floor() + 1.0).powi(space.dim as i32);
        if spacing <= target || next > cap as f64 || h < 1e-300 {
            return (pts, spacing);
        }
        h /= 2.0;
    }
}

/// Greedy farthest-point net starting from index 0; ties go to the lowest
/// index. Stops once every candidate is within `r` of the net.
fn farthest_point_net(points: &[Point], dist: impl Fn(&Point, &Point) -> f64 + Sync, r: f64) -> (Vec<usize>, f64) {
    let mut net = vec![0usize];
    let mut near: Vec<f64> = points.par_iter().map(|p| dist(&points[0], p)).collect();
    loop {
        let (i, far) = near
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 + 1e-9 { (i, v) } else { acc });
        if far <= r || net.len() == points.len() {
            return (net, far.max(0.0));
        }
        net.push(i);
        let pi = &points[i];
        near.par_iter_mut().zip(points).for_each(|(m, p)| {
            let d = dist(pi, p);
            if d < *m {
                *m = d;
            }
        });
    }
}

/// Net of `B̄(x, radius)` in `(1/radius)·d`, with the lattice seeded at
/// `h0`.
fn ball_snapshot(
    space: &PointedSpace,
    x: &Point,
    radius: f64,
    h0: f64,
    mu_net: f64,
    eps: f64,
    cfg: &ProfileConfig,
) -> Result<ProfileSnapshot> {
    if x.dim() != space.dim {
        return Err(precondition("base point dimension does not match the space"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(precondition(format!("scale {radius} is not positive")));
    }
    if !(mu_net.is_finite() && mu_net > 0.0) {
        return Err(precondition("net resolution must be positive"));
    }
    if space.d(x, x) != 0.0 {
        return Err(Error::EmptyProfile { eps });
    }
    // Lattice cells and net radius at μ/4 keep the true covering of the
    // ball under 3μ/8, so two snapshots of one ball are within GH 3μ/4.
    let (cands, lattice_spacing) = ball_candidates(space, x, radius, h0, mu_net / 4.0, cfg.max_candidates);
    let dist = |a: &Point, b: &Point| space.d(a, b) / radius;
    let (net, covering) = farthest_point_net(&cands, dist, mu_net / 4.0);
    let pts: Vec<Point> = net.iter().map(|&i| cands[i].clone()).collect();
    let sample = FiniteSample::with_points(pts, &dist).with_base(0)?;
    Ok(ProfileSnapshot {
        eps,
        mu_net,
        sample,
        covering,
        lattice_spacing,
    })
}

fn seed_spacing(space: &PointedSpace, s: f64) -> f64 {
    space.half_width(s) / 8.0
}

/// `[B̄(x,1), (1/ε)d, x]` sampled to resolution `mu_net`.
pub fn profile_snapshot(space: &PointedSpace, x: &Point, eps: f64, mu_net: f64, cfg: &ProfileConfig) -> Result<ProfileSnapshot> {
    ball_snapshot(space, x, eps, seed_spacing(space, eps), mu_net, eps, cfg)
}

/// GH distance between snapshots: exact for tiny ones, heuristic with the
/// configured seed otherwise.
pub fn snapshot_gh(a: &ProfileSnapshot, b: &ProfileSnapshot, cfg: &ProfileConfig) -> Result<GhResult> {
    let mut gh = cfg.gh.clone();
    gh.mode = if a.len() <= 4 && b.len() <= 4 { Mode::Exact } else { Mode::Heuristic };
    gh_distance(&a.sample, &b.sample, &gh)
}

/// GH distance between the snapshot at scale `εb` and the ball of radius
/// `ε` in the scale-`b` profile, rescaled by `1/ε`. The sub-ball is
/// sampled from the scale-`b` lattice, so the two sides are independent
/// samplings of the same space.
pub fn profile_consistency(
    space: &PointedSpace,
    x: &Point,
    b: f64,
    eps: f64,
    mu_net: f64,
    cfg: &ProfileConfig,
) -> Result<f64> {
    if !(b > 0.0 && eps > 0.0 && eps <= 1.0) {
        return Err(precondition("profile consistency needs b > 0 and ε ∈ (0, 1]"));
    }
    let direct = profile_snapshot(space, x, eps * b, mu_net, cfg)?;
    let sub = ball_snapshot(space, x, eps * b, seed_spacing(space, b), mu_net, eps * b, cfg)?;
    Ok(snapshot_gh(&direct, &sub, cfg)?.mu)
}

/// Result of the tangent-space existence check.
#[derive(Debug, Clone, Serialize)]
pub struct TangentReport {
    /// GH distance between consecutive snapshots, keyed by the smaller scale.
    pub residuals: LimitEstimate,
    pub threshold: f64,
    pub exists: bool,
    /// The terminal snapshot, when the tangent exists.
    pub snapshot: Option<ProfileSnapshot>,
    #[serde(skip)]
    pub tangent: Option<PointedSpace>,
}

/// Whether the profile is GH-Cauchy down the ladder: every consecutive
/// GH residual on the tail is at most `2·μ_net`.
pub fn tangent_existence(
    space: &PointedSpace,
    x: &Point,
    ladder: &Ladder,
    mu_net: f64,
    lcfg: &LadderConfig,
    cfg: &ProfileConfig,
) -> Result<TangentReport> {
    if ladder.len() < 2 {
        return Err(precondition("tangent existence needs at least two rungs"));
    }
    let snaps: Vec<ProfileSnapshot> = ladder
        .scales()
        .par_iter()
        .map(|&e| profile_snapshot(space, x, e, mu_net, cfg))
        .collect::<Result<_>>()?;
    let gh: Vec<f64> = snaps
        .par_windows(2)
        .map(|w| snapshot_gh(&w[0], &w[1], cfg).map(|r| r.mu))
        .collect::<Result<_>>()?;
    let rungs: Vec<Rung> = ladder.scales()[1..]
        .iter()
        .zip(&gh)
        .map(|(&scale, &value)| Rung { scale, value })
        .collect();
    let threshold = 2.0 * mu_net;
    let n = rungs.len();
    let exists = rungs[n.saturating_sub(lcfg.tail)..].iter().all(|r| r.value <= threshold);
    let residuals = LimitEstimate::from_rungs(rungs, lcfg);
    let last = ladder.smallest();
    let (snapshot, tangent) = if exists {
        (snaps.last().cloned(), Some(space.zoom(x, last)))
    } else {
        (None, None)
    };
    Ok(TangentReport {
        residuals,
        threshold,
        exists,
        snapshot,
        tangent,
    })
}

/// GH distance between the snapshots at scales `a` and `b`.
pub fn cone_check(space: &PointedSpace, x: &Point, a: f64, b: f64, mu_net: f64, cfg: &ProfileConfig) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0) {
        return Err(precondition("cone check needs a, b ∈ (0, 1]"));
    }
    let pa = profile_snapshot(space, x, a, mu_net, cfg)?;
    let pb = profile_snapshot(space, x, b, mu_net, cfg)?;
    Ok(snapshot_gh(&pa, &pb, cfg)?.mu)
}

/// Cone verdict over all pairs of `scales`: every GH distance ≤ `2·μ_net`.
pub fn is_cone(space: &PointedSpace, x: &Point, scales: &[f64], mu_net: f64, cfg: &ProfileConfig) -> Result<(bool, f64)> {
    let mut worst: f64 = 0.0;
    for (i, &a) in scales.iter().enumerate() {
        for &b in &scales[i..] {
            worst = worst.max(cone_check(space, x, a, b, mu_net, cfg)?);
        }
    }
    Ok((worst <= 2.0 * mu_net, worst))
}

/// Cone-dilatation residual at scale `a`: the GH relation between the
/// unit snapshot and the scale-`a` snapshot, read as a map `δ` from the
/// unit ball into `B̄(x, a)`, has `max |d(δu, δv) − a·d(u,v)| / a` (in
/// units of the unit snapshot).
pub fn cone_dilatation_residual(space: &PointedSpace, x: &Point, a: f64, mu_net: f64, cfg: &ProfileConfig) -> Result<f64> {
    let one = profile_snapshot(space, x, 1.0, mu_net, cfg)?;
    let pa = profile_snapshot(space, x, a, mu_net, cfg)?;
    let rel = snapshot_gh(&one, &pa, cfg)?.relation;
    let p1 = one.sample.points().expect("snapshots carry points");
    let pa_pts = pa.sample.points().expect("snapshots carry points");
    let pairs = rel.pairs();
    let worst = pairs
        .par_iter()
        .map(|&(u, du)| {
            pairs
                .iter()
                .map(|&(v, dv)| (space.d(&pa_pts[du], &pa_pts[dv]) - a * space.d(&p1[u], &p1[v])).abs() / a)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}
