//! Curves in the model spaces: variation, metric derivative, upper
//! dilatation, arc-length reparametrization, and the length distance.

use crate::error::{precondition, Error, Result};
use crate::limit::{Ladder, LadderConfig, LimitEstimate, Rung, Verdict};
use crate::metric::Metric;
use crate::point::Point;
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// A curve `c : [0,1] → X` given by its coordinates.
pub trait Curve: Send + Sync {
    fn eval(&self, t: f64) -> Point;
}

/// A curve given by a closure.
#[derive(Clone)]
pub struct FnCurve(Arc<dyn Fn(f64) -> Point + Send + Sync>);

impl FnCurve {
    pub fn new(f: impl Fn(f64) -> Point + Send + Sync + 'static) -> Self {
        FnCurve(Arc::new(f))
    }
}

impl Curve for FnCurve {
    fn eval(&self, t: f64) -> Point {
        (self.0)(t)
    }
}

impl std::fmt::Debug for FnCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FnCurve")
    }
}

/// A polyline: strictly increasing times from 0 to 1 with one point each.
/// Between nodes the curve interpolates coordinates linearly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCurve {
    times: Vec<f64>,
    points: Vec<Point>,
}

impl SampledCurve {
    pub fn new(times: Vec<f64>, points: Vec<Point>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::Malformed(format!(
                "{} times but {} points",
                times.len(),
                points.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Malformed("a curve needs at least two nodes".into()));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::Malformed("time grid must run from 0 to 1".into()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Malformed(format!(
                "times not strictly increasing at node {}",
                i + 1
            )));
        }
        let dim = points[0].dim();
        if let Some(i) = points.iter().position(|p| p.dim() != dim || !p.is_finite()) {
            return Err(Error::Malformed(format!(
                "node {i} has non-finite or mismatched coordinates"
            )));
        }
        Ok(SampledCurve { times, points })
    }

    /// Sample `c` at `n + 1` uniform times.
    pub fn from_curve(c: &dyn Curve, n: usize) -> Self {
        assert!(n >= 1);
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let points = times.iter().map(|&t| c.eval(t)).collect();
        SampledCurve { times, points }
    }

    /// Polyline through `vertices` at uniform times.
    pub fn polyline(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len().saturating_sub(1).max(1);
        let times = (0..vertices.len()).map(|i| i as f64 / n as f64).collect();
        Self::new(times, vertices)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> &Point {
        &self.points[0]
    }

    pub fn end(&self) -> &Point {
        self.points.last().unwrap()
    }

    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> SampledCurve {
        SampledCurve {
            times: self.times.clone(),
            points: self.points.iter().map(f).collect(),
        }
    }

    /// `a` on `[0, ½]` followed by `b` on `[½, 1]`.
    pub fn concat(a: &SampledCurve, b: &SampledCurve) -> Result<SampledCurve> {
        if a.end() != b.start() {
            return Err(precondition("curves do not share an endpoint"));
        }
        let mut times: Vec<f64> = a.times.iter().map(|t| t / 2.0).collect();
        let mut points = a.points.clone();
        times.extend(b.times[1..].iter().map(|t| 0.5 + t / 2.0));
        points.extend(b.points[1..].iter().cloned());
        SampledCurve::new(times, points)
    }

    /// Max over segments of `d(c(tᵢ), c(tᵢ₊₁)) / (tᵢ₊₁ − tᵢ)`.
    pub fn lipschitz(&self, d: &(impl Metric<Point> + ?Sized)) -> f64 {
        self.segments()
            .map(|(i, dt)| d.distance(&self.points[i], &self.points[i + 1]) / dt)
            .fold(0.0, f64::max)
    }

    /// No two nodes closer than `tol`.
    pub fn injective_on_nodes(&self, d: &(impl Metric<Point> + ?Sized), tol: f64) -> bool {
        let n = self.len();
        (0..n).all(|i| (i + 1..n).all(|j| d.distance(&self.points[i], &self.points[j]) > tol))
    }

    fn segments(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.times
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1] - w[0]))
    }

    /// Index `i` with `tᵢ ≤ t ≤ tᵢ₊₁`.
    fn segment_of(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.len() - 1) - 1
    }

    /// Parse the `t,x1,...,xk` CSV format.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let k = header.len().saturating_sub(1);
        let expected = std::iter::once("t".to_string()).chain((1..=k).map(|i| format!("x{i}")));
        if k == 0 || !header.iter().eq(expected.collect::<Vec<_>>().iter().map(String::as_str)) {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `t,x1,...,xk`".into(),
            });
        }
        let mut times = Vec::new();
        let mut points = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line,
                            msg: format!("not a finite number: `{f}`"),
                        })
                })
                .collect::<Result<_>>()?;
            times.push(vals[0]);
            points.push(Point::new(vals[1..].iter().copied()));
        }
        SampledCurve::new(times, points)
    }

    pub fn to_csv(&self) -> String {
        let k = self.points.first().map_or(0, Point::dim);
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=k).map(|i| format!("x{i}")))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for (t, p) in self.times.iter().zip(&self.points) {
            let row: Vec<String> = std::iter::once(format!("{t:?}"))
                .chain(p.coords().iter().map(|c| format!("{c:?}")))
                .collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

impl Curve for SampledCurve {
    fn eval(&self, t: f64) -> Point {
        let t = t.clamp(0.0, 1.0);
        let i = self.segment_of(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        self.points[i].lerp(&self.points[i + 1], (t - t0) / (t1 - t0))
    }
}

/// Sum of consecutive node distances.
pub fn variation(c: &SampledCurve, d: &(impl Metric<Point> + ?Sized)) -> f64 {
    c.points
        .windows(2)
        .map(|w| d.distance(&w[0], &w[1]))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub variation: f64,
    pub nodes: usize,
    pub converged: bool,
}

/// Variation on uniform grids, doubling from `n0` segments until the
/// relative change drops below `rel_tol` or `max_segments` is reached.
pub fn variation_by_refinement(
    c: &dyn Curve,
    d: &(impl Metric<Point> + ?Sized),
    n0: usize,
    rel_tol: f64,
    max_segments: usize,
) -> Refinement {
    let mut n = n0.max(1);
    let mut v = variation(&SampledCurve::from_curve(c, n), d);
    while n * 2 <= max_segments {
        n *= 2;
        let next = variation(&SampledCurve::from_curve(c, n), d);
        let change = (next - v).abs();
        v = next;
        if change <= rel_tol * v.abs() {
            return Refinement {
                variation: v,
                nodes: n + 1,
                converged: true,
            };
        }
    }
    Refinement {
        variation: v,
        nodes: n + 1,
        converged: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDerivative {
    pub t: f64,
    pub forward: Option<LimitEstimate>,
    pub backward: Option<LimitEstimate>,
    /// Average of the one-sided quotients, or the available side at an
    /// endpoint.
    pub estimate: LimitEstimate,
    pub one_sided: bool,
}

/// `lim d(c(s), c(t)) / |s − t|`, from both sides where the ladder fits in
/// `[0, 1]`. Converged one-sided limits that disagree make the estimate
/// oscillating.
pub fn metric_derivative(
    c: &dyn Curve,
    d: &(impl Metric<Point> + ?Sized),
    t: f64,
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> Result<MetricDerivative> {
    if !(0.0..=1.0).contains(&t) {
        return Err(precondition(format!("time {t} outside [0, 1]")));
    }
    let ct = c.eval(t);
    let side = |sign: f64, room: f64| -> Option<LimitEstimate> {
        let l = ladder.retain(|h| h <= room)?;
        if l.len() < 2 {
            return None;
        }
        Some(LimitEstimate::evaluate(&l, cfg, |h| {
            d.distance(&c.eval(t + sign * h), &ct) / h
        }))
    };
    let forward = side(1.0, 1.0 - t);
    let backward = side(-1.0, t);
    let (estimate, one_sided) = match (&forward, &backward) {
        (Some(f), Some(b)) => {
            let rungs: Vec<Rung> = f
                .rungs
                .iter()
                .zip(&b.rungs)
                .map(|(x, y)| Rung {
                    scale: x.scale,
                    value: 0.5 * (x.value + y.value),
                })
                .collect();
            let mut e = LimitEstimate::from_rungs(rungs, cfg);
            let lim = f.limit.abs().max(b.limit.abs());
            if f.is_converged()
                && b.is_converged()
                && (f.limit - b.limit).abs() > cfg.agreement_tol * (1.0 + lim)
            {
                e.verdict = Verdict::Oscillating;
            } else {
                e.verdict = e.verdict.worst(f.verdict).worst(b.verdict);
            }
            (e, false)
        }
        (Some(x), None) | (None, Some(x)) => (x.clone(), true),
        (None, None) => return Err(precondition("ladder does not fit around t")),
    };
    Ok(MetricDerivative {
        t,
        forward,
        backward,
        estimate,
        one_sided,
    })
}

/// Midpoint-rule integral of the metric derivative on `n` cells.
pub fn md_integral(
    c: &dyn Curve,
    d: &(impl Metric<Point> + ?Sized),
    n: usize,
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> Result<f64> {
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            // The cell width bounds the useful scales.
            let l = ladder
                .retain(|h| h <= 0.5 / n as f64)
                .filter(|l| l.len() >= 2)
                .unwrap_or_else(|| ladder.clone());
            metric_derivative(c, d, t, &l, cfg).map(|m| {
                if m.estimate.is_converged() {
                    m.estimate.limit
                } else {
                    m.estimate.last()
                }
            })
        })
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / n as f64)
}

/// Largest excess `md(c)(t) − m(t)` over the probe times, for a candidate
/// upper gradient `m`.
pub fn upper_gradient_excess(
    c: &dyn Curve,
    d: &(impl Metric<Point> + ?Sized),
    m: impl Fn(f64) -> f64,
    probes: &[f64],
    ladder: &Ladder,
    cfg: &LadderConfig,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for &t in probes {
        let md = metric_derivative(c, d, t, ladder, cfg)?;
        worst = worst.max(md.estimate.limit - m(t));
    }
    Ok(worst)
}

/// Points of the closed ball `B̄(u, r)` from a grid of `per_axis` points on
/// each axis of the enclosing cube.
pub fn ball_grid(u: &Point, r: f64, per_axis: usize, d: &(impl Metric<Point> + ?Sized)) -> Vec<Point> {
    crate::point::unit_grid(u.dim(), per_axis.max(2))
        .into_iter()
        .map(|g| u.axpy(r, &g))
        .filter(|p| d.distance(u, p) <= r)
        .collect()
}

/// `limsup_{ε→0} sup { d_Y(f v, f w) / d_X(v, w) : v ≠ w ∈ B(u, ε) }`,
/// realized as the max over the ladder tail.
pub fn upper_dilatation(
    f: &(dyn Fn(&Point) -> Point + Sync),
    dx: &(impl Metric<Point> + ?Sized),
    dy: &(impl Metric<Point> + ?Sized),
    u: &Point,
    ladder: &Ladder,
    per_axis: usize,
    cfg: &LadderConfig,
) -> LimitEstimate {
    let rungs = ladder
        .scales()
        .par_iter()
        .map(|&eps| {
            let pts = ball_grid(u, eps, per_axis, dx);
            let imgs: Vec<Point> = pts.iter().map(f).collect();
            let mut best = f64::NAN;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let dxv = dx.distance(&pts[i], &pts[j]);
                    if dxv > 0.0 {
                        let r = dy.distance(&imgs[i], &imgs[j]) / dxv;
                        best = if best.is_nan() { r } else { best.max(r) };
                    }
                }
            }
            Rung {
                scale: eps,
                value: best,
            }
        })
        .collect();
    LimitEstimate::limsup(rungs, cfg)
}

/// Retime the nodes by arc-length fraction, so the curve runs at constant
/// speed `variation(c)`. Zero-length segments are dropped; the nodes, and
/// hence the variation, are otherwise unchanged.
pub fn reparametrize(c: &SampledCurve, d: &(impl Metric<Point> + ?Sized)) -> Result<SampledCurve> {
    let mut cum = vec![0.0];
    let mut points = vec![c.points[0].clone()];
    for w in c.points.windows(2) {
        let s = d.distance(&w[0], &w[1]);
        if s > 0.0 {
            cum.push(cum.last().unwrap() + s);
            points.push(w[1].clone());
        }
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(precondition("curve has zero length"));
    }
    let n = cum.len();
    let times: Vec<f64> = cum
        .iter()
        .enumerate()
        .map(|(i, s)| if i + 1 == n { 1.0 } else { s / total })
        .collect();
    SampledCurve::new(times, points)
}

/// Polyline optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathConfig {
    /// Movable interior nodes.
    pub nodes: usize,
    pub restarts: usize,
    pub sweeps: usize,
    /// Initial search half-width, relative to `d(x, y)`.
    pub step: f64,
    /// Per-sweep shrink of the search half-width.
    pub shrink: f64,
    pub golden_iters: usize,
    /// Domain-predicate samples per segment.
    pub feasibility_samples: usize,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            nodes: 24,
            restarts: 16,
            sweeps: 80,
            step: 0.25,
            shrink: 0.93,
            golden_iters: 24,
            feasibility_samples: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    /// Variation of the best polyline: an upper bound on `d_l(x, y)`.
    pub length: f64,
    pub path: Vec<Point>,
    pub restart: usize,
    pub feasible_restarts: usize,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimize `f` on `[a, b]`, assuming rough unimodality.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Orthonormal frame whose first vector is along `t` (coordinate axes if
/// `t` vanishes).
fn local_frame(t: &Point) -> Vec<Point> {
    let k = t.dim();
    let mut frame: Vec<Point> = Vec::with_capacity(k);
    let norm = crate::point::Norm::L2.of(t.coords());
    let mut candidates: Vec<Point> = Vec::new();
    if norm > 0.0 {
        candidates.push(t * (1.0 / norm));
    }
    for i in 0..k {
        let mut e = Point::zeros(k);
        let mut c = e.coords().to_vec();
        c[i] = 1.0;
        e = Point::from(c);
        candidates.push(e);
    }
    for v in candidates {
        let mut w = v;
        for f in &frame {
            let dot: f64 = w.coords().iter().zip(f.coords()).map(|(a, b)| a * b).sum();
            w = w.axpy(-dot, f);
        }
        let n = crate::point::Norm::L2.of(w.coords());
        if n > 1e-9 {
            frame.push(&w * (1.0 / n));
        }
        if frame.len() == k {
            break;
        }
    }
    frame
}

struct PathProblem<'a, D: ?Sized, P: ?Sized> {
    d: &'a D,
    inside: &'a P,
    samples: usize,
}

impl<D, P> PathProblem<'_, D, P>
where
    D: Metric<Point> + ?Sized,
    P: Fn(&Point) -> bool + ?Sized,
{
    fn segment_ok(&self, a: &Point, b: &Point) -> bool {
        (0..=self.samples).all(|k| (self.inside)(&a.lerp(b, k as f64 / self.samples as f64)))
    }

    fn length(&self, path: &[Point]) -> f64 {
        path.windows(2).map(|w| self.d.distance(&w[0], &w[1])).sum()
    }

    fn feasible(&self, path: &[Point]) -> bool {
        path.windows(2).all(|w| self.segment_ok(&w[0], &w[1]))
    }

    fn local(&self, prev: &Point, p: &Point, next: &Point) -> f64 {
        if !self.segment_ok(prev, p) || !self.segment_ok(p, next) {
            return f64::INFINITY;
        }
        self.d.distance(prev, p) + self.d.distance(p, next)
    }

    fn optimize(&self, mut path: Vec<Point>, scale: f64, cfg: &PathConfig) -> Vec<Point> {
        let mut h = cfg.step * scale;
        for _ in 0..cfg.sweeps {
            for i in 1..path.len() - 1 {
                let tangent = &path[i + 1] - &path[i - 1];
                for e in local_frame(&tangent) {
                    let (prev, next) = (&path[i - 1], &path[i + 1]);
                    let here = self.local(prev, &path[i], next);
                    let (s, v) = golden_section(
                        |s| self.local(prev, &path[i].axpy(s, &e), next),
                        -h,
                        h,
                        cfg.golden_iters,
                    );
                    if v < here {
                        path[i] = path[i].axpy(s, &e);
                    }
                }
            }
            h *= cfg.shrink;
        }
        path
    }
}

/// Distribute `nodes` interior points along the polyline `x → via → y`,
/// proportionally to coordinate length.
fn initial_path(x: &Point, via: Option<&Point>, y: &Point, nodes: usize) -> Vec<Point> {
    let total = nodes + 2;
    let mut path = Vec::with_capacity(total);
    match via {
        None => {
            for k in 0..total {
                path.push(x.lerp(y, k as f64 / (total - 1) as f64));
            }
        }
        Some(v) => {
            let l1 = crate::point::euclidean(x, v);
            let l2 = crate::point::euclidean(v, y);
            let frac = if l1 + l2 > 0.0 { l1 / (l1 + l2) } else { 0.5 };
            for k in 0..total {
                let s = k as f64 / (total - 1) as f64;
                path.push(if s <= frac {
                    x.lerp(v, if frac > 0.0 { s / frac } else { 1.0 })
                } else {
                    v.lerp(y, (s - frac) / (1.0 - frac))
                });
            }
        }
    }
    path
}

/// Upper bound on the length distance `d_l(x, y)` inside the region where
/// `inside` holds: the shortest polyline found by local-frame golden-section
/// descent over the interior nodes, from a straight start and from starts
/// through random via-points.
pub fn length_distance(
    d: &(impl Metric<Point> + ?Sized),
    inside: &(dyn Fn(&Point) -> bool + Sync),
    x: &Point,
    y: &Point,
    cfg: &PathConfig,
) -> Result<PathResult> {
    if !inside(x) || !inside(y) {
        return Err(precondition("endpoint outside the domain"));
    }
    if x == y {
        return Ok(PathResult {
            length: 0.0,
            path: vec![x.clone()],
            restart: 0,
            feasible_restarts: 1,
        });
    }
    let prob = PathProblem {
        d,
        inside,
        samples: cfg.feasibility_samples.max(1),
    };
    let scale = crate::point::euclidean(x, y);
    let mid = x.lerp(y, 0.5);
    let runs: Vec<Option<(f64, Vec<Point>)>> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let via = (r > 0).then(|| {
                let mut g = rng::stream(cfg.seed, rng::child(0x7061_7468, r as u64));
                let spread = scale * (0.5 + r as f64 / cfg.restarts.max(1) as f64);
                Point::new(mid.coords().iter().map(|c| c + g.gen_range(-spread..=spread)))
            });
            let start = initial_path(x, via.as_ref(), y, cfg.nodes);
            if !prob.feasible(&start) {
                return None;
            }
            let path = prob.optimize(start, scale, cfg);
            Some((prob.length(&path), path))
        })
        .collect();
    let feasible_restarts = runs.iter().filter(|r| r.is_some()).count();
    let best = runs
        .into_iter()
        .enumerate()
        .filter_map(|(r, run)| run.map(|(l, p)| (l, r, p)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    match best {
        Some((length, restart, path)) => Ok(PathResult {
            length,
            path,
            restart,
            feasible_restarts,
        }),
        None => Err(Error::Infeasible {
            restarts: cfg.restarts.max(1),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::euclidean;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cfg() -> LadderConfig {
        LadderConfig::default()
    }

    fn quarter_circle() -> FnCurve {
        FnCurve::new(|t| Point::from([(FRAC_PI_2 * t).cos(), (FRAC_PI_2 * t).sin()]))
    }

    #[test]
    fn segment_and_constant_variation() {
        let seg = FnCurve::new(|t| Point::from([3.0 * t, 4.0 * t]));
        for n in [1, 7, 64] {
            let v = variation(&SampledCurve::from_curve(&seg, n), &euclidean);
            assert!((v - 5.0).abs() < 1e-12);
        }
        let c = SampledCurve::from_curve(&FnCurve::new(|_| Point::from([1.0, 2.0])), 10);
        assert_eq!(variation(&c, &euclidean), 0.0);
    }

    #[test]
    fn quarter_circle_variation() {
        let c = SampledCurve::from_curve(&quarter_circle(), 4095);
        assert!((variation(&c, &euclidean) - FRAC_PI_2).abs() <= 1e-3);
        let r = variation_by_refinement(&quarter_circle(), &euclidean, 4, 1e-4, 1 << 16);
        assert!(r.converged);
        assert!((r.variation - FRAC_PI_2).abs() <= 1e-3);
    }

    #[test]
    fn metric_derivative_examples() {
        let l = Ladder::default();
        let line = FnCurve::new(|t| Point::from([t, 0.0]));
        let md = metric_derivative(&line, &euclidean, 0.5, &l, &cfg()).unwrap();
        assert!(md.estimate.converged_to(1.0, 1e-9));

        let sq = FnCurve::new(|t| Point::from([t * t, 0.0]));
        let md = metric_derivative(&sq, &euclidean, 1.0, &l, &cfg()).unwrap();
        assert!(md.one_sided);
        assert!(md.estimate.converged_to(2.0, 1e-6), "{:?}", md.estimate);

        let v = FnCurve::new(|t| Point::from([(t - 0.5).abs(), 0.0]));
        let md = metric_derivative(&v, &euclidean, 0.5, &l, &cfg()).unwrap();
        assert!(md.estimate.converged_to(1.0, 1e-12));
        assert!(md.forward.unwrap().converged_to(1.0, 1e-12));
        assert!(md.backward.unwrap().converged_to(1.0, 1e-12));
    }

    #[test]
    fn kink_in_speed_makes_one_sided_limits_disagree() {
        let c = SampledCurve::polyline(vec![
            Point::from([0.0]),
            Point::from([1.0]),
            Point::from([4.0]),
        ])
        .unwrap();
        let md = metric_derivative(&c, &euclidean, 0.5, &Ladder::dyadic(2, 20), &cfg()).unwrap();
        assert_eq!(md.estimate.verdict, Verdict::Oscillating);
    }

    #[test]
    fn upper_dilatation_examples() {
        let l = Ladder::dyadic(1, 16);
        let u = Point::from([0.3]);
        let f = |p: &Point| Point::from([p[0], 2.0 * p[0]]);
        let e = upper_dilatation(&f, &euclidean, &euclidean, &u, &l, 9, &cfg());
        assert!((e.limit - 5f64.sqrt()).abs() < 1e-9);

        let g = |_: &Point| Point::from([1.0]);
        let e = upper_dilatation(&g, &euclidean, &euclidean, &u, &l, 9, &cfg());
        assert_eq!(e.limit, 0.0);

        let h = |p: &Point| Point::from([p[0] * p[0]]);
        let e = upper_dilatation(&h, &euclidean, &euclidean, &Point::from([1.0]), &l, 9, &cfg());
        assert!((e.limit - 2.0).abs() < 1e-3, "{}", e.limit);

        let e = upper_dilatation(&h, &euclidean, &euclidean, &Point::from([1.0]), &l, 1, &cfg());
        assert!(e.limit.is_finite());
    }

    #[test]
    fn reparametrization_examples() {
        let seg = SampledCurve::from_curve(&FnCurve::new(|t| Point::from([t, 0.0])), 8);
        let r = reparametrize(&seg, &euclidean).unwrap();
        for (a, b) in r.times().iter().zip(seg.times()) {
            assert!((a - b).abs() < 1e-12);
        }

        let sq = SampledCurve::from_curve(&FnCurve::new(|t| Point::from([t * t, 0.0])), 50);
        let r = reparametrize(&sq, &euclidean).unwrap();
        assert!((variation(&r, &euclidean) - 1.0).abs() < 1e-12);
        for (t, p) in r.times().iter().zip(r.points()) {
            assert!((t - p[0]).abs() < 1e-12);
        }

        // Speeds 1 and 3 become a single constant speed 4.
        let two = SampledCurve::polyline(vec![
            Point::from([0.0]),
            Point::from([1.0]),
            Point::from([4.0]),
        ])
        .unwrap();
        let r = reparametrize(&two, &euclidean).unwrap();
        let l = Ladder::dyadic(4, 20);
        for t in [0.1, 0.25, 0.6, 0.9] {
            let md = metric_derivative(&r, &euclidean, t, &l, &cfg()).unwrap();
            assert!(md.estimate.converged_to(4.0, 1e-9), "t={t}");
        }

        let constant = SampledCurve::polyline(vec![Point::from([1.0]); 3]).unwrap();
        assert!(reparametrize(&constant, &euclidean).is_err());
    }

    #[test]
    fn md_integral_matches_variation() {
        let l = Ladder::default();
        let e = md_integral(&quarter_circle(), &euclidean, 400, &l, &cfg()).unwrap();
        assert!((e - FRAC_PI_2).abs() < 1e-3 * FRAC_PI_2);
    }

    #[test]
    fn md_is_below_an_upper_gradient() {
        let c = FnCurve::new(|t| Point::from([t * t, t]));
        let m = |t: f64| (4.0 * t * t + 1.0).sqrt() + 0.1;
        let probes = [0.2, 0.4, 0.6, 0.8];
        let ex = upper_gradient_excess(&c, &euclidean, m, &probes, &Ladder::default(), &cfg())
            .unwrap();
        assert!(ex <= 1e-9);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let c = SampledCurve::from_curve(&quarter_circle(), 5);
        let back = SampledCurve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
        assert!(SampledCurve::from_csv("t,y\n0,1\n1,2\n").is_err());
        assert!(SampledCurve::from_csv("t,x1\n0,1\n0,2\n1,3\n").is_err());
        assert!(SampledCurve::from_csv("t,x1\n0,1\n1,nan\n").is_err());
        assert!(SampledCurve::from_csv("t,x1\n0,1\n").is_err());
        assert!(SampledCurve::from_csv("").is_err());
    }

    #[test]
    fn euclidean_length_distance_is_the_chord() {
        let x = Point::from([0.0, 0.0]);
        let y = Point::from([3.0, 4.0]);
        let r = length_distance(&euclidean, &|_: &Point| true, &x, &y, &PathConfig::default()).unwrap();
        assert!((r.length - 5.0).abs() <= 0.005 * 5.0);
        let z = length_distance(&euclidean, &|_: &Point| true, &x, &x, &PathConfig::default()).unwrap();
        assert_eq!(z.length, 0.0);
    }

    #[test]
    fn infeasible_region_is_reported() {
        let x = Point::from([-2.0, 0.0]);
        let y = Point::from([2.0, 0.0]);
        let wall = |p: &Point| p[0].abs() > 0.5;
        assert!(matches!(
            length_distance(&euclidean, &wall, &x, &y, &PathConfig::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    /// Shortest path around the closed unit disk through a visibility graph
    /// on a fine polygon circumscribing the circle.
    fn visibility_oracle(x: &Point, y: &Point, n: usize) -> f64 {
        let r = 1.0 / (PI / n as f64).cos();
        let mut nodes = vec![x.clone(), y.clone()];
        for k in 0..n {
            let a = 2.0 * PI * k as f64 / n as f64;
            nodes.push(Point::from([r * a.cos(), r * a.sin()]));
        }
        let clear = |a: &Point, b: &Point| {
            let ab = b - a;
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let s = if len2 > 0.0 {
                (-(a[0] * ab[0] + a[1] * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p = a.axpy(s, &ab);
            p[0] * p[0] + p[1] * p[1] >= 1.0 - 1e-12
        };
        let m = nodes.len();
        let mut dist = vec![f64::INFINITY; m];
        let mut done = vec![false; m];
        dist[0] = 0.0;
        for _ in 0..m {
            let u = (0..m)
                .filter(|&i| !done[i])
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
                .unwrap();
            done[u] = true;
            for v in 0..m {
                if !done[v] && clear(&nodes[u], &nodes[v]) {
                    dist[v] = dist[v].min(dist[u] + euclidean(&nodes[u], &nodes[v]));
                }
            }
        }
        dist[1]
    }

    #[test]
    fn annulus_length_distance() {
        let x = Point::from([-2.0, 0.0]);
        let y = Point::from([2.0, 0.0]);
        let oracle = visibility_oracle(&x, &y, 720);
        let exact = 2.0 * 3f64.sqrt() + PI / 3.0;
        assert!((oracle - exact).abs() < 1e-3);
        let outside = |p: &Point| p[0] * p[0] + p[1] * p[1] >= 1.0;
        let r = length_distance(&euclidean, &outside, &x, &y, &PathConfig::default()).unwrap();
        assert!((r.length - oracle).abs() <= 0.01 * oracle, "{} vs {}", r.length, oracle);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reparametrization_preserves_variation(seed in 0u64..1000, n in 2usize..40) {
            let mut g = rng::stream(seed, 5);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::from([g.gen_range(-2.0..2.0), g.gen_range(-2.0..2.0)]))
                .collect();
            let c = SampledCurve::polyline(pts).unwrap();
            let v = variation(&c, &euclidean);
            let r = reparametrize(&c, &euclidean).unwrap();
            prop_assert!((variation(&r, &euclidean) - v).abs() <= 1e-12 * v);
        }

        #[test]
        fn variation_is_additive_under_concatenation(seed in 0u64..1000) {
            let mut g = rng::stream(seed, 6);
            let mut p = || Point::from([g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0)]);
            let (a0, a1, m, b1) = (p(), p(), p(), p());
            let a = SampledCurve::polyline(vec![a0, a1, m.clone()]).unwrap();
            let b = SampledCurve::polyline(vec![m, b1]).unwrap();
            let ab = SampledCurve::concat(&a, &b).unwrap();
            let lhs = variation(&ab, &euclidean);
            let rhs = variation(&a, &euclidean) + variation(&b, &euclidean);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }

        #[test]
        fn refinement_never_decreases_variation(a in 0.1f64..3.0, b in -2.0f64..2.0, k in 1usize..6) {
            let c = FnCurve::new(move |t| Point::from([t, a * (b * t).sin() + t * t]));
            let mut prev = 0.0;
            for j in 0..k {
                let n = 3 << j;
                let s = SampledCurve::from_curve(&c, n);
                let v = variation(&s, &euclidean);
                prop_assert!(v >= prev - 1e-12);
                let max_step = s.points().windows(2).map(|w| euclidean(&w[0], &w[1])).fold(0.0, f64::max);
                prop_assert!(v <= n as f64 * max_step + 1e-12);
                prev = v;
            }
        }
    }
}
