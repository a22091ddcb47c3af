//! Scale ladders and limit estimation.
//!
//! Every `lim_{ε→0}` in the library is realized the same way: evaluate a
//! quantity on a decreasing ladder of scales, then classify the tail.
//! A tail counts as converged when it is flat, or when its increments decay
//! like a power law of rate at least [`LadderConfig::min_rate`] and the
//! power-law model explains the tail to within the convergence tolerance.

use crate::error::{precondition, Result};
use crate::point::Point;
use crate::tolerances as tol;
use serde::Serialize;

/// A strictly decreasing sequence of positive scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ladder {
    scales: Vec<f64>,
}

impl Ladder {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(precondition("ladder has no rungs"));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(precondition("ladder scales must be finite and positive"));
        }
        if scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(precondition("ladder scales must be strictly decreasing"));
        }
        Ok(Ladder { scales })
    }

    /// `ε_k = 2^{-k}` for `k = k_min ..= k_max`.
    pub fn dyadic(k_min: i32, k_max: i32) -> Self {
        assert!(k_min <= k_max);
        Ladder {
            scales: (k_min..=k_max).map(|k| 2f64.powi(-k)).collect(),
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn smallest(&self) -> f64 {
        *self.scales.last().expect("ladder is never empty")
    }

    /// Keep only the rungs satisfying `keep`.
    pub fn retain(&self, keep: impl Fn(f64) -> bool) -> Option<Ladder> {
        let scales: Vec<f64> = self.scales.iter().copied().filter(|&s| keep(s)).collect();
        if scales.is_empty() {
            None
        } else {
            Some(Ladder { scales })
        }
    }
}

impl Default for Ladder {
    fn default() -> Self {
        Ladder::dyadic(1, 20)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rung {
    pub scale: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Oscillating,
    Diverged,
    Inconclusive,
}

impl Verdict {
    /// Ordering used when combining verdicts: the worst one wins.
    fn severity(self) -> u8 {
        match self {
            Verdict::Converged => 0,
            Verdict::Inconclusive => 1,
            Verdict::Diverged => 2,
            Verdict::Oscillating => 3,
        }
    }

    pub fn worst(self, other: Verdict) -> Verdict {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderConfig {
    pub tail: usize,
    pub converge_tol: f64,
    pub oscillation_threshold: f64,
    pub min_rate: f64,
    pub agreement_tol: f64,
    pub constant_tol: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            tail: tol::LADDER_TAIL,
            converge_tol: tol::LADDER_CONVERGE,
            oscillation_threshold: tol::LADDER_OSCILLATION,
            min_rate: tol::LADDER_MIN_RATE,
            agreement_tol: tol::LADDER_AGREEMENT,
            constant_tol: tol::LADDER_CONSTANT,
        }
    }
}

/// Ladder of values with its extrapolated limit and verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub rungs: Vec<Rung>,
    pub limit: f64,
    /// Fitted log-log rate of the tail increments, when a fit exists.
    pub rate: Option<f64>,
    /// max − min over the ladder tail.
    pub oscillation: f64,
    pub verdict: Verdict,
}

struct PowerFit {
    rate: f64,
    limit: f64,
    detrended: f64,
}

impl LimitEstimate {
    pub fn from_rungs(rungs: Vec<Rung>, cfg: &LadderConfig) -> Self {
        let (limit, rate, oscillation, verdict) = analyse(&rungs, cfg);
        LimitEstimate {
            rungs,
            limit,
            rate,
            oscillation,
            verdict,
        }
    }

    /// Evaluate `f` at every rung of `ladder`.
    pub fn evaluate(ladder: &Ladder, cfg: &LadderConfig, f: impl Fn(f64) -> f64) -> Self {
        let rungs = ladder
            .scales()
            .iter()
            .map(|&scale| Rung {
                scale,
                value: f(scale),
            })
            .collect();
        Self::from_rungs(rungs, cfg)
    }

    /// As [`LimitEstimate::from_rungs`], but the reported limit is the
    /// maximum over the tail (a limsup).
    pub fn limsup(rungs: Vec<Rung>, cfg: &LadderConfig) -> Self {
        let mut est = Self::from_rungs(rungs, cfg);
        if let Some(max) = tail(&est.rungs, cfg.tail)
            .iter()
            .map(|r| r.value)
            .reduce(f64::max)
        {
            est.limit = max;
        }
        est
    }

    pub fn is_converged(&self) -> bool {
        self.verdict == Verdict::Converged
    }

    /// Converged, with limit within `tol` of `target`.
    pub fn converged_to(&self, target: f64, tol: f64) -> bool {
        self.is_converged() && (self.limit - target).abs() <= tol
    }

    pub fn last(&self) -> f64 {
        self.rungs.last().map_or(f64::NAN, |r| r.value)
    }

    pub fn tail_values(&self, n: usize) -> Vec<f64> {
        tail(&self.rungs, n).iter().map(|r| r.value).collect()
    }
}

fn tail(rungs: &[Rung], n: usize) -> &[Rung] {
    &rungs[rungs.len().saturating_sub(n.max(1))..]
}

fn analyse(rungs: &[Rung], cfg: &LadderConfig) -> (f64, Option<f64>, f64, Verdict) {
    if rungs.is_empty() || rungs.iter().any(|r| r.value.is_nan()) {
        return (f64::NAN, None, f64::NAN, Verdict::Inconclusive);
    }
    if rungs.iter().any(|r| r.value.is_infinite()) {
        return (f64::INFINITY, None, f64::INFINITY, Verdict::Diverged);
    }
    let t = tail(rungs, cfg.tail);
    let vals: Vec<f64> = t.iter().map(|r| r.value).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let osc = max - min;
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let last = *vals.last().unwrap();
    let scale = 1.0 + mean.abs();

    if osc <= cfg.constant_tol * scale {
        return (last, None, osc, Verdict::Converged);
    }
    if vals.len() < 3 {
        return (last, None, osc, Verdict::Inconclusive);
    }

    let fit = power_fit(t);
    // The fitted slope of an exact power law lands within rounding of it.
    let min_rate = cfg.min_rate - 1e-9;
    if osc < cfg.converge_tol * scale {
        return match fit {
            Some(f) if f.rate >= min_rate => (f.limit, Some(f.rate), osc, Verdict::Converged),
            // Systematic drift that is too slow to extrapolate.
            Some(f) => (last, Some(f.rate), osc, Verdict::Inconclusive),
            // Increments of mixed sign at this size are rounding noise.
            None => (mean, None, osc, Verdict::Converged),
        };
    }
    if let Some(f) = &fit {
        let lscale = 1.0 + f.limit.abs();
        if f.rate >= min_rate
            && f.detrended < cfg.converge_tol * lscale
            && (last - f.limit).abs() <= cfg.agreement_tol * lscale
        {
            return (f.limit, Some(f.rate), osc, Verdict::Converged);
        }
        if f.rate <= -cfg.min_rate && last.abs() > vals[0].abs() {
            return (last, Some(f.rate), osc, Verdict::Diverged);
        }
    }
    let rate = fit.map(|f| f.rate);
    if osc >= cfg.oscillation_threshold * scale {
        (last, rate, osc, Verdict::Oscillating)
    } else {
        (last, rate, osc, Verdict::Inconclusive)
    }
}

/// Fit `v = L + C ε^p` to the tail: `p` from the log-log slope of the
/// increments, then `L`, `C` by least squares with `p` fixed.
fn power_fit(t: &[Rung]) -> Option<PowerFit> {
    let incs: Vec<(f64, f64)> = t
        .windows(2)
        .map(|w| (w[0].scale, w[0].value - w[1].value))
        .collect();
    let sign = incs[0].1.signum();
    if incs.iter().any(|&(_, d)| d == 0.0 || d.signum() != sign) {
        return None;
    }
    let xs: Vec<f64> = incs.iter().map(|&(s, _)| s.ln()).collect();
    let ys: Vec<f64> = incs.iter().map(|&(_, d)| d.abs().ln()).collect();
    let rate = slope(&xs, &ys)?;

    let basis: Vec<f64> = t.iter().map(|r| r.scale.powf(rate)).collect();
    let vals: Vec<f64> = t.iter().map(|r| r.value).collect();
    let (limit, coeff) = linear_fit(&basis, &vals)?;
    let resid: Vec<f64> = vals
        .iter()
        .zip(&basis)
        .map(|(v, b)| v - (limit + coeff * b))
        .collect();
    let detrended = resid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - resid.iter().copied().fold(f64::INFINITY, f64::min);
    Some(PowerFit {
        rate,
        limit,
        detrended,
    })
}

fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let s = sxy / sxx;
    s.is_finite().then_some(s)
}

/// Least squares for `v = a + b x`.
fn linear_fit(xs: &[f64], vs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let mv = vs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 || !sxx.is_finite() {
        return None;
    }
    let sxv: f64 = xs.iter().zip(vs).map(|(x, v)| (x - mx) * (v - mv)).sum();
    let b = sxv / sxx;
    let a = mv - b * mx;
    (a.is_finite() && b.is_finite()).then_some((a, b))
}

/// Limit of a ladder of points, coordinate by coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointLimit {
    pub point: Point,
    pub coordinates: Vec<LimitEstimate>,
    pub verdict: Verdict,
}

impl PointLimit {
    pub fn from_points(scales: &[f64], points: &[Point], cfg: &LadderConfig) -> Self {
        assert_eq!(scales.len(), points.len());
        assert!(!points.is_empty());
        let dim = points[0].dim();
        let coordinates: Vec<LimitEstimate> = (0..dim)
            .map(|i| {
                let rungs = scales
                    .iter()
                    .zip(points)
                    .map(|(&scale, p)| Rung {
                        scale,
                        value: p[i],
                    })
                    .collect();
                LimitEstimate::from_rungs(rungs, cfg)
            })
            .collect();
        let verdict = coordinates
            .iter()
            .fold(Verdict::Converged, |v, c| v.worst(c.verdict));
        let point = Point::new(coordinates.iter().map(|c| c.limit));
        PointLimit {
            point,
            coordinates,
            verdict,
        }
    }

    /// Largest tail oscillation over the coordinates.
    pub fn oscillation(&self) -> f64 {
        self.coordinates
            .iter()
            .map(|c| c.oscillation)
            .fold(0.0, f64::max)
    }
}
