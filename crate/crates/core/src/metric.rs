//! Finite metric samples, metric-axiom verification and μ-dense nets.

use crate::error::{precondition, Error, Result};
use crate::point::Point;
use crate::tolerances as tol;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::sync::Arc;

/// A distance function on values of type `P`.
///
/// Implementations must be deterministic and side-effect free.
pub trait Metric<P: ?Sized>: Send + Sync {
    fn distance(&self, a: &P, b: &P) -> f64;
}

impl<P: ?Sized, F> Metric<P> for F
where
    F: Fn(&P, &P) -> f64 + Send + Sync,
{
    fn distance(&self, a: &P, b: &P) -> f64 {
        self(a, b)
    }
}

/// Shared, optionally rescaled distance on points.
///
/// `rescaled(λ)` evaluates `(1/λ) d`.
#[derive(Clone)]
pub struct DistanceOracle {
    inner: Arc<dyn Metric<Point>>,
    lambda: f64,
}

impl DistanceOracle {
    pub fn new(metric: impl Metric<Point> + 'static) -> Self {
        DistanceOracle {
            inner: Arc::new(metric),
            lambda: 1.0,
        }
    }

    pub fn from_arc(metric: Arc<dyn Metric<Point>>) -> Self {
        DistanceOracle {
            inner: metric,
            lambda: 1.0,
        }
    }

    pub fn euclidean() -> Self {
        DistanceOracle::new(crate::point::euclidean)
    }

    pub fn rescaled(&self, lambda: f64) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "scale must be positive");
        DistanceOracle {
            inner: Arc::clone(&self.inner),
            lambda: self.lambda * lambda,
        }
    }

    pub fn scale(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, a: &Point, b: &Point) -> f64 {
        let d = self.inner.distance(a, b);
        if self.lambda == 1.0 {
            d
        } else {
            d / self.lambda
        }
    }
}

impl Metric<Point> for DistanceOracle {
    fn distance(&self, a: &Point, b: &Point) -> f64 {
        self.eval(a, b)
    }
}

impl std::fmt::Debug for DistanceOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistanceOracle")
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

/// A finite (optionally pointed) sample with its cached distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteSample {
    n: usize,
    matrix: Vec<f64>,
    base: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<Point>>,
}

impl FiniteSample {
    /// Evaluate `metric` on every ordered pair once and cache the result.
    pub fn from_points<P: Sync>(points: &[P], metric: &(impl Metric<P> + ?Sized)) -> Self {
        let n = points.len();
        let matrix: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                metric.distance(&points[i], &points[j])
            })
            .collect();
        FiniteSample {
            n,
            matrix,
            base: None,
            points: None,
        }
    }

    /// Like [`FiniteSample::from_points`], keeping the coordinates.
    pub fn with_points(points: Vec<Point>, metric: &(impl Metric<Point> + ?Sized)) -> Self {
        let mut s = Self::from_points(&points, metric);
        s.points = Some(points);
        s
    }

    /// Build from a row-major `n × n` matrix.
    pub fn from_matrix(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Malformed(format!(
                "expected {} entries for n = {n}, found {}",
                n * n,
                matrix.len()
            )));
        }
        Ok(FiniteSample {
            n,
            matrix,
            base: None,
            points: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Malformed(format!("row {r} does not have {n} entries")));
        }
        Self::from_matrix(n, rows.concat())
    }

    pub fn with_base(mut self, base: usize) -> Result<Self> {
        if base >= self.n {
            return Err(precondition(format!(
                "base index {base} out of range for {} points",
                self.n
            )));
        }
        self.base = Some(base);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn base(&self) -> Option<usize> {
        self.base
    }

    pub fn points(&self) -> Option<&[Point]> {
        self.points.as_deref()
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.n..(i + 1) * self.n]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn diameter(&self) -> f64 {
        self.matrix.iter().copied().fold(0.0, f64::max)
    }

    /// Sub-sample on `indices`, in that order. The base is kept if selected.
    pub fn subsample(&self, indices: &[usize]) -> FiniteSample {
        let m = indices.len();
        let mut matrix = Vec::with_capacity(m * m);
        for &i in indices {
            for &j in indices {
                matrix.push(self.d(i, j));
            }
        }
        let base = self
            .base
            .and_then(|b| indices.iter().position(|&i| i == b));
        let points = self
            .points
            .as_ref()
            .map(|p| indices.iter().map(|&i| p[i].clone()).collect());
        FiniteSample {
            n: m,
            matrix,
            base,
            points,
        }
    }

    /// Same sample with every distance multiplied by `s`.
    pub fn scaled(&self, s: f64) -> FiniteSample {
        FiniteSample {
            matrix: self.matrix.iter().map(|d| d * s).collect(),
            ..self.clone()
        }
    }

    /// Apply the permutation `perm` (new index `k` holds old point `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> FiniteSample {
        assert_eq!(perm.len(), self.n);
        self.subsample(perm)
    }

    fn check_finite(&self) -> Result<()> {
        match self.matrix.iter().position(|d| !d.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.n,
                col: k % self.n,
            }),
            None => Ok(()),
        }
    }

    /// Serialize in the matrix text format: `n`, then `n` rows, then an
    /// optional `base <index>` line. `comment`, when given, is written as a
    /// leading `# ...` line.
    pub fn to_matrix_text(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.n);
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|d| format!("{d:?}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        if let Some(b) = self.base {
            let _ = writeln!(out, "base {b}");
        }
        out
    }

    /// Parse the matrix text format. Blank lines and `#` comment lines are
    /// ignored.
    pub fn parse_matrix_text(text: &str) -> Result<FiniteSample> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line_no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing point count".into(),
        })?;
        let n: usize = header.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("expected a point count, found `{header}`"),
        })?;
        // Guard against absurd headers before allocating.
        if n > 1 << 14 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("point count {n} is too large"),
            });
        }
        let mut matrix = Vec::with_capacity(n * n);
        for row in 0..n {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: line_no + row + 1,
                msg: format!("expected {n} rows, found {row}"),
            })?;
            let mut count = 0;
            for tok in l.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: ln,
                    msg: format!("not a number: `{tok}`"),
                })?;
                matrix.push(v);
                count += 1;
            }
            if count != n {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("row has {count} entries, expected {n}"),
                });
            }
        }
        let mut sample = FiniteSample::from_matrix(n, matrix)?;
        if let Some((ln, l)) = lines.next() {
            let idx = l
                .strip_prefix("base")
                .map(str::trim)
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or(Error::Parse {
                    line: ln,
                    msg: format!("expected `base <index>`, found `{l}`"),
                })?;
            sample = sample.with_base(idx).map_err(|_| Error::Parse {
                line: ln,
                msg: format!("base index {idx} out of range"),
            })?;
            if let Some((ln, l)) = lines.next() {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("trailing content `{l}`"),
                });
            }
        }
        Ok(sample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    Identity,
    Symmetry,
    Triangle,
}

/// One violated constraint.
///
/// Identity: `(i, j)` with `i == j` and `d(i,i) ≠ 0`, or `i ≠ j` with
/// `d(i,j) ≤ tol` (or negative). Symmetry: `(i, j)`. Triangle: `(i, j, k)`
/// with `d(i,k) > d(i,j) + d(j,k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub axiom: Axiom,
    pub indices: Vec<usize>,
    /// Amount of violation; for an off-diagonal identity violation, the
    /// offending distance itself.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub pass: bool,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub tol: f64,
    pub witness_cap: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: tol::EXACT,
            witness_cap: tol::WITNESS_CAP,
        }
    }
}

/// Check identity, symmetry and the triangle inequality on every pair and
/// triple of the sample.
pub fn verify_metric(sample: &FiniteSample, opts: &VerifyOptions) -> Result<MetricReport> {
    if sample.is_empty() {
        return Err(precondition("sample is empty"));
    }
    if !(opts.tol >= 0.0) {
        return Err(precondition("tolerance must be nonnegative"));
    }
    sample.check_finite()?;
    let n = sample.len();
    let t = opts.tol;

    let mut found: Vec<Witness> = Vec::new();
    for i in 0..n {
        let dii = sample.d(i, i);
        if dii.abs() > t {
            found.push(Witness {
                axiom: Axiom::Identity,
                indices: vec![i, i],
                slack: dii.abs(),
            });
        }
        for j in 0..n {
            if i != j && sample.d(i, j) <= t {
                found.push(Witness {
                    axiom: Axiom::Identity,
                    indices: vec![i, j],
                    slack: sample.d(i, j),
                });
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = (sample.d(i, j) - sample.d(j, i)).abs();
            if s > t {
                found.push(Witness {
                    axiom: Axiom::Symmetry,
                    indices: vec![i, j],
                    slack: s,
                });
            }
        }
    }

    // Triangle over ordered triples; per-row results are collected in index
    // order so the report does not depend on scheduling.
    let triangle: Vec<Vec<Witness>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for k in 0..n {
                if k == i {
                    continue;
                }
                let dik = sample.d(i, k);
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let s = dik - sample.d(i, j) - sample.d(j, k);
                    if s > t {
                        out.push(Witness {
                            axiom: Axiom::Triangle,
                            indices: vec![i, j, k],
                            slack: s,
                        });
                    }
                }
            }
            out
        })
        .collect();
    found.extend(triangle.into_iter().flatten());

    let violations = found.len();
    found.truncate(opts.witness_cap);
    Ok(MetricReport {
        pass: violations == 0,
        violations,
        witnesses: found,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseReport {
    pub dense: bool,
    /// Sample index realizing the covering radius.
    pub worst: usize,
    pub radius: f64,
}

/// Covering radius of `candidate` in `sample`, with the point realizing it
/// (first index on ties).
pub fn covering_radius(sample: &FiniteSample, candidate: &[usize]) -> (usize, f64) {
    let mut worst = (0, f64::NEG_INFINITY);
    for p in 0..sample.len() {
        let r = candidate
            .iter()
            .map(|&c| sample.d(p, c))
            .fold(f64::INFINITY, f64::min);
        if r > worst.1 {
            worst = (p, r);
        }
    }
    worst
}

/// Is `candidate` μ-dense in the sample: every point within `mu` of it.
pub fn mu_dense_net(sample: &FiniteSample, candidate: &[usize], mu: f64) -> Result<DenseReport> {
    if candidate.is_empty() {
        return Err(precondition("candidate set is empty"));
    }
    if !(mu > 0.0) {
        return Err(precondition("mu must be positive"));
    }
    if let Some(&c) = candidate.iter().find(|&&c| c >= sample.len()) {
        return Err(precondition(format!("candidate index {c} out of range")));
    }
    let (worst, radius) = covering_radius(sample, candidate);
    Ok(DenseReport {
        dense: radius <= mu,
        worst,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn line_grid() -> FiniteSample {
        let pts: Vec<Point> = (0..=10).map(|i| Point::from([i as f64 / 10.0])).collect();
        FiniteSample::with_points(pts, &crate::point::euclidean)
    }

    fn random_plane(n: usize, seed: u64) -> FiniteSample {
        let mut rng = crate::rng::stream(seed, 0);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::from([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect();
        FiniteSample::with_points(pts, &crate::point::euclidean)
    }

    #[test]
    fn euclidean_points_pass() {
        let r = verify_metric(&random_plane(5, 3), &VerifyOptions::default()).unwrap();
        assert!(r.pass);
        assert!(r.witnesses.is_empty());
    }

    #[test]
    fn zero_distance_between_distinct_points_is_an_identity_violation() {
        let s = FiniteSample::from_rows(&[
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let r = verify_metric(&s, &VerifyOptions::default()).unwrap();
        assert!(!r.pass);
        assert_eq!(r.witnesses[0].axiom, Axiom::Identity);
        assert_eq!(r.witnesses[0].indices, vec![0, 1]);
    }

    #[test]
    fn triangle_violation_reports_slack() {
        let s = FiniteSample::from_rows(&[
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ])
        .unwrap();
        let r = verify_metric(&s, &VerifyOptions::default()).unwrap();
        assert!(!r.pass);
        let w = r
            .witnesses
            .iter()
            .find(|w| w.indices == vec![0, 1, 2])
            .unwrap();
        assert_eq!(w.axiom, Axiom::Triangle);
        assert_eq!(w.slack, 3.0);
    }

    #[test]
    fn non_finite_entry_is_named() {
        let s = FiniteSample::from_rows(&[vec![0.0, f64::NAN], vec![1.0, 0.0]]).unwrap();
        match verify_metric(&s, &VerifyOptions::default()) {
            Err(Error::NonFinite { row: 0, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn witness_cap_bounds_report() {
        let n = 12;
        let s = FiniteSample::from_matrix(n, vec![0.0; n * n]).unwrap();
        let r = verify_metric(
            &s,
            &VerifyOptions {
                tol: 1e-9,
                witness_cap: 4,
            },
        )
        .unwrap();
        assert_eq!(r.witnesses.len(), 4);
        assert_eq!(r.violations, n * (n - 1));
    }

    #[test]
    fn dense_net_examples() {
        let g = line_grid();
        let all: Vec<usize> = (0..g.len()).collect();
        assert!(mu_dense_net(&g, &all, 0.05).unwrap().dense);
        assert!(mu_dense_net(&g, &[0], 1.0).unwrap().dense);
        let r = mu_dense_net(&g, &[0], 0.5).unwrap();
        assert!(!r.dense);
        assert_eq!(r.worst, 10);
        assert_eq!(r.radius, 1.0);
        assert!(mu_dense_net(&g, &[], 0.5).is_err());
        assert!(mu_dense_net(&g, &[0], 0.0).is_err());
    }

    #[test]
    fn rescaling_is_invertible() {
        let o = DistanceOracle::euclidean();
        let a = Point::from([0.1, 0.7]);
        let b = Point::from([-2.3, 4.0]);
        let back = o.rescaled(3.7).rescaled(1.0 / 3.7);
        let d0 = o.eval(&a, &b);
        assert!((back.eval(&a, &b) - d0).abs() <= 1e-12 * d0);
    }

    #[test]
    fn matrix_text_parses_with_base_and_comments() {
        let text = "# eps=0.5 mu_net=0.1\n3\n0 1 2\n1 0 1\n2 1 0\nbase 1\n";
        let s = FiniteSample::parse_matrix_text(text).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.base(), Some(1));
        assert_eq!(s.d(0, 2), 2.0);
        assert!(FiniteSample::parse_matrix_text("2\n0 1\n1\n").is_err());
        assert!(FiniteSample::parse_matrix_text("2\n0 1\n1 0\nbase 5\n").is_err());
        assert!(FiniteSample::parse_matrix_text("").is_err());
    }

    proptest! {
        #[test]
        fn matrix_text_round_trips(seed in 0u64..1000, n in 1usize..7, base in 0usize..7) {
            let s = random_plane(n, seed);
            let s = s.with_base(base % n).unwrap();
            let back = FiniteSample::parse_matrix_text(&s.to_matrix_text(Some("x"))).unwrap();
            prop_assert_eq!(back.matrix(), s.matrix());
            prop_assert_eq!(back.base(), s.base());
        }

        #[test]
        fn verdict_is_permutation_invariant(seed in 0u64..500, corrupt in any::<bool>()) {
            let mut s = random_plane(6, seed);
            if corrupt {
                let mut m = s.matrix().to_vec();
                m[1] = 10.0;
                m[6] = 10.0;
                s = FiniteSample::from_matrix(6, m).unwrap();
            }
            let perm = [3, 0, 5, 1, 4, 2];
            let a = verify_metric(&s, &VerifyOptions::default()).unwrap();
            let b = verify_metric(&s.permuted(&perm), &VerifyOptions::default()).unwrap();
            prop_assert_eq!(a.pass, b.pass);
            prop_assert_eq!(a.violations, b.violations);
        }

        #[test]
        fn rescaling_scales_slack_and_keeps_verdict(seed in 0u64..500, lambda in 0.1f64..10.0) {
            let mut m = random_plane(5, seed).matrix().to_vec();
            m[2] += 5.0;
            m[10] += 5.0;
            let s = FiniteSample::from_matrix(5, m).unwrap();
            let opts = VerifyOptions { tol: 0.0, witness_cap: 1000 };
            let a = verify_metric(&s, &opts).unwrap();
            let b = verify_metric(&s.scaled(1.0 / lambda), &opts).unwrap();
            prop_assert_eq!(a.pass, b.pass);
            prop_assert_eq!(a.witnesses.len(), b.witnesses.len());
            for (wa, wb) in a.witnesses.iter().zip(&b.witnesses) {
                prop_assert_eq!(&wa.indices, &wb.indices);
                prop_assert!((wa.slack / lambda - wb.slack).abs() <= 1e-9 * wa.slack.abs().max(1.0));
            }
        }

        #[test]
        fn density_is_monotone_in_mu(seed in 0u64..300, mu in 0.01f64..2.0, extra in 0.0f64..1.0) {
            let s = random_plane(9, seed);
            let cand = [0, 4];
            if mu_dense_net(&s, &cand, mu).unwrap().dense {
                prop_assert!(mu_dense_net(&s, &cand, mu + extra).unwrap().dense);
            }
        }
    }
}
