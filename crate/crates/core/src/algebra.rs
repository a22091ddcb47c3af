//! Normed groups, their invariant distances, and normed groupoids.

use crate::error::{Error, Result};
use crate::metric::{verify_metric, FiniteSample, Metric, MetricReport, VerifyOptions};
use crate::point::{Norm, Point};
use crate::tolerances as tol;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Debug;
use std::sync::Arc;

/// A group with a norm `ρ`.
pub trait NormedGroup: Send + Sync {
    type Elem: Clone + PartialEq + Debug + Send + Sync;

    fn compose(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn inverse(&self, a: &Self::Elem) -> Self::Elem;
    fn neutral(&self) -> Self::Elem;
    fn norm(&self, a: &Self::Elem) -> f64;

    /// Equality of representations. Exact unless the representation
    /// carries rounding.
    fn same(&self, a: &Self::Elem, b: &Self::Elem, _tol: f64) -> bool {
        a == b
    }
}

/// `(ℝⁿ, +)` normed by one of the coordinate norms.
#[derive(Debug, Clone, Copy)]
pub struct RealVectorGroup {
    pub dim: usize,
    pub norm: Norm,
}

impl NormedGroup for RealVectorGroup {
    type Elem = Point;

    fn compose(&self, a: &Point, b: &Point) -> Point {
        a + b
    }
    fn inverse(&self, a: &Point) -> Point {
        a.map(|c| -c)
    }
    fn neutral(&self) -> Point {
        Point::zeros(self.dim)
    }
    fn norm(&self, a: &Point) -> f64 {
        self.norm.of(a.coords())
    }
    fn same(&self, a: &Point, b: &Point, tol: f64) -> bool {
        self.norm.dist(a, b) <= tol
    }
}

/// Reduced word in a free group. Letter `k > 0` is generator `k - 1`,
/// letter `-k` its inverse. No letter is adjacent to its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Word(Vec<i32>);

impl Word {
    /// Build and reduce.
    pub fn new(letters: impl IntoIterator<Item = i32>) -> Self {
        let mut out: Vec<i32> = Vec::new();
        for l in letters {
            assert!(l != 0, "letter 0 is not a generator");
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn letters(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Free group on `rank` generators with the word-length norm.
#[derive(Debug, Clone, Copy)]
pub struct FreeGroup {
    pub rank: u32,
}

impl FreeGroup {
    pub fn generator(&self, i: u32) -> Word {
        assert!(i < self.rank);
        Word(vec![i as i32 + 1])
    }

    /// Random reduced word of at most `max_len` letters.
    pub fn random_word(&self, rng: &mut impl rand::Rng, max_len: usize) -> Word {
        let len = rng.gen_range(0..=max_len);
        let r = self.rank as i32;
        Word::new((0..len).map(|_| {
            let g = rng.gen_range(1..=r);
            if rng.gen_bool(0.5) {
                g
            } else {
                -g
            }
        }))
    }
}

impl NormedGroup for FreeGroup {
    type Elem = Word;

    fn compose(&self, a: &Word, b: &Word) -> Word {
        Word::new(a.0.iter().chain(&b.0).copied())
    }
    fn inverse(&self, a: &Word) -> Word {
        Word(a.0.iter().rev().map(|l| -l).collect())
    }
    fn neutral(&self) -> Word {
        Word(Vec::new())
    }
    fn norm(&self, a: &Word) -> f64 {
        a.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// `d_L(x,y) = ρ(x⁻¹y)` or `d_R(x,y) = ρ(xy⁻¹)`.
pub struct GroupDistance<G: NormedGroup> {
    group: Arc<G>,
    side: Side,
}

impl<G: NormedGroup> Metric<G::Elem> for GroupDistance<G> {
    fn distance(&self, x: &G::Elem, y: &G::Elem) -> f64 {
        let g = &*self.group;
        match self.side {
            Side::Left => g.norm(&g.compose(&g.inverse(x), y)),
            Side::Right => g.norm(&g.compose(x, &g.inverse(y))),
        }
    }
}

pub fn group_distance<G: NormedGroup>(group: Arc<G>, side: Side) -> GroupDistance<G> {
    GroupDistance { group, side }
}

/// Max over `(x, y, z)` of `|d_L(zx, zy) − d_L(x, y)|` (left) or
/// `|d_R(xz, yz) − d_R(x, y)|` (right).
pub fn invariance_residual<G: NormedGroup>(
    group: &Arc<G>,
    side: Side,
    triples: &[(G::Elem, G::Elem, G::Elem)],
) -> f64 {
    let d = group_distance(Arc::clone(group), side);
    triples
        .par_iter()
        .map(|(x, y, z)| {
            let (tx, ty) = match side {
                Side::Left => (group.compose(z, x), group.compose(z, y)),
                Side::Right => (group.compose(x, z), group.compose(y, z)),
            };
            (d.distance(&tx, &ty) - d.distance(x, y)).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroupLawReport {
    pub pass: bool,
    pub associativity: usize,
    pub inverse: usize,
    pub neutral: usize,
    pub norm_zero: usize,
    pub norm_symmetry: usize,
    pub subadditivity: usize,
}

/// Group laws and norm axioms on a sample of elements.
pub fn check_group_laws<G: NormedGroup>(g: &G, sample: &[G::Elem], tol: f64) -> GroupLawReport {
    let e = g.neutral();
    let mut r = GroupLawReport::default();
    if g.norm(&e).abs() > tol {
        r.norm_zero += 1;
    }
    for a in sample {
        let ai = g.inverse(a);
        if !g.same(&g.compose(a, &ai), &e, tol) || !g.same(&g.compose(&ai, a), &e, tol) {
            r.inverse += 1;
        }
        if !g.same(&g.compose(a, &e), a, tol) || !g.same(&g.compose(&e, a), a, tol) {
            r.neutral += 1;
        }
        if !g.same(a, &e, tol) && g.norm(a) <= tol {
            r.norm_zero += 1;
        }
        if (g.norm(&ai) - g.norm(a)).abs() > tol {
            r.norm_symmetry += 1;
        }
        for b in sample {
            let ab = g.compose(a, b);
            if g.norm(&ab) > g.norm(a) + g.norm(b) + tol {
                r.subadditivity += 1;
            }
            for c in sample {
                if !g.same(&g.compose(&ab, c), &g.compose(a, &g.compose(b, c)), tol) {
                    r.associativity += 1;
                }
            }
        }
    }
    r.pass = r.associativity + r.inverse + r.neutral + r.norm_zero + r.norm_symmetry + r.subadditivity
        == 0;
    r
}

/// A groupoid with a norm on arrows. Composition is partial; definedness
/// is given by [`NormedGroupoid::composable`].
pub trait NormedGroupoid: Send + Sync {
    type Arrow: Clone + PartialEq + Debug + Send + Sync;

    fn composable(&self, a: &Self::Arrow, b: &Self::Arrow) -> bool;
    /// `None` exactly when `(a, b)` is not composable.
    fn compose(&self, a: &Self::Arrow, b: &Self::Arrow) -> Option<Self::Arrow>;
    fn inverse(&self, a: &Self::Arrow) -> Self::Arrow;
    fn norm(&self, a: &Self::Arrow) -> f64;

    /// `α(a) = a⁻¹a`
    fn source(&self, a: &Self::Arrow) -> Self::Arrow {
        self.compose(&self.inverse(a), a)
            .expect("an arrow is composable with its inverse")
    }

    /// `ω(a) = aa⁻¹`
    fn target(&self, a: &Self::Arrow) -> Self::Arrow {
        self.compose(a, &self.inverse(a))
            .expect("an arrow is composable with its inverse")
    }

    fn is_object(&self, a: &Self::Arrow) -> bool {
        self.source(a) == *a
    }
}

/// The pair groupoid `X × X` over a finite sample, normed by its distance.
#[derive(Debug, Clone)]
pub struct TrivialGroupoid {
    sample: FiniteSample,
}

impl TrivialGroupoid {
    /// Refuses samples that are not metric.
    pub fn new(sample: FiniteSample, opts: &VerifyOptions) -> Result<Self> {
        let report = verify_metric(&sample, opts)?;
        if !report.pass {
            return Err(Error::NotAMetric {
                violations: report.violations,
            });
        }
        Ok(TrivialGroupoid { sample })
    }

    /// Construct without checking, so that violations can be observed on
    /// the groupoid side.
    pub fn new_unchecked(sample: FiniteSample) -> Self {
        TrivialGroupoid { sample }
    }

    pub fn sample(&self) -> &FiniteSample {
        &self.sample
    }

    pub fn arrows(&self) -> Vec<(usize, usize)> {
        let n = self.sample.len();
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).collect()
    }

    /// Max over `u, v` of `|d_{(x,x)}((u,x),(v,x)) − d(u,v)|`: the distortion
    /// of `(u,x) ↦ u` from the fiber over `(x,x)` onto the sample.
    pub fn fiber_distortion(&self, x: usize) -> f64 {
        let n = self.sample.len();
        let mut worst: f64 = 0.0;
        for u in 0..n {
            for v in 0..n {
                let g = (u, x);
                let h = (v, x);
                let gh = self.compose(&g, &self.inverse(&h)).expect("same source");
                worst = worst.max((self.norm(&gh) - self.sample.d(u, v)).abs());
            }
        }
        worst
    }
}

impl NormedGroupoid for TrivialGroupoid {
    type Arrow = (usize, usize);

    fn composable(&self, a: &(usize, usize), b: &(usize, usize)) -> bool {
        a.1 == b.0
    }
    fn compose(&self, a: &(usize, usize), b: &(usize, usize)) -> Option<(usize, usize)> {
        self.composable(a, b).then_some((a.0, b.1))
    }
    fn inverse(&self, a: &(usize, usize)) -> (usize, usize) {
        (a.1, a.0)
    }
    fn norm(&self, a: &(usize, usize)) -> f64 {
        self.sample.d(a.0, a.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberReport {
    /// Index into the sampled arrows of the object this fiber lies over.
    pub object: usize,
    pub size: usize,
    pub metric: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupoidReport {
    pub pass: bool,
    /// Arrows with `d = 0` that are not objects, or objects with `d ≠ 0`.
    pub norm_identity: usize,
    pub norm_symmetry: usize,
    pub subadditivity: usize,
    /// Failures of `abb⁻¹ = a` or `a⁻¹ab = b` on composable pairs.
    pub composition_laws: usize,
    pub composable_pairs: usize,
    /// Pairs skipped because they are not composable.
    pub skipped: usize,
    pub fibers: Vec<FiberReport>,
    /// Max of `|d_{ω(u)}(g,h) − d_{α(u)}(gu, hu)|`.
    pub right_translation_residual: f64,
}

/// Norm axioms on composable pairs, fiber metrics `d_x(g,h) = d(gh⁻¹)`,
/// and isometry of right translations, all on the given arrows.
pub fn verify_groupoid<G: NormedGroupoid>(
    g: &G,
    arrows: &[G::Arrow],
    opts: &VerifyOptions,
) -> Result<GroupoidReport> {
    let t = opts.tol;
    let mut norm_identity = 0;
    let mut norm_symmetry = 0;
    for a in arrows {
        let d = g.norm(a);
        if g.is_object(a) != (d.abs() <= t) {
            norm_identity += 1;
        }
        if (g.norm(&g.inverse(a)) - d).abs() > t {
            norm_symmetry += 1;
        }
    }

    let pair_stats: Vec<(usize, usize, usize, usize)> = arrows
        .par_iter()
        .map(|a| {
            let (mut sub, mut laws, mut ok, mut skip) = (0, 0, 0, 0);
            for b in arrows {
                let Some(ab) = g.compose(a, b) else {
                    skip += 1;
                    continue;
                };
                ok += 1;
                if g.norm(&ab) > g.norm(a) + g.norm(b) + t {
                    sub += 1;
                }
                let back = g.compose(&ab, &g.inverse(b));
                let front = g.compose(&g.inverse(a), &ab);
                if back.as_ref() != Some(a) || front.as_ref() != Some(b) {
                    laws += 1;
                }
            }
            (sub, laws, ok, skip)
        })
        .collect();
    let subadditivity = pair_stats.iter().map(|s| s.0).sum();
    let composition_laws = pair_stats.iter().map(|s| s.1).sum();
    let composable_pairs = pair_stats.iter().map(|s| s.2).sum();
    let skipped = pair_stats.iter().map(|s| s.3).sum();

    // Group arrows by source object, in order of first appearance.
    let mut objects: Vec<G::Arrow> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, a) in arrows.iter().enumerate() {
        let s = g.source(a);
        match objects.iter().position(|o| *o == s) {
            Some(k) => members[k].push(i),
            None => {
                objects.push(s);
                members.push(vec![i]);
            }
        }
    }
    let fiber_distance = |x: &G::Arrow, y: &G::Arrow| -> f64 {
        g.compose(x, &g.inverse(y))
            .map_or(f64::NAN, |xy| g.norm(&xy))
    };
    let mut fibers = Vec::with_capacity(objects.len());
    for (k, idx) in members.iter().enumerate() {
        let fiber: Vec<G::Arrow> = idx.iter().map(|&i| arrows[i].clone()).collect();
        let sample = FiniteSample::from_points(&fiber, &fiber_distance);
        let object = arrows
            .iter()
            .position(|a| *a == objects[k])
            .unwrap_or(idx[0]);
        fibers.push(FiberReport {
            object,
            size: fiber.len(),
            metric: verify_metric(&sample, opts)?,
        });
    }

    let right_translation_residual = arrows
        .par_iter()
        .map(|u| {
            let w = g.target(u);
            let fiber: Vec<&G::Arrow> = arrows.iter().filter(|a| g.source(a) == w).collect();
            let mut worst: f64 = 0.0;
            for &a in &fiber {
                for &b in &fiber {
                    let (Some(au), Some(bu)) = (g.compose(a, u), g.compose(b, u)) else {
                        continue;
                    };
                    worst = worst.max((fiber_distance(a, b) - fiber_distance(&au, &bu)).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    let pass = norm_identity == 0
        && norm_symmetry == 0
        && subadditivity == 0
        && composition_laws == 0
        && fibers.iter().all(|f| f.metric.pass)
        && right_translation_residual <= tol::ALGEBRAIC.max(t);
    Ok(GroupoidReport {
        pass,
        norm_identity,
        norm_symmetry,
        subadditivity,
        composition_laws,
        composable_pairs,
        skipped,
        fibers,
        right_translation_residual,
    })
}
