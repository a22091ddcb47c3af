//! Gromov–Hausdorff distance between pointed finite samples, through
//! admissible relations.
//!
//! For a relation `ρ` containing the base pair, the admissible number is
//! the max of the covering radius of `dom ρ`, the covering radius of
//! `im ρ`, and the distortion `sup |d₂(y,y') − d₁(x,x')|` over all pairs of
//! related pairs, same-source pairs included. Without the base pair no `μ`
//! is admissible and the value is `+∞`.

use crate::error::{precondition, Error, Result};
use crate::metric::{covering_radius, FiniteSample};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use std::sync::atomic::{AtomicU64, Ordering};

/// A finite relation between two samples, as index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Correspondence(Vec<(usize, usize)>);

impl Correspondence {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(precondition("relation is empty"));
        }
        Ok(Correspondence(pairs))
    }

    pub fn identity(n: usize) -> Self {
        Correspondence((0..n).map(|i| (i, i)).collect())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Correspondence(self.0.iter().map(|&(a, b)| (b, a)).collect())
    }

    pub fn contains(&self, pair: (usize, usize)) -> bool {
        self.0.contains(&pair)
    }
}

fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakdown {
    pub domain_radius: f64,
    pub image_radius: f64,
    pub distortion: f64,
    pub base_pair: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Heuristic,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "exact" => Some(Mode::Exact),
            "heuristic" => Some(Mode::Heuristic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhResult {
    /// `+∞` serializes as the string `"inf"`.
    #[serde(serialize_with = "serialize_extended")]
    pub mu: f64,
    pub relation: Correspondence,
    pub breakdown: Breakdown,
    /// Set when `mu` is only an upper bound on the distance.
    pub upper_bound: bool,
    /// A certified lower bound on the distance.
    pub lower_bound: f64,
}

fn check_pointed(s: &FiniteSample, name: &str) -> Result<usize> {
    if s.is_empty() {
        return Err(precondition(format!("sample {name} is empty")));
    }
    s.base()
        .ok_or_else(|| precondition(format!("sample {name} has no base point")))
}

fn distortion(rho: &[(usize, usize)], s1: &FiniteSample, s2: &FiniteSample) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &(x, y)) in rho.iter().enumerate() {
        for &(x2, y2) in &rho[k + 1..] {
            worst = worst.max((s2.d(y, y2) - s1.d(x, x2)).abs());
        }
    }
    worst
}

fn sorted_unique(it: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = it.collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Evaluate the admissible number of `rho`.
pub fn admissibility(
    rho: &Correspondence,
    s1: &FiniteSample,
    s2: &FiniteSample,
) -> Result<GhResult> {
    let b1 = check_pointed(s1, "a")?;
    let b2 = check_pointed(s2, "b")?;
    if let Some(&(x, y)) = rho
        .pairs()
        .iter()
        .find(|&&(x, y)| x >= s1.len() || y >= s2.len())
    {
        return Err(Error::Malformed(format!("pair ({x}, {y}) out of range")));
    }
    let dom = sorted_unique(rho.pairs().iter().map(|p| p.0));
    let im = sorted_unique(rho.pairs().iter().map(|p| p.1));
    let breakdown = Breakdown {
        domain_radius: covering_radius(s1, &dom).1,
        image_radius: covering_radius(s2, &im).1,
        distortion: distortion(rho.pairs(), s1, s2),
        base_pair: rho.contains((b1, b2)),
    };
    let mu = if breakdown.base_pair {
        breakdown
            .domain_radius
            .max(breakdown.image_radius)
            .max(breakdown.distortion)
    } else {
        f64::INFINITY
    };
    Ok(GhResult {
        mu,
        relation: rho.clone(),
        breakdown,
        upper_bound: false,
        lower_bound: lower_bound(s1, s2)?,
    })
}

/// `max(H/2, |diam₁ − diam₂|/3)`, where `H` is the Hausdorff distance
/// between the sets of distances to the base points.
///
/// Any admissible relation relates some `x` within `μ` of a given `x'` to a
/// `y` with `|d₂(b₂,y) − d₁(b₁,x)| ≤ μ`, which gives the first term; the
/// second follows by pulling a diametral pair through the relation.
pub fn lower_bound(s1: &FiniteSample, s2: &FiniteSample) -> Result<f64> {
    let b1 = check_pointed(s1, "a")?;
    let b2 = check_pointed(s2, "b")?;
    let r1 = s1.row(b1);
    let r2 = s2.row(b2);
    let directed = |a: &[f64], b: &[f64]| {
        a.iter()
            .map(|x| b.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let h = directed(r1, r2).max(directed(r2, r1));
    Ok((h / 2.0).max((s1.diameter() - s2.diameter()).abs() / 3.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhConfig {
    pub mode: Mode,
    /// Exact mode refuses when `|s1|·|s2|` exceeds this.
    pub exact_cap: usize,
    pub steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Candidate images per move, drawn from the nearest neighbours of the
    /// current image.
    pub neighbours: usize,
    pub anchors: usize,
}

impl Default for GhConfig {
    fn default() -> Self {
        GhConfig {
            mode: Mode::Heuristic,
            exact_cap: 16,
            steps: 10_000,
            t_start: 1.0,
            t_end: 1e-3,
            seed: 0,
            neighbours: 8,
            anchors: 4,
        }
    }
}

impl GhConfig {
    pub fn exact() -> Self {
        GhConfig {
            mode: Mode::Exact,
            ..Default::default()
        }
    }

    pub fn heuristic(seed: u64) -> Self {
        GhConfig {
            seed,
            ..Default::default()
        }
    }
}

pub fn gh_distance(s1: &FiniteSample, s2: &FiniteSample, cfg: &GhConfig) -> Result<GhResult> {
    check_pointed(s1, "a")?;
    check_pointed(s2, "b")?;
    match cfg.mode {
        Mode::Exact => exact(s1, s2, cfg.exact_cap),
        Mode::Heuristic => heuristic(s1, s2, cfg),
    }
}

/// Branch-and-bound over all relations containing the base pair.
///
/// Partial distortion only grows as pairs are added, so a branch is cut
/// once it exceeds the best value found; cuts are strict, so every
/// minimizer is reached and the reported witness (smallest inclusion mask)
/// does not depend on scheduling.
fn exact(s1: &FiniteSample, s2: &FiniteSample, cap: usize) -> Result<GhResult> {
    let (n1, n2) = (s1.len(), s2.len());
    let size = n1 * n2;
    if size > cap || size > 63 {
        return Err(Error::Capacity { size, cap });
    }
    let base = (s1.base().unwrap(), s2.base().unwrap());
    let free: Vec<(usize, usize)> = (0..n1)
        .flat_map(|x| (0..n2).map(move |y| (x, y)))
        .filter(|&p| p != base)
        .collect();

    let best = AtomicU64::new(f64::INFINITY.to_bits());
    let split = free.len().min(4);
    let search = Search {
        s1,
        s2,
        free: &free,
        best: &best,
    };
    let winners: Vec<(f64, u64)> = (0u64..1 << split)
        .into_par_iter()
        .filter_map(|prefix| {
            let mut chosen = vec![base];
            let mut dist = 0.0;
            for (k, &p) in free[..split].iter().enumerate() {
                if prefix >> k & 1 == 1 {
                    dist = extend(s1, s2, &chosen, p, dist);
                    chosen.push(p);
                }
            }
            let mut out = None;
            search.dfs(split, prefix, &mut chosen, dist, &mut out);
            out
        })
        .collect();
    let (_, mask) = winners
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("the base pair alone is a relation");
    let mut pairs = vec![base];
    pairs.extend(
        free.iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &p)| p),
    );
    let mut r = admissibility(&Correspondence(pairs), s1, s2)?;
    r.upper_bound = false;
    Ok(r)
}

/// Distortion after adding `p` to `chosen` (whose distortion is `dist`).
fn extend(
    s1: &FiniteSample,
    s2: &FiniteSample,
    chosen: &[(usize, usize)],
    p: (usize, usize),
    dist: f64,
) -> f64 {
    chosen.iter().fold(dist, |m, &(x, y)| {
        m.max((s2.d(p.1, y) - s1.d(p.0, x)).abs())
    })
}

struct Search<'a> {
    s1: &'a FiniteSample,
    s2: &'a FiniteSample,
    free: &'a [(usize, usize)],
    best: &'a AtomicU64,
}

impl Search<'_> {
    fn dfs(
        &self,
        k: usize,
        mask: u64,
        chosen: &mut Vec<(usize, usize)>,
        dist: f64,
        out: &mut Option<(f64, u64)>,
    ) {
        if dist > f64::from_bits(self.best.load(Ordering::Relaxed)) {
            return;
        }
        if k == self.free.len() {
            let dom = sorted_unique(chosen.iter().map(|p| p.0));
            let im = sorted_unique(chosen.iter().map(|p| p.1));
            let mu = dist
                .max(covering_radius(self.s1, &dom).1)
                .max(covering_radius(self.s2, &im).1);
            if out.is_none_or(|(m, b)| mu < m || (mu == m && mask < b)) {
                *out = Some((mu, mask));
            }
            self.best.fetch_min(mu.to_bits(), Ordering::Relaxed);
            return;
        }
        // Nonnegative floats order like their bit patterns.
        let p = self.free[k];
        let d2 = extend(self.s1, self.s2, chosen, p, dist);
        chosen.push(p);
        self.dfs(k + 1, mask | 1 << k, chosen, d2, out);
        chosen.pop();
        self.dfs(k + 1, mask, chosen, dist, out);
    }
}

/// Union of the graphs of `f: s1 → s2` and `g: s2 → s1`, both fixing the
/// base points. Such a relation has full domain and image, so its
/// admissible number is its distortion.
#[derive(Debug, Clone)]
struct MapPair {
    f: Vec<usize>,
    g: Vec<usize>,
}

impl MapPair {
    fn pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<(usize, usize)> = self.f.iter().enumerate().map(|(x, &y)| (x, y)).collect();
        p.extend(self.g.iter().enumerate().map(|(y, &x)| (x, y)));
        p
    }
}

fn anchors(s: &FiniteSample, base: usize, k: usize) -> Vec<usize> {
    let mut out = vec![base];
    let mut near: Vec<f64> = s.row(base).to_vec();
    while out.len() < k.min(s.len()) {
        let (i, r) = near
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &r)| {
                if r > acc.1 + 1e-9 {
                    (i, r)
                } else {
                    acc
                }
            });
        if r <= 0.0 {
            break;
        }
        out.push(i);
        for (j, m) in near.iter_mut().enumerate() {
            *m = m.min(s.d(i, j));
        }
    }
    out
}

/// `d(y, anchor_k)` for every `y`, stored contiguously per `y`.
fn anchor_table(s: &FiniteSample, anchors: &[usize]) -> Vec<f64> {
    (0..s.len())
        .flat_map(|y| anchors.iter().map(move |&b| s.d(y, b)))
        .collect()
}

/// Map every point of `from` to the point of `to` whose distances to the
/// anchor images best match its distances to the anchors, scoring the
/// per-anchor mismatches with `score` (max or sum of squares).
fn trilaterate_by(
    from: &FiniteSample,
    to: &FiniteSample,
    anchor_from: &[usize],
    anchor_to: &[usize],
    squares: bool,
) -> Vec<usize> {
    let k = anchor_to.len();
    let table = anchor_table(to, anchor_to);
    (0..from.len())
        .into_par_iter()
        .map(|x| {
            let fx: Vec<f64> = anchor_from.iter().map(|&a| from.d(x, a)).collect();
            let mut best = (anchor_to[0], f64::INFINITY);
            for (y, row) in table.chunks_exact(k).enumerate() {
                let e = if squares {
                    row.iter().zip(&fx).map(|(t, f)| (f - t) * (f - t)).sum()
                } else {
                    row.iter().zip(&fx).map(|(t, f)| (f - t).abs()).fold(0.0, f64::max)
                };
                if e < best.1 {
                    best = (y, e);
                }
            }
            best.0
        })
        .collect()
}

fn trilaterate(from: &FiniteSample, to: &FiniteSample, anchor_from: &[usize], anchor_to: &[usize]) -> Vec<usize> {
    trilaterate_by(from, to, anchor_from, anchor_to, false)
}

/// Anchor hypotheses: images for the anchors of `s1`, chosen greedily
/// after fixing the image of the first non-base anchor among its best
/// matches.
fn anchor_hypotheses(s1: &FiniteSample, s2: &FiniteSample, a1: &[usize], tries: usize) -> Vec<Vec<usize>> {
    let b2 = s2.base().unwrap();
    if a1.len() < 2 {
        return vec![vec![b2]];
    }
    let mut first: Vec<(f64, usize)> = (0..s2.len())
        .map(|y| ((s2.d(b2, y) - s1.d(a1[0], a1[1])).abs(), y))
        .collect();
    first.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    first
        .iter()
        .take(tries)
        .map(|&(_, y1)| {
            let mut img = vec![b2, y1];
            for &a in &a1[2..] {
                let mut best = (b2, f64::INFINITY);
                for y in 0..s2.len() {
                    let e = a1
                        .iter()
                        .zip(&img)
                        .map(|(&p, &q)| (s1.d(a, p) - s2.d(y, q)).abs())
                        .fold(0.0, f64::max);
                    if e < best.1 {
                        best = (y, e);
                    }
                }
                img.push(best.0);
            }
            img
        })
        .collect()
}

fn initial_candidates(s1: &FiniteSample, s2: &FiniteSample, cfg: &GhConfig) -> Vec<MapPair> {
    let (b1, b2) = (s1.base().unwrap(), s2.base().unwrap());
    let a1 = anchors(s1, b1, cfg.anchors);
    let mut out = Vec::new();
    if s1.len() == s2.len() && b1 == b2 {
        out.push(MapPair {
            f: (0..s1.len()).collect(),
            g: (0..s2.len()).collect(),
        });
    }
    for img in anchor_hypotheses(s1, s2, &a1, 8) {
        let mut f = trilaterate(s1, s2, &a1, &img);
        let mut g = trilaterate(s2, s1, &img, &a1);
        f[b1] = b2;
        g[b2] = b1;
        out.push(MapPair { f, g });
    }
    out
}

/// Soft-max surrogate `Σ (|Δ|/D)^8` of the distortion over pairs of related
/// pairs, maintained in O(m) per move.
struct Surrogate<'a> {
    s1: &'a FiniteSample,
    s2: &'a FiniteSample,
    pairs: Vec<(usize, usize)>,
    scale: f64,
    total: f64,
}

impl<'a> Surrogate<'a> {
    fn new(s1: &'a FiniteSample, s2: &'a FiniteSample, pairs: Vec<(usize, usize)>) -> Self {
        let scale = s1.diameter().max(s2.diameter()).max(f64::MIN_POSITIVE);
        let mut s = Surrogate {
            s1,
            s2,
            pairs,
            scale,
            total: 0.0,
        };
        s.total = s.recompute();
        s
    }

    fn term(&self, p: (usize, usize), q: (usize, usize)) -> f64 {
        let r = (self.s2.d(p.1, q.1) - self.s1.d(p.0, q.0)).abs() / self.scale;
        let r2 = r * r;
        let r4 = r2 * r2;
        r4 * r4
    }

    fn recompute(&self) -> f64 {
        let mut t = 0.0;
        for (k, &p) in self.pairs.iter().enumerate() {
            for &q in &self.pairs[k + 1..] {
                t += self.term(p, q);
            }
        }
        t
    }

    fn contribution(&self, slot: usize, p: (usize, usize)) -> f64 {
        self.pairs
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != slot)
            .map(|(_, &q)| self.term(p, q))
            .sum()
    }

    fn energy(&self) -> f64 {
        self.total.max(0.0).powf(0.125) * self.scale
    }
}

fn nearest(s: &FiniteSample, k: usize) -> Vec<Vec<usize>> {
    (0..s.len())
        .into_par_iter()
        .map(|i| {
            let mut v: Vec<usize> = (0..s.len()).filter(|&j| j != i).collect();
            let by = |a: &usize, b: &usize| s.d(i, *a).total_cmp(&s.d(i, *b)).then(a.cmp(b));
            if v.len() > k {
                v.select_nth_unstable_by(k, by);
                v.truncate(k);
            }
            v.sort_by(by);
            v
        })
        .collect()
}

fn anneal(s1: &FiniteSample, s2: &FiniteSample, start: &MapPair, cfg: &GhConfig) -> MapPair {
    let (n1, n2) = (s1.len(), s2.len());
    let (b1, b2) = (s1.base().unwrap(), s2.base().unwrap());
    let movable: Vec<usize> = (0..n1)
        .filter(|&x| x != b1)
        .chain((0..n2).filter(|&y| y != b2).map(|y| n1 + y))
        .collect();
    if movable.is_empty() || cfg.steps == 0 {
        return start.clone();
    }
    let nn1 = nearest(s1, cfg.neighbours.max(1));
    let nn2 = nearest(s2, cfg.neighbours.max(1));
    let mut rng = rng::stream(cfg.seed, 0x6768);
    let mut sur = Surrogate::new(s1, s2, start.pairs());
    let mut best = (sur.energy(), sur.pairs.clone());
    let e0 = best.0.max(f64::MIN_POSITIVE);
    let ratio = (cfg.t_end / cfg.t_start).powf(1.0 / cfg.steps.max(2) as f64);
    let mut temp = cfg.t_start * e0;

    for step in 0..cfg.steps {
        if step % 1000 == 999 {
            sur.total = sur.recompute();
        }
        let slot = movable[rng.gen_range(0..movable.len())];
        let old = sur.pairs[slot];
        let new = if slot < n1 {
            let nb = &nn2[old.1];
            if nb.is_empty() {
                continue;
            }
            (old.0, nb[rng.gen_range(0..nb.len())])
        } else {
            let nb = &nn1[old.0];
            if nb.is_empty() {
                continue;
            }
            (nb[rng.gen_range(0..nb.len())], old.1)
        };
        let before = sur.energy();
        let delta = sur.contribution(slot, new) - sur.contribution(slot, old);
        sur.total += delta;
        let after = sur.energy();
        if after <= before || rng.gen::<f64>() < ((before - after) / temp).exp() {
            sur.pairs[slot] = new;
            if after < best.0 {
                best = (after, sur.pairs.clone());
            }
        } else {
            sur.total -= delta;
        }
        temp *= ratio;
    }
    let pairs = best.1;
    MapPair {
        f: pairs[..n1].iter().map(|p| p.1).collect(),
        g: pairs[n1..].iter().map(|p| p.0).collect(),
    }
}

/// Re-trilaterate against a growing farthest-point anchor set whose images
/// come from the current maps; a round is kept only if it lowers the
/// distortion. Four anchors leave symmetric shapes ambiguous, while the
/// current map already pins down enough anchors to break the symmetry.
fn refine(s1: &FiniteSample, s2: &FiniteSample, mut cur: MapPair, mut best: f64) -> MapPair {
    let (b1, b2) = (s1.base().unwrap(), s2.base().unwrap());
    let mut k = 8;
    for _ in 0..8 {
        if k > 64 {
            break;
        }
        let a1 = anchors(s1, b1, k);
        let a2 = anchors(s2, b2, k);
        let img1: Vec<usize> = a1.iter().map(|&a| cur.f[a]).collect();
        let img2: Vec<usize> = a2.iter().map(|&a| cur.g[a]).collect();
        let mut f = trilaterate_ls(s1, s2, &a1, &img1);
        let mut g = trilaterate_ls(s2, s1, &a2, &img2);
        f[b1] = b2;
        g[b2] = b1;
        let next = MapPair { f, g };
        let d = distortion(&next.pairs(), s1, s2);
        if d < best {
            best = d;
            cur = next;
        } else {
            k *= 2;
        }
        if a1.len() < k / 2 && a2.len() < k / 2 {
            break;
        }
    }
    cur
}

/// Least-squares variant of [`trilaterate`]: single bad anchors matter less.
fn trilaterate_ls(from: &FiniteSample, to: &FiniteSample, anchor_from: &[usize], anchor_to: &[usize]) -> Vec<usize> {
    trilaterate_by(from, to, anchor_from, anchor_to, true)
}

fn heuristic(s1: &FiniteSample, s2: &FiniteSample, cfg: &GhConfig) -> Result<GhResult> {
    let candidates = initial_candidates(s1, s2, cfg);
    let scored: Vec<(f64, usize)> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| (distortion(&c.pairs(), s1, s2), i))
        .collect();
    let (d0, i0) = scored
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least one candidate");
    if d0 == 0.0 {
        let mut r = admissibility(&Correspondence(candidates[i0].pairs()), s1, s2)?;
        r.upper_bound = true;
        return Ok(r);
    }
    let start = &refine(s1, s2, candidates[i0].clone(), d0);
    let d0 = distortion(&start.pairs(), s1, s2);
    let annealed = anneal(s1, s2, start, cfg);
    let d1 = distortion(&annealed.pairs(), s1, s2);
    let chosen = if d1 < d0 { annealed } else { start.clone() };
    let mut r = admissibility(&Correspondence(chosen.pairs()), s1, s2)?;
    r.upper_bound = true;
    Ok(r)
}
