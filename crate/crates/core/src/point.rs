//! Points of the coordinate model spaces and the norms used on them.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::ops::{Add, Index, Mul, Sub};

/// A point of a finite-dimensional model space, stored by its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(SmallVec<[f64; 4]>);

impl Point {
    pub fn new(coords: impl IntoIterator<Item = f64>) -> Self {
        Point(coords.into_iter().collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Point(SmallVec::from_elem(0.0, dim))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// `self + s * v`
    pub fn axpy(&self, s: f64, v: &Point) -> Point {
        debug_assert_eq!(self.dim(), v.dim());
        Point(self.0.iter().zip(&v.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Point {
        Point(self.0.iter().map(|&c| f(c)).collect())
    }

    /// Componentwise linear interpolation, `(1-s) self + s other`.
    pub fn lerp(&self, other: &Point, s: f64) -> Point {
        Point(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(SmallVec::from_vec(v))
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Point(v.iter().copied().collect())
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &Point {
    type Output = Point;
    fn add(self, rhs: &Point) -> Point {
        Point(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Point {
    type Output = Point;
    fn sub(self, rhs: &Point) -> Point {
        Point(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }
}

/// Norms on coordinate space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    /// The l2 norm is computed as the square root of the sum of squares
    /// rather than through `hypot`, so that scaling by a power of two is exact.
    pub fn of(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|c| c.abs()).sum(),
            Norm::L2 => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, c| m.max(c.abs())),
        }
    }

    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        match self {
            Norm::L1 => a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).sum(),
            Norm::L2 => a
                .0
                .iter()
                .zip(&b.0)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::Linf => a
                .0
                .iter()
                .zip(&b.0)
                .fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    pub fn parse(s: &str) -> Option<Norm> {
        match s {
            "l1" => Some(Norm::L1),
            "l2" => Some(Norm::L2),
            "linf" => Some(Norm::Linf),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

pub fn euclidean(a: &Point, b: &Point) -> f64 {
    Norm::L2.dist(a, b)
}

/// Uniform grid of `n` points per axis on the cube `[-1, 1]^dim`.
///
/// With `n = 2^j + 1` every coordinate is dyadic, which keeps dilations by
/// powers of two exact.
pub fn unit_grid(dim: usize, n: usize) -> Vec<Point> {
    assert!(n >= 2, "grid needs at least two points per axis");
    let step = 2.0 / (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|i| -1.0 + step * i as f64).collect();
    let total = n.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = SmallVec::<[f64; 4]>::with_capacity(dim);
            for _ in 0..dim {
                c.push(axis[idx % n]);
                idx /= n;
            }
            Point(c)
        })
        .collect()
}
