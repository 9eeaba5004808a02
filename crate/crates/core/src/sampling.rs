//! Random constraint sets and query points for the invariant checks.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{center, norm};
use crate::sets::{Ball, CappedSimplex, ConvexSet, Polytope};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryKind {
    Polytope,
    Ball,
    CappedSimplex,
}

impl GeometryKind {
    pub const ALL: [GeometryKind; 3] = [Self::Polytope, Self::Ball, Self::CappedSimplex];

    pub fn name(self) -> &'static str {
        match self {
            Self::Polytope => "polytope",
            Self::Ball => "ball",
            Self::CappedSimplex => "capped-simplex",
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Unit direction, restricted to the sum-zero hull for the capped simplex.
pub fn unit_direction(set: &ConvexSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, set.dim());
        if set.is_capped_simplex() {
            v = center(&v);
        }
        let len = norm(&v);
        if len > 1e-3 {
            return v.iter().map(|x| x / len).collect();
        }
    }
}

/// Bounded polytope in 2 to 5 dimensions: a box around an off-center anchor
/// cut by up to three random halfspaces.
pub fn random_polytope(rng: &mut ChaCha8Rng) -> Result<ConvexSet> {
    let n = rng.random_range(2..=5usize);
    let extra = rng.random_range(0..=3usize);
    let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = 2 * n + extra;
    let mut a = DMatrix::zeros(m, n);
    let mut b = Vec::with_capacity(m);
    for i in 0..n {
        a[(i, i)] = 1.0;
        b.push(anchor[i] + rng.random_range(0.3..2.0));
    }
    for i in 0..n {
        a[(n + i, i)] = -1.0;
        b.push(-anchor[i] + rng.random_range(0.3..2.0));
    }
    for k in 0..extra {
        let row = gaussian(rng, n);
        let off: f64 = rng.random_range(0.3..1.5);
        let mut dot = 0.0;
        for j in 0..n {
            a[(2 * n + k, j)] = row[j];
            dot += row[j] * anchor[j];
        }
        b.push(dot + off * norm(&row));
    }
    ConvexSet::polytope(Polytope::new(a, b)?, anchor)
}

/// Ball in 2 to 5 dimensions with the anchor off center.
pub fn random_ball(rng: &mut ChaCha8Rng) -> Result<ConvexSet> {
    let n = rng.random_range(2..=5usize);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let radius = rng.random_range(0.5..3.0);
    let shift = gaussian(rng, n);
    let frac = rng.random_range(0.0..0.6) / norm(&shift).max(1e-12);
    let anchor: Vec<f64> = c.iter().zip(&shift).map(|(ci, s)| ci + frac * radius * s).collect();
    ConvexSet::ball(Ball::new(c, radius)?, anchor)
}

/// Capped simplex with 2 to 8 coordinates and caps in `(1/N, 1]`.
pub fn random_capped_simplex(rng: &mut ChaCha8Rng) -> Result<ConvexSet> {
    let n = rng.random_range(2..=8usize);
    let lo = 1.0 / n as f64 + 0.05;
    let caps: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=1.0)).collect();
    Ok(ConvexSet::capped_simplex(CappedSimplex::new(caps)?))
}

pub fn random_set(kind: GeometryKind, rng: &mut ChaCha8Rng) -> Result<ConvexSet> {
    match kind {
        GeometryKind::Polytope => random_polytope(rng),
        GeometryKind::Ball => random_ball(rng),
        GeometryKind::CappedSimplex => random_capped_simplex(rng),
    }
}

/// `u0 + f t_bar(v) v` for a random unit direction `v` and `f` drawn from
/// `fractions`: `f < 1` is interior, `f > 1` exterior. Capped-simplex points
/// lie on the sum-one hyperplane.
pub fn point_at_fraction(set: &ConvexSet, rng: &mut ChaCha8Rng, fractions: std::ops::Range<f64>) -> Vec<f64> {
    let v = unit_direction(set, rng);
    let t_bar = set.boundary_time_along(&v);
    let f = rng.random_range(fractions);
    set.ray_point(f * t_bar, &v)
}

/// Random capped-simplex instance `(u, caps)` with `N` in `2..=max_n`, caps in
/// `(1/N, 1]` and a Gaussian input of scale `spread`.
pub fn capped_instance(rng: &mut ChaCha8Rng, max_n: usize, spread: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..=max_n.max(2));
    let lo = 1.0 / n as f64 + 0.02;
    let caps: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=1.0)).collect();
    let u = gaussian(rng, n).into_iter().map(|v| spread * v).collect();
    (u, caps)
}
