//! Convex-set geometry anchored at a strictly interior point.
//!
//! Every query is phrased along the ray `u0 + t * d` with `d = u - u0`, so the
//! boundary time `t_bar` is measured in units of the direction vector. With that
//! convention the gauge is exactly `1 / t_bar` and the hard radial scaling is
//! `min(1, t_bar)`.
//!
//! The capped simplex has an empty interior in `R^N`; it is handled inside the
//! affine hull `{w : 1^T w = 1}` with the uniform vector as anchor. Inputs are
//! mapped onto the hull first, so rays never leave it.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::linalg::{axpy, center, dot, norm, sub};

/// Value and gradient of a convex function `h` whose zero sublevel set is the set.
pub type LevelFn = Arc<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// Largest bracket explored before a ray is declared unbounded.
pub const RAY_BRACKET_CAP: f64 = 1e12;

const ROOT_MAX_ITERS: usize = 200;

/// `A x <= b`.
#[derive(Clone, Debug)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: Vec<f64>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(invalid("polytope needs at least one row and one column"));
        }
        if b.len() != m {
            return Err(invalid(format!("offset length {} != row count {m}", b.len())));
        }
        ensure_finite("polytope offsets", &b)?;
        for i in 0..m {
            let row = a.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("row {i} of A is not finite")));
            }
            if row.iter().all(|v| *v == 0.0) {
                return Err(invalid(format!("row {i} of A is all zero")));
            }
        }
        Ok(Self { a, b })
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n {
            return Err(invalid("box bounds differ in length"));
        }
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            b.push(hi[i]);
        }
        for i in 0..n {
            a[(n + i, i)] = -1.0;
            b.push(-lo[i]);
        }
        Self::new(a, b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.a.row(i).iter().zip(x).map(|(a, x)| a * x).sum()
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.a.row(i).iter().copied().collect()
    }
}

/// `||x - center|| <= radius`.
#[derive(Clone, Debug)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid("ball center is empty"));
        }
        ensure_finite("ball center", &center)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `{w : 1^T w = 1, 0 <= w <= caps}`.
#[derive(Clone, Debug)]
pub struct CappedSimplex {
    caps: Vec<f64>,
}

impl CappedSimplex {
    pub fn new(caps: Vec<f64>) -> Result<Self> {
        let n = caps.len();
        if n < 2 {
            return Err(invalid("capped simplex needs at least two coordinates"));
        }
        let uniform = 1.0 / n as f64;
        for (i, &c) in caps.iter().enumerate() {
            if !(c.is_finite() && c > uniform && c <= 1.0) {
                return Err(Error::InfeasibleSet(format!(
                    "cap {i} = {c} must lie in (1/N, 1] = ({uniform}, 1]"
                )));
            }
        }
        Ok(Self { caps })
    }

    pub fn uniform(n: usize, cap: f64) -> Result<Self> {
        Self::new(vec![cap; n])
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn dim(&self) -> usize {
        self.caps.len()
    }
}

/// `{x : h(x) <= 0}` for convex `h`.
#[derive(Clone)]
pub struct LevelSet {
    dim: usize,
    h: LevelFn,
}

impl LevelSet {
    pub fn new(dim: usize, h: LevelFn) -> Self {
        Self { dim, h }
    }

    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.h)(x)
    }
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSet")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum Geometry {
    Polytope(Polytope),
    Ball(Ball),
    CappedSimplex(CappedSimplex),
    LevelSet(LevelSet),
}

/// Anchored Minkowski functional at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Gauge {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Attaining face for polyhedral sets (smallest index on ties).
    pub active_face: Option<usize>,
}

/// A closed convex set together with a validated strictly interior anchor.
#[derive(Clone, Debug)]
pub struct ConvexSet {
    geometry: Geometry,
    anchor: Vec<f64>,
    /// `b - A u0` for the polyhedral variants, empty otherwise.
    offsets: Vec<f64>,
    margin: Option<f64>,
}

impl ConvexSet {
    pub fn polytope(poly: Polytope, anchor: Vec<f64>) -> Result<Self> {
        let n = poly.a.ncols();
        if anchor.len() != n {
            return Err(invalid(format!(
                "anchor has length {}, set dimension is {n}",
                anchor.len()
            )));
        }
        ensure_finite("anchor", &anchor)?;
        let mut offsets = Vec::with_capacity(poly.b.len());
        let mut margin = f64::INFINITY;
        for i in 0..poly.b.len() {
            let off = poly.b[i] - poly.row_dot(i, &anchor);
            if off <= 0.0 {
                return Err(invalid(format!(
                    "anchor is not strictly interior: constraint {i} has slack {off}"
                )));
            }
            margin = margin.min(off / norm(&poly.row(i)));
            offsets.push(off);
        }
        Ok(Self {
            geometry: Geometry::Polytope(poly),
            anchor,
            offsets,
            margin: Some(margin),
        })
    }

    pub fn ball(ball: Ball, anchor: Vec<f64>) -> Result<Self> {
        if anchor.len() != ball.center.len() {
            return Err(invalid("anchor and ball center differ in length"));
        }
        ensure_finite("anchor", &anchor)?;
        let margin = ball.radius - norm(&sub(&anchor, &ball.center));
        if margin <= 0.0 {
            return Err(invalid("anchor is not strictly inside the ball"));
        }
        Ok(Self {
            geometry: Geometry::Ball(ball),
            anchor,
            offsets: Vec::new(),
            margin: Some(margin),
        })
    }

    /// Capped simplex anchored at the uniform vector.
    pub fn capped_simplex(simplex: CappedSimplex) -> Self {
        let n = simplex.dim();
        let uniform = 1.0 / n as f64;
        let mut offsets = vec![uniform; n];
        offsets.extend(simplex.caps.iter().map(|c| c - uniform));
        // Face normals projected onto the hull all have norm sqrt(1 - 1/N).
        let tangent_norm = (1.0 - uniform).sqrt();
        let margin = offsets.iter().fold(f64::INFINITY, |m, o| m.min(*o)) / tangent_norm;
        Self {
            geometry: Geometry::CappedSimplex(simplex),
            anchor: vec![uniform; n],
            offsets,
            margin: Some(margin),
        }
    }

    pub fn level_set(level: LevelSet, anchor: Vec<f64>) -> Result<Self> {
        if anchor.len() != level.dim {
            return Err(invalid("anchor and level-set dimension differ"));
        }
        ensure_finite("anchor", &anchor)?;
        let (value, grad) = level.eval(&anchor);
        if !(value < 0.0) {
            return Err(invalid(format!("anchor is not strictly interior: h(u0) = {value}")));
        }
        ensure_finite("level-set gradient", &grad)?;
        Ok(Self {
            geometry: Geometry::LevelSet(level),
            anchor,
            offsets: Vec::new(),
            margin: None,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Radius of a ball around the anchor contained in the set (within the hull
    /// for the capped simplex). Unknown for general level sets.
    pub fn margin(&self) -> Option<f64> {
        self.margin
    }

    pub fn is_capped_simplex(&self) -> bool {
        matches!(self.geometry, Geometry::CappedSimplex(_))
    }

    pub fn caps(&self) -> Option<&[f64]> {
        match &self.geometry {
            Geometry::CappedSimplex(s) => Some(s.caps()),
            _ => None,
        }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "expected a vector of length {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        ensure_finite("input", x)
    }

    /// Ray direction `u - u0`, mapped into the hull for the capped simplex.
    pub fn direction(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        Ok(match self.geometry {
            Geometry::CappedSimplex(_) => center(u),
            _ => sub(u, &self.anchor),
        })
    }

    /// Point on the ray at time `t` for direction `d`.
    pub fn ray_point(&self, t: f64, d: &[f64]) -> Vec<f64> {
        axpy(&self.anchor, t, d)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        self.check_len(x)?;
        if let Geometry::CappedSimplex(_) = self.geometry {
            let sum: f64 = x.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Ok(false);
            }
        }
        Ok(self.within_inequalities(x, tol))
    }

    /// Membership ignoring the capped simplex's sum constraint.
    pub fn within_inequalities(&self, x: &[f64], tol: f64) -> bool {
        match &self.geometry {
            Geometry::Polytope(p) => (0..p.b.len()).all(|i| p.row_dot(i, x) <= p.b[i] + tol),
            Geometry::Ball(b) => norm(&sub(x, &b.center)) <= b.radius + tol,
            Geometry::CappedSimplex(s) => x.iter().zip(&s.caps).all(|(w, c)| -w <= tol && *w <= c + tol),
            Geometry::LevelSet(l) => l.eval(x).0 <= tol,
        }
    }

    /// Smallest constraint slack at `x`; positive means strictly inside.
    pub fn slack(&self, x: &[f64]) -> f64 {
        match &self.geometry {
            Geometry::Polytope(p) => (0..p.b.len())
                .map(|i| p.b[i] - p.row_dot(i, x))
                .fold(f64::INFINITY, f64::min),
            Geometry::Ball(b) => b.radius - norm(&sub(x, &b.center)),
            Geometry::CappedSimplex(s) => x
                .iter()
                .zip(&s.caps)
                .map(|(w, c)| w.min(c - w))
                .fold(f64::INFINITY, f64::min),
            Geometry::LevelSet(l) => -l.eval(x).0,
        }
    }

    /// `(a_i^T d, b_i - a_i^T u0)` for every face of a polyhedral set.
    fn face_terms(&self, d: &[f64]) -> Option<Vec<(f64, f64)>> {
        match &self.geometry {
            Geometry::Polytope(p) => Some((0..p.b.len()).map(|i| (p.row_dot(i, d), self.offsets[i])).collect()),
            Geometry::CappedSimplex(s) => {
                let n = s.dim();
                let mut terms = Vec::with_capacity(2 * n);
                terms.extend(d.iter().zip(&self.offsets[..n]).map(|(di, o)| (-di, *o)));
                terms.extend(d.iter().zip(&self.offsets[n..]).map(|(di, o)| (*di, *o)));
                Some(terms)
            }
            _ => None,
        }
    }

    /// Ambient normal of polyhedral face `i`.
    fn face_normal(&self, i: usize) -> Vec<f64> {
        match &self.geometry {
            Geometry::Polytope(p) => p.row(i),
            Geometry::CappedSimplex(s) => {
                let n = s.dim();
                let mut a = vec![0.0; n];
                if i < n {
                    a[i] = -1.0;
                } else {
                    a[i - n] = 1.0;
                }
                a
            }
            _ => unreachable!("face_normal on a non-polyhedral set"),
        }
    }

    /// `sup {t >= 0 : u0 + t (u - u0) in C}`; infinite for unbounded rays and
    /// for `u = u0`.
    pub fn ray_boundary_time(&self, u: &[f64]) -> Result<f64> {
        let d = self.direction(u)?;
        Ok(self.boundary_time_along(&d))
    }

    /// Boundary time along an explicit direction (already in the hull for the
    /// capped simplex).
    pub fn boundary_time_along(&self, d: &[f64]) -> f64 {
        if d.iter().all(|v| *v == 0.0) {
            return f64::INFINITY;
        }
        if let Some(terms) = self.face_terms(d) {
            return terms
                .iter()
                .filter(|(ad, _)| *ad > 0.0)
                .map(|(ad, off)| off / ad)
                .fold(f64::INFINITY, f64::min);
        }
        match &self.geometry {
            Geometry::Ball(b) => {
                let w = sub(&self.anchor, &b.center);
                let qa = dot(d, d);
                let qb = 2.0 * dot(d, &w);
                let qc = dot(&w, &w) - b.radius * b.radius;
                // qc < 0, so the roots have opposite signs; pick the positive one
                // with the cancellation-free form.
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
                if qb > 0.0 {
                    let q = -0.5 * (qb + disc);
                    qc / q
                } else {
                    let q = -0.5 * (qb - disc);
                    q / qa
                }
            }
            Geometry::LevelSet(l) => level_set_root(l, &self.anchor, d),
            Geometry::Polytope(_) | Geometry::CappedSimplex(_) => unreachable!(),
        }
    }

    /// Gauge value `1 / t_bar` and its gradient at `u != u0`.
    pub fn gauge_and_gradient(&self, u: &[f64]) -> Result<Gauge> {
        let d = self.direction(u)?;
        if d.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateRay);
        }
        Ok(self.gauge_along(&d))
    }

    pub(crate) fn gauge_along(&self, d: &[f64]) -> Gauge {
        let n = d.len();
        if let Some(terms) = self.face_terms(d) {
            let mut best = 0.0;
            let mut face = None;
            for (i, (ad, off)) in terms.iter().enumerate() {
                let ratio = ad / off;
                if ratio > best {
                    best = ratio;
                    face = Some(i);
                }
            }
            let gradient = match face {
                Some(j) => {
                    let off = self.offsets[j];
                    self.face_normal(j).into_iter().map(|a| a / off).collect()
                }
                None => vec![0.0; n],
            };
            return Gauge {
                value: best,
                gradient,
                active_face: face,
            };
        }
        if let Geometry::Ball(b) = &self.geometry {
            if b.center == self.anchor {
                let len = norm(d);
                return Gauge {
                    value: len / b.radius,
                    gradient: d.iter().map(|v| v / (b.radius * len)).collect(),
                    active_face: None,
                };
            }
        }
        let t_bar = self.boundary_time_along(d);
        if !t_bar.is_finite() {
            return Gauge {
                value: 0.0,
                gradient: vec![0.0; n],
                active_face: None,
            };
        }
        let z = self.ray_point(t_bar, d);
        let grad_h = match &self.geometry {
            Geometry::Ball(b) => sub(&z, &b.center).into_iter().map(|v| 2.0 * v).collect(),
            Geometry::LevelSet(l) => l.eval(&z).1,
            _ => unreachable!(),
        };
        let denom = t_bar * dot(&grad_h, d);
        Gauge {
            value: 1.0 / t_bar,
            gradient: grad_h.iter().map(|g| g / denom).collect(),
            active_face: None,
        }
    }

    /// Estimated Euclidean distance from `u` to the nearest point where the
    /// radial maps are not differentiable: the boundary, and for polyhedra the
    /// exterior cones where the attaining face switches.
    pub fn kink_distance(&self, u: &[f64]) -> Result<f64> {
        let d = self.direction(u)?;
        let x = self.ray_point(1.0, &d);
        let boundary = match &self.geometry {
            Geometry::Polytope(p) => (0..p.b.len())
                .map(|i| (p.b[i] - p.row_dot(i, &x)).abs() / norm(&p.row(i)))
                .fold(f64::INFINITY, f64::min),
            Geometry::CappedSimplex(s) => {
                let tn = (1.0 - 1.0 / s.dim() as f64).sqrt();
                x.iter()
                    .zip(&s.caps)
                    .map(|(w, c)| w.abs().min((c - w).abs()) / tn)
                    .fold(f64::INFINITY, f64::min)
            }
            Geometry::Ball(b) => (norm(&sub(&x, &b.center)) - b.radius).abs(),
            Geometry::LevelSet(l) => {
                let (h, g) = l.eval(&x);
                h.abs() / norm(&g).max(1e-300)
            }
        };
        let t_bar = self.boundary_time_along(&d);
        if t_bar >= 1.0 {
            return Ok(boundary);
        }
        let Some(terms) = self.face_terms(&d) else {
            return Ok(boundary);
        };
        let mut ranked: Vec<(usize, f64)> = terms.iter().enumerate().map(|(i, (ad, off))| (i, ad / off)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (j, lj) = ranked[0];
        let (k, lk) = ranked[1];
        let gj: Vec<f64> = self.face_normal(j).iter().map(|a| a / self.offsets[j]).collect();
        let gk: Vec<f64> = self.face_normal(k).iter().map(|a| a / self.offsets[k]).collect();
        let mut diff = sub(&gj, &gk);
        if self.is_capped_simplex() {
            diff = center(&diff);
        }
        let switch = (lj - lk) / norm(&diff).max(1e-300);
        Ok(boundary.min(switch))
    }
}

/// Safeguarded Newton/bisection for `h(u0 + t d) = 0`.
fn level_set_root(level: &LevelSet, anchor: &[f64], d: &[f64]) -> f64 {
    let phi = |t: f64| level.eval(&axpy(anchor, t, d));
    let scale = phi(0.0).0.abs().max(1.0);
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let (v, _) = phi(hi);
        if v > 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > RAY_BRACKET_CAP {
            return f64::INFINITY;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..ROOT_MAX_ITERS {
        let (v, g) = phi(t);
        if v <= 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if v.abs() <= 1e-15 * scale || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let slope = dot(&g, d);
        let newton = t - v / slope;
        t = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    // Prefer the feasible side of the bracket.
    if phi(t).0 <= 0.0 {
        t
    } else {
        lo
    }
}

/// Orthogonal projection onto the hyperplane `{w : 1^T w = 1}`.
pub fn hyperplane_project(u: &[f64]) -> Vec<f64> {
    let n = u.len() as f64;
    let shift = (u.iter().sum::<f64>() - 1.0) / n;
    u.iter().map(|v| v - shift).collect()
}
