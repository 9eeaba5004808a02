//! The soft-radial projection layer.
//!
//! For an anchor `u0`, direction `d = u - u0`, squared distance `rho = |d|^2`
//! and boundary time `t_bar`, the hard radial map is `q(u) = u0 + min(1, t_bar) d`
//! and the soft map is `p(u) = u0 + r(rho) (q(u) - u0)`, where `r` is a strictly
//! increasing contraction with `r(0) = epsilon > 0` saturating at 1.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::sets::{hyperplane_project, ConvexSet};

/// Upper clamp on `r`. The exponential and hyperbolic families round to exactly
/// 1.0 once `rho / lambda` exceeds ~40, which would put `p(u)` on the boundary.
pub const MAX_CONTRACTION: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContractionFamily {
    Rational,
    Exponential,
    Hyperbolic,
}

impl ContractionFamily {
    pub const ALL: [ContractionFamily; 3] = [Self::Rational, Self::Exponential, Self::Hyperbolic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rational => "rational",
            Self::Exponential => "exponential",
            Self::Hyperbolic => "hyperbolic",
        }
    }
}

impl fmt::Display for ContractionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContractionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rational" | "fractional" => Ok(Self::Rational),
            "exponential" | "exp" => Ok(Self::Exponential),
            "hyperbolic" | "tanh" => Ok(Self::Hyperbolic),
            other => Err(invalid(format!("unknown contraction family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialContraction {
    family: ContractionFamily,
    epsilon: f64,
    lambda: f64,
}

impl Default for RadialContraction {
    fn default() -> Self {
        Self {
            family: ContractionFamily::Rational,
            epsilon: 0.1,
            lambda: 1.0,
        }
    }
}

impl RadialContraction {
    pub fn new(family: ContractionFamily, epsilon: f64, lambda: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            family,
            epsilon,
            lambda,
        })
    }

    pub fn family(&self) -> ContractionFamily {
        self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(r(rho), r'(rho))`.
    pub fn eval(&self, rho: f64) -> Result<(f64, f64)> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(invalid(format!("rho must be finite and nonnegative, got {rho}")));
        }
        Ok(self.eval_unchecked(rho))
    }

    pub(crate) fn eval_unchecked(&self, rho: f64) -> (f64, f64) {
        let (eps, lam) = (self.epsilon, self.lambda);
        let span = 1.0 - eps;
        let (r, dr) = match self.family {
            ContractionFamily::Rational => {
                let den = rho + lam;
                (eps + span * rho / den, span * lam / (den * den))
            }
            ContractionFamily::Exponential => {
                let e = (-rho / lam).exp();
                (eps + span * (1.0 - e), span / lam * e)
            }
            ContractionFamily::Hyperbolic => {
                let x = rho / lam;
                let sech = 1.0 / x.cosh();
                (eps + span * x.tanh(), span / lam * sech * sech)
            }
        };
        (r.min(MAX_CONTRACTION), dr)
    }
}

/// Which Jacobian formula applied at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Interior,
    Exterior,
    /// On the boundary; the exterior formula is used.
    Boundary,
}

#[derive(Clone, Debug)]
pub struct LocalJacobian {
    pub matrix: DMatrix<f64>,
    pub branch: Branch,
}

struct RayState {
    d: Vec<f64>,
    rho: f64,
    t_bar: f64,
    r: f64,
    dr: f64,
}

impl RayState {
    fn branch(&self) -> Branch {
        if self.rho == 0.0 || self.t_bar > 1.0 {
            Branch::Interior
        } else if (self.t_bar - 1.0).abs() <= 1e-12 {
            Branch::Boundary
        } else {
            Branch::Exterior
        }
    }
}

#[derive(Clone, Debug)]
pub struct SoftRadialLayer {
    set: ConvexSet,
    contraction: RadialContraction,
}

impl SoftRadialLayer {
    pub fn new(set: ConvexSet, contraction: RadialContraction) -> Self {
        Self { set, contraction }
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    pub fn contraction(&self) -> &RadialContraction {
        &self.contraction
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    fn state(&self, u: &[f64]) -> Result<RayState> {
        let d = self.set.direction(u)?;
        let rho = norm_sq(&d);
        let t_bar = self.set.boundary_time_along(&d);
        let (r, dr) = self.contraction.eval_unchecked(rho);
        Ok(RayState { d, rho, t_bar, r, dr })
    }

    /// Hard radial projection `q(u)`.
    pub fn hard_project(&self, u: &[f64]) -> Result<Vec<f64>> {
        let st = self.state(u)?;
        if st.t_bar >= 1.0 {
            return Ok(if self.set.is_capped_simplex() {
                hyperplane_project(u)
            } else {
                u.to_vec()
            });
        }
        Ok(self.set.ray_point(st.t_bar, &st.d))
    }

    /// Soft-radial projection `p(u)`, strictly inside the set.
    pub fn soft_project(&self, u: &[f64]) -> Result<Vec<f64>> {
        let st = self.state(u)?;
        if st.rho == 0.0 {
            return Ok(self.set.anchor().to_vec());
        }
        let alpha = st.t_bar.min(1.0);
        Ok(self.set.ray_point(st.r * alpha, &st.d))
    }

    /// Jacobian of `p` at `u` in ambient coordinates.
    pub fn jacobian(&self, u: &[f64]) -> Result<LocalJacobian> {
        let st = self.state(u)?;
        let n = st.d.len();
        let branch = st.branch();
        let mut j = match branch {
            Branch::Interior => {
                let mut j = DMatrix::identity(n, n) * st.r;
                for a in 0..n {
                    for b in 0..n {
                        j[(a, b)] += 2.0 * st.dr * st.d[a] * st.d[b];
                    }
                }
                j
            }
            Branch::Exterior | Branch::Boundary => {
                let gauge = self.set.gauge_along(&st.d);
                let lam = gauge.value;
                let grad = &gauge.gradient;
                let mut j = DMatrix::identity(n, n) * (st.r / lam);
                for a in 0..n {
                    for b in 0..n {
                        j[(a, b)] += -st.r / (lam * lam) * st.d[a] * grad[b] + 2.0 * st.dr * (st.d[a] / lam) * st.d[b];
                    }
                }
                j
            }
        };
        if self.set.is_capped_simplex() {
            // Right-compose with I - 11^T / N: subtract each row's mean.
            for a in 0..n {
                let mean = j.row(a).sum() / n as f64;
                for b in 0..n {
                    j[(a, b)] -= mean;
                }
            }
        }
        Ok(LocalJacobian { matrix: j, branch })
    }

    /// `J_p(u)^T g` without materializing the Jacobian.
    pub fn vjp(&self, u: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.dim() {
            return Err(invalid("cotangent length does not match the layer dimension"));
        }
        ensure_finite("cotangent", g)?;
        let st = self.state(u)?;
        let dg = dot(&st.d, g);
        let mut out = match st.branch() {
            Branch::Interior => {
                let mut out: Vec<f64> = g.iter().map(|v| st.r * v).collect();
                if dg != 0.0 {
                    let k = 2.0 * st.dr * dg;
                    for (o, di) in out.iter_mut().zip(&st.d) {
                        *o += k * di;
                    }
                }
                out
            }
            Branch::Exterior | Branch::Boundary => {
                let gauge = self.set.gauge_along(&st.d);
                let lam = gauge.value;
                let radial = 2.0 * st.dr * dg / lam;
                let tangential = st.r / (lam * lam) * dg;
                g.iter()
                    .zip(&gauge.gradient)
                    .zip(&st.d)
                    .map(|((gi, ggi), di)| st.r / lam * gi - tangential * ggi + radial * di)
                    .collect()
            }
        };
        if self.set.is_capped_simplex() {
            out = crate::linalg::center(&out);
        }
        Ok(out)
    }

    /// Radial profile along a unit direction `v` with boundary distance
    /// `t_bar_v`: `psi(t) = r(t^2) min(t, t_bar_v)`.
    pub fn radial_profile(&self, t: f64, t_bar_v: f64) -> f64 {
        self.contraction.eval_unchecked(t * t).0 * t.min(t_bar_v)
    }

    /// Inverse of `p` on the interior of the set.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.set.is_capped_simplex() {
            let sum: f64 = x.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("point is off the simplex hyperplane (sum {sum})")));
            }
        }
        let d = self.set.direction(x)?;
        let s = norm(&d);
        if s == 0.0 {
            return Ok(self.set.anchor().to_vec());
        }
        let v: Vec<f64> = d.iter().map(|c| c / s).collect();
        let t_bar_v = self.set.boundary_time_along(&v);
        if !(s < MAX_CONTRACTION * t_bar_v) {
            return Err(Error::NotInvertible(format!(
                "distance {s} along the ray is not below the boundary distance {t_bar_v}"
            )));
        }
        // psi(s) < s because r < 1, so the root lies above s.
        let mut lo = s;
        let mut hi = 2.0 * s;
        while self.radial_profile(hi, t_bar_v) < s {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::NotInvertible("radial profile never reaches the target".into()));
            }
        }
        for _ in 0..200 {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.radial_profile(mid, t_bar_v) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let err_lo = (self.radial_profile(lo, t_bar_v) - s).abs();
        let err_hi = (self.radial_profile(hi, t_bar_v) - s).abs();
        let t = if err_lo <= err_hi { lo } else { hi };
        Ok(axpy(self.set.anchor(), t, &v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::fd_jacobian;
    use crate::sets::{Ball, CappedSimplex, Polytope};

    fn ball_layer() -> SoftRadialLayer {
        let set = ConvexSet::ball(Ball::new(vec![0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]).unwrap();
        SoftRadialLayer::new(
            set,
            RadialContraction::new(ContractionFamily::Rational, 0.5, 1.0).unwrap(),
        )
    }

    fn box_layer() -> SoftRadialLayer {
        let set = ConvexSet::polytope(Polytope::boxed(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]).unwrap();
        SoftRadialLayer::new(set, RadialContraction::default())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn contraction_examples() {
        let rc = RadialContraction::new(ContractionFamily::Rational, 0.5, 1.0).unwrap();
        assert_eq!(rc.eval(0.0).unwrap(), (0.5, 0.5));
        for fam in ContractionFamily::ALL {
            let rc = RadialContraction::new(fam, 0.1, 1.0).unwrap();
            let (r, _) = rc.eval(1e9).unwrap();
            assert!(r >= 1.0 - 1e-6 && r < 1.0, "{fam}: {r}");
        }
        let rc = RadialContraction::new(ContractionFamily::Exponential, 0.1, 2.0).unwrap();
        let (r, _) = rc.eval(2.0).unwrap();
        // 0.1 + 0.9 (1 - e^{-1})
        assert!((r - 0.668_908_5).abs() < 1e-7, "{r}");
        assert!(rc.eval(-1.0).is_err());
    }

    #[test]
    fn contraction_derivative_matches_finite_differences() {
        for fam in ContractionFamily::ALL {
            let rc = RadialContraction::new(fam, 0.2, 1.5).unwrap();
            for &rho in &[0.1, 0.7, 2.0, 5.0] {
                let h = 1e-6;
                let fd = (rc.eval(rho + h).unwrap().0 - rc.eval(rho - h).unwrap().0) / (2.0 * h);
                let (_, dr) = rc.eval(rho).unwrap();
                assert!((fd - dr).abs() < 1e-8, "{fam} rho={rho}: {fd} vs {dr}");
            }
        }
    }

    #[test]
    fn contraction_rejects_bad_parameters() {
        assert!(RadialContraction::new(ContractionFamily::Rational, 0.0, 1.0).is_err());
        assert!(RadialContraction::new(ContractionFamily::Rational, 1.0, 1.0).is_err());
        assert!(RadialContraction::new(ContractionFamily::Rational, 0.5, 0.0).is_err());
    }

    #[test]
    fn hard_projection_examples() {
        let ball = ball_layer();
        assert_eq!(ball.hard_project(&[0.3, 0.1]).unwrap(), vec![0.3, 0.1]);
        assert!(close(&ball.hard_project(&[3.0, 4.0]).unwrap(), &[0.6, 0.8], 1e-15));
        assert!(close(
            &box_layer().hard_project(&[2.0, 2.0]).unwrap(),
            &[1.0, 1.0],
            1e-15
        ));
    }

    #[test]
    fn soft_projection_examples() {
        let ball = ball_layer();
        assert_eq!(ball.soft_project(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(close(&ball.soft_project(&[2.0, 0.0]).unwrap(), &[0.9, 0.0], 1e-15));
        assert!(close(&ball.soft_project(&[0.5, 0.0]).unwrap(), &[0.3, 0.0], 1e-15));
        assert!(ball.soft_project(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn soft_projection_is_strictly_feasible_far_away() {
        for fam in ContractionFamily::ALL {
            let layer = SoftRadialLayer::new(
                box_layer().set().clone(),
                RadialContraction::new(fam, 0.1, 1.0).unwrap(),
            );
            let p = layer.soft_project(&[1e6, -3e5]).unwrap();
            assert!(layer.set().slack(&p) > 0.0, "{fam}: {p:?}");
        }
    }

    #[test]
    fn jacobian_examples() {
        let ball = ball_layer();
        let j = ball.jacobian(&[0.0, 0.0]).unwrap();
        assert_eq!(j.branch, Branch::Interior);
        assert_eq!(j.matrix, DMatrix::identity(2, 2) * 0.5);

        let j = ball.jacobian(&[0.5, 0.0]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.76, 0.0, 0.0, 0.6]);
        assert!((j.matrix - expect).abs().max() < 1e-14);

        let j = ball.jacobian(&[2.0, 0.0]).unwrap();
        assert_eq!(j.branch, Branch::Exterior);
        let expect = DMatrix::from_row_slice(2, 2, &[0.08, 0.0, 0.0, 0.45]);
        assert!((j.matrix - expect).abs().max() < 1e-14);
    }

    #[test]
    fn jacobian_examples_agree_with_finite_differences() {
        let ball = ball_layer();
        for u in [[0.5, 0.0], [2.0, 0.0], [0.3, -0.4], [-1.5, 2.5]] {
            let fd = fd_jacobian(|x| ball.soft_project(x).unwrap(), &u, 1e-6);
            let an = ball.jacobian(&u).unwrap().matrix;
            assert!((fd - an).abs().max() < 1e-8, "u = {u:?}");
        }
    }

    #[test]
    fn boundary_point_is_flagged() {
        let j = box_layer().jacobian(&[1.0, 0.5]).unwrap();
        assert_eq!(j.branch, Branch::Boundary);
    }

    #[test]
    fn vjp_examples() {
        let ball = ball_layer();
        assert_eq!(ball.vjp(&[2.0, 0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let v = ball.vjp(&[2.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(close(&v, &[0.08, 0.45], 1e-14));
        let u = [0.2, -0.5];
        let g = [0.7, 1.3];
        let jg = ball.jacobian(&u).unwrap().matrix * nalgebra::DVector::from_column_slice(&g);
        assert!(close(&ball.vjp(&u, &g).unwrap(), jg.as_slice(), 1e-15));
    }

    #[test]
    fn vjp_at_anchor_is_epsilon_scaled() {
        let layer = box_layer();
        let g = [0.37, -1.25];
        assert_eq!(layer.vjp(&[0.0, 0.0], &g).unwrap(), vec![0.1 * 0.37, 0.1 * -1.25]);
    }

    #[test]
    fn inverse_examples() {
        let ball = ball_layer();
        assert_eq!(ball.inverse(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let u = ball.inverse(&[0.9, 0.0]).unwrap();
        assert!(close(&u, &[2.0, 0.0], 1e-10), "{u:?}");
        assert!(close(&ball.soft_project(&u).unwrap(), &[0.9, 0.0], 1e-12));
        assert!(matches!(ball.inverse(&[1.0, 0.0]), Err(Error::NotInvertible(_))));
        assert!(matches!(ball.inverse(&[0.0, 1.5]), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn capped_simplex_layer_round_trip() {
        let set = ConvexSet::capped_simplex(CappedSimplex::uniform(4, 0.4).unwrap());
        let layer = SoftRadialLayer::new(set, RadialContraction::default());
        let u = [1.3, -0.2, 0.4, 0.1];
        let w = layer.soft_project(&u).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(layer.set().slack(&w) > 0.0);
        let back = layer.inverse(&w).unwrap();
        assert!(close(&back, &hyperplane_project(&u), 1e-9), "{back:?}");
    }

    #[test]
    fn capped_simplex_jacobian_matches_finite_differences() {
        let set = ConvexSet::capped_simplex(CappedSimplex::new(vec![0.5, 0.6, 0.45]).unwrap());
        let layer = SoftRadialLayer::new(set, RadialContraction::default());
        for u in [[0.9, 0.05, 0.05], [0.4, 0.35, 0.25], [-1.0, 2.0, 0.3]] {
            let fd = fd_jacobian(|x| layer.soft_project(x).unwrap(), &u, 1e-6);
            let an = layer.jacobian(&u).unwrap().matrix;
            assert!((fd - an).abs().max() < 1e-7, "u = {u:?}");
        }
    }
}
