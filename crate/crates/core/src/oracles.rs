//! Independent reference computations: finite differences, bisection along
//! rays and a Dykstra-style capped-simplex projection.
//!
//! None of these reuse the closed forms they are meant to check.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::sets::{ConvexSet, RAY_BRACKET_CAP};

/// One analytic-vs-oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub quantity: String,
    pub analytic: f64,
    pub oracle: f64,
    pub abs_err: f64,
    /// `abs_err / max(1, |oracle|)`.
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(quantity: impl Into<String>, analytic: f64, oracle: f64, tolerance: f64) -> Self {
        let abs_err = (analytic - oracle).abs();
        let rel_err = abs_err / oracle.abs().max(1.0);
        Self {
            quantity: quantity.into(),
            analytic,
            oracle,
            abs_err,
            rel_err,
            tolerance,
            pass: rel_err <= tolerance,
        }
    }

    /// Report for a quantity that is already an error measure (oracle value 0).
    pub fn error_only(quantity: impl Into<String>, err: f64, tolerance: f64) -> Self {
        Self {
            quantity: quantity.into(),
            analytic: err,
            oracle: 0.0,
            abs_err: err,
            rel_err: err,
            tolerance,
            pass: err <= tolerance,
        }
    }

    pub const CSV_HEADER: &'static str = "quantity,analytic,oracle,abs_err,rel_err,tolerance,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            self.quantity, self.analytic, self.oracle, self.abs_err, self.rel_err, self.tolerance, self.pass
        )
    }
}

/// Central-difference Jacobian, one column per input coordinate.
pub fn fd_jacobian<F>(map: F, u: &[f64], h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = u.len();
    let mut x = u.to_vec();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        x[i] = u[i] + h;
        let plus = map(&x);
        x[i] = u[i] - h;
        let minus = map(&x);
        x[i] = u[i];
        columns.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    let m = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(m, n, |r, c| columns[c][r])
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let plus = f(&y);
            y[i] = x[i] - h;
            let minus = f(&y);
            y[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Boundary time by bisection on membership along the ray from the anchor.
/// Returns infinity when the ray stays inside past [`RAY_BRACKET_CAP`].
pub fn bisect_boundary(set: &ConvexSet, u: &[f64], iters: usize) -> Result<f64> {
    let d = set.direction(u)?;
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateRay);
    }
    let inside = |t: f64| set.within_inequalities(&set.ray_point(t, &d), 0.0);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while inside(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > RAY_BRACKET_CAP {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..iters {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + 0.5 * (hi - lo))
}

/// Euclidean projection onto `{1^T w = 1, 0 <= w <= caps}` by Dykstra's
/// alternating scheme between the hyperplane and the box.
pub fn qp_projection_oracle(u: &[f64], caps: &[f64], iters: usize) -> Result<Vec<f64>> {
    let n = u.len();
    if caps.len() != n || n == 0 {
        return Err(invalid("caps and input differ in length"));
    }
    if caps.iter().sum::<f64>() < 1.0 || caps.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InfeasibleSet(
            "caps must be positive and sum to at least 1".into(),
        ));
    }
    let mut x = u.to_vec();
    let mut corr = vec![0.0; n];
    for _ in 0..iters {
        // Hyperplane step needs no correction term (affine set).
        let shift = (x.iter().sum::<f64>() - 1.0) / n as f64;
        let y: Vec<f64> = x.iter().map(|v| v - shift).collect();
        let mut change = 0.0f64;
        for i in 0..n {
            let z = y[i] + corr[i];
            let clipped = z.clamp(0.0, caps[i]);
            corr[i] = z - clipped;
            change = change.max((clipped - x[i]).abs());
            x[i] = clipped;
        }
        let sum_res = (x.iter().sum::<f64>() - 1.0).abs();
        if change <= 1e-14 && sum_res <= 1e-12 {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence(format!(
        "capped-simplex projection oracle exhausted {iters} iterations"
    )))
}
