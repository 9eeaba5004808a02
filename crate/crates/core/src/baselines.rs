//! Competing constraint layers: temperature softmax, exact projection onto the
//! capped simplex, HardNet least-squares correction and unrolled DC3.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::autodiff::{Tape, Var};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::sets::hyperplane_project;

const BISECTION_MAX_ITERS: usize = 200;

/// Unrolled DC3 correction: `steps` heavy-ball iterations on the hinge energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dc3Config {
    pub steps: usize,
    pub step_size: f64,
    pub momentum: f64,
}

impl Default for Dc3Config {
    fn default() -> Self {
        Self {
            steps: 10,
            step_size: 0.1,
            momentum: 0.0,
        }
    }
}

impl Dc3Config {
    pub fn new(steps: usize, step_size: f64, momentum: f64) -> Result<Self> {
        let cfg = Self {
            steps,
            step_size,
            momentum,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!(
                "DC3 step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!(
                "DC3 momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// `lower <= A x <= upper`.
#[derive(Clone, Debug)]
pub struct AffineBounds {
    a: DMatrix<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl AffineBounds {
    pub fn new(a: DMatrix<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = a.nrows();
        if lower.len() != m || upper.len() != m {
            return Err(invalid(format!(
                "bounds of length {}/{} do not match {m} rows",
                lower.len(),
                upper.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("A contains non-finite entries"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(invalid("lower bound exceeds upper bound"));
        }
        let gram = Cholesky::new(a.transpose() * &a).ok_or_else(|| {
            Error::Factorization("A^T A is not positive definite (A is column rank deficient)".into())
        })?;
        Ok(Self { a, lower, upper, gram })
    }

    /// Box rows `0 <= w_i <= caps_i` used by the capped-simplex HardNet.
    pub fn capped_box(caps: &[f64]) -> Result<Self> {
        let n = caps.len();
        Self::new(DMatrix::identity(n, n), vec![0.0; n], caps.to_vec())
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(invalid(format!("input length {} != {}", u.len(), self.dim())));
        }
        ensure_finite("input", u)
    }

    /// Signed violation `relu(lower - Au) - relu(Au - upper)` and the active mask.
    fn violation(&self, u: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let au = &self.a * DVector::from_column_slice(u);
        let mut v = Vec::with_capacity(au.len());
        let mut active = Vec::with_capacity(au.len());
        for (i, x) in au.iter().enumerate() {
            let below = self.lower[i] - x;
            let above = x - self.upper[i];
            v.push(below.max(0.0) - above.max(0.0));
            active.push(below > 0.0 || above > 0.0);
        }
        (v, active)
    }
}

pub fn softmax_temp(u: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(invalid(format!("softmax temperature must be positive, got {tau}")));
    }
    ensure_finite("softmax input", u)?;
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| ((v - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// `J^T g` of the tempered softmax given its output `w`.
pub fn softmax_vjp(w: &[f64], tau: f64, g: &[f64]) -> Vec<f64> {
    let wg: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
    w.iter().zip(g).map(|(wi, gi)| wi * (gi - wg) / tau).collect()
}

fn check_caps(caps: &[f64], n: usize) -> Result<()> {
    if caps.len() != n {
        return Err(invalid(format!("caps length {} != input length {n}", caps.len())));
    }
    if caps.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
        return Err(invalid("caps must lie in (0, 1]"));
    }
    if caps.iter().sum::<f64>() < 1.0 {
        return Err(invalid("caps sum below 1: the capped simplex is empty"));
    }
    Ok(())
}

fn clipped(u: &[f64], caps: &[f64], mu: f64) -> Vec<f64> {
    u.iter().zip(caps).map(|(v, c)| (v - mu).clamp(0.0, *c)).collect()
}

/// Euclidean projection onto `{1^T w = 1, 0 <= w <= caps}`.
pub fn project_capped_simplex(u: &[f64], caps: &[f64]) -> Result<Vec<f64>> {
    check_caps(caps, u.len())?;
    ensure_finite("input", u)?;
    // Sum of the clipped vector is nonincreasing in mu: at `lo` every
    // coordinate sits at its cap, at `hi` every coordinate is zero.
    let mut lo = u.iter().zip(caps).map(|(v, c)| v - c).fold(f64::INFINITY, f64::min);
    let mut hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = |mu: f64| clipped(u, caps, mu).iter().sum::<f64>();
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITERS {
        mu = 0.5 * (lo + hi);
        let s = total(mu);
        if (s - 1.0).abs() <= 1e-12 || mu <= lo || mu >= hi {
            break;
        }
        if s > 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let mut w = clipped(u, caps, mu);
    // Spread the last rounding residual over the free coordinates.
    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0 && w[i] < caps[i]).collect();
    if !free.is_empty() {
        let shift = (1.0 - w.iter().sum::<f64>()) / free.len() as f64;
        for i in free {
            w[i] = (w[i] + shift).clamp(0.0, caps[i]);
        }
    }
    Ok(w)
}

/// `J^T g` of [`project_capped_simplex`]: `g` on the free set minus its mean
/// there, zero on clamped coordinates.
pub fn orth_projection_vjp(u: &[f64], caps: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != u.len() {
        return Err(invalid("cotangent length does not match the input"));
    }
    let w = project_capped_simplex(u, caps)?;
    let free: Vec<bool> = w.iter().zip(caps).map(|(x, c)| *x > 0.0 && x < c).collect();
    let count = free.iter().filter(|f| **f).count();
    if count == 0 {
        return Ok(vec![0.0; u.len()]);
    }
    let mean = g.iter().zip(&free).filter(|(_, f)| **f).map(|(v, _)| v).sum::<f64>() / count as f64;
    Ok(g.iter()
        .zip(&free)
        .map(|(v, f)| if *f { v - mean } else { 0.0 })
        .collect())
}

/// One least-squares correction `u + (A^T A)^{-1} A^T v(u)`.
pub fn hardnet_correct(u: &[f64], bounds: &AffineBounds) -> Result<Vec<f64>> {
    bounds.check(u)?;
    let (v, _) = bounds.violation(u);
    let rhs = bounds.a.transpose() * DVector::from_vec(v);
    let delta = bounds.gram.solve(&rhs);
    Ok(u.iter().zip(delta.iter()).map(|(a, b)| a + b).collect())
}

/// `J^T g` of [`hardnet_correct`]: `g - A^T D A (A^T A)^{-1} g`, where `D`
/// masks the violated rows.
pub fn hardnet_vjp(u: &[f64], bounds: &AffineBounds, g: &[f64]) -> Result<Vec<f64>> {
    bounds.check(u)?;
    if g.len() != u.len() {
        return Err(invalid("cotangent length does not match the input"));
    }
    let (_, active) = bounds.violation(u);
    let y = bounds.gram.solve(&DVector::from_column_slice(g));
    let mut z = &bounds.a * y;
    for (zi, on) in z.iter_mut().zip(&active) {
        if !on {
            *zi = 0.0;
        }
    }
    let back = bounds.a.transpose() * z;
    Ok(g.iter().zip(back.iter()).map(|(a, b)| a - b).collect())
}

/// HardNet on the capped simplex: hyperplane pre-projection followed by
/// `steps` corrections against the box rows.
pub fn hardnet_capped(u: &[f64], bounds: &AffineBounds, steps: usize) -> Result<Vec<f64>> {
    let mut w = hyperplane_project(u);
    for _ in 0..steps {
        w = hardnet_correct(&w, bounds)?;
    }
    Ok(w)
}

pub fn hardnet_capped_vjp(u: &[f64], bounds: &AffineBounds, steps: usize, g: &[f64]) -> Result<Vec<f64>> {
    let mut iterates = vec![hyperplane_project(u)];
    for _ in 0..steps {
        let next = hardnet_correct(iterates.last().expect("nonempty"), bounds)?;
        iterates.push(next);
    }
    let mut cot = g.to_vec();
    for w in iterates[..steps].iter().rev() {
        cot = hardnet_vjp(w, bounds, &cot)?;
    }
    Ok(crate::linalg::center(&cot))
}

/// Hinge energy `sum relu(-w_i)^2 + relu(w_i - c_i)^2`.
pub fn dc3_energy(w: &[f64], caps: &[f64]) -> f64 {
    w.iter()
        .zip(caps)
        .map(|(x, c)| {
            let lo = (-x).max(0.0);
            let hi = (x - c).max(0.0);
            lo * lo + hi * hi
        })
        .sum()
}

fn complete(xi: &[f64]) -> Vec<f64> {
    let mut w = xi.to_vec();
    w.push(1.0 - xi.iter().sum::<f64>());
    w
}

fn energy_grad_xi(w: &[f64], caps: &[f64]) -> Vec<f64> {
    let gw: Vec<f64> = w
        .iter()
        .zip(caps)
        .map(|(x, c)| 2.0 * (x - c).max(0.0) - 2.0 * (-x).max(0.0))
        .collect();
    let last = gw[gw.len() - 1];
    gw[..gw.len() - 1].iter().map(|g| g - last).collect()
}

fn dc3_check(u: &[f64], caps: &[f64], cfg: &Dc3Config) -> Result<()> {
    if u.len() < 2 {
        return Err(invalid("DC3 needs at least two coordinates"));
    }
    if caps.len() != u.len() {
        return Err(invalid("caps and input differ in length"));
    }
    ensure_finite("input", u)?;
    cfg.validate()
}

/// Unrolled DC3, returning the output and the energy after each iterate
/// (`steps + 1` values, starting with the initialization).
pub fn dc3_trace(u: &[f64], caps: &[f64], cfg: &Dc3Config) -> Result<(Vec<f64>, Vec<f64>)> {
    dc3_check(u, caps, cfg)?;
    let n = u.len();
    let w0 = hyperplane_project(u);
    let mut xi = w0[..n - 1].to_vec();
    let mut vel = vec![0.0; n - 1];
    let mut w = complete(&xi);
    let mut energies = vec![dc3_energy(&w, caps)];
    for _ in 0..cfg.steps {
        let g = energy_grad_xi(&w, caps);
        for k in 0..n - 1 {
            vel[k] = cfg.momentum * vel[k] - cfg.step_size * g[k];
            xi[k] += vel[k];
        }
        w = complete(&xi);
        energies.push(dc3_energy(&w, caps));
    }
    Ok((w, energies))
}

/// With momentum 0 the energy is non-increasing for `step_size <= 1 / N`;
/// larger steps can overshoot.
pub fn dc3_project(u: &[f64], caps: &[f64], cfg: &Dc3Config) -> Result<Vec<f64>> {
    dc3_trace(u, caps, cfg).map(|(w, _)| w)
}

/// [`dc3_project`] recorded on a tape with builtin operations only, so the
/// gradient flows through every unrolled step and the completion.
pub fn dc3_on_tape(tape: &mut Tape, u: Var, caps: &[f64], cfg: &Dc3Config) -> Result<Var> {
    let n = tape.value(u).len();
    dc3_check(tape.value(u), caps, cfg)?;
    let m = n - 1;
    // Symmetric initialization w0 = u - (1^T u - 1)/N.
    let s = tape.sum(u)?;
    let s = tape.shift(s, -1.0)?;
    let s = tape.scale(s, 1.0 / n as f64)?;
    let s = tape.broadcast(s, n)?;
    let w0 = tape.sub(u, s)?;
    let mut xi = tape.slice(w0, 0, m)?;
    let caps_var = tape.leaf(caps.to_vec());
    let zeros = tape.leaf(vec![0.0; n]);
    let mut vel: Option<Var> = None;
    let mut w = complete_on_tape(tape, xi)?;
    for _ in 0..cfg.steps {
        // dV/dw = 2 relu(w - c) - 2 relu(-w); chain through the completion.
        let over = tape.sub(w, caps_var)?;
        let over = tape.relu(over)?;
        let under = tape.sub(zeros, w)?;
        let under = tape.relu(under)?;
        let gw = tape.sub(over, under)?;
        let gw = tape.scale(gw, 2.0)?;
        let head = tape.slice(gw, 0, m)?;
        let last = tape.slice(gw, m, 1)?;
        let last = tape.broadcast(last, m)?;
        let grad = tape.sub(head, last)?;
        let step = tape.scale(grad, -cfg.step_size)?;
        let v = match vel {
            Some(prev) if cfg.momentum > 0.0 => {
                let carried = tape.scale(prev, cfg.momentum)?;
                tape.add(carried, step)?
            }
            _ => step,
        };
        vel = Some(v);
        xi = tape.add(xi, v)?;
        w = complete_on_tape(tape, xi)?;
    }
    Ok(w)
}

fn complete_on_tape(tape: &mut Tape, xi: Var) -> Result<Var> {
    let s = tape.sum(xi)?;
    let last = tape.neg(s)?;
    let last = tape.shift(last, 1.0)?;
    tape.concat(&[xi, last])
}

/// Exact projection applied to HardNet and DC3 outputs at evaluation time.
pub fn eval_feasibility_wrapper(w: &[f64], caps: &[f64]) -> Result<Vec<f64>> {
    project_capped_simplex(w, caps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{fd_jacobian, qp_projection_oracle};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_temp(&[0.0, 0.0], 1.0).unwrap(), vec![0.5, 0.5]);
        let a = softmax_temp(&[0.3, -1.2, 2.0], 0.7).unwrap();
        let b = softmax_temp(&[100.3, 98.8, 102.0], 0.7).unwrap();
        assert!(close(&a, &b, 1e-12));
        assert!(softmax_temp(&[10.0, 0.0], 0.1).unwrap()[0] >= 1.0 - 1e-12);
        assert!(softmax_temp(&[1.0], 0.0).is_err());
    }

    #[test]
    fn softmax_vjp_matches_fd() {
        let u = [0.2, -0.4, 1.1];
        let tau = 0.8;
        let g = [1.0, -2.0, 0.5];
        let j = fd_jacobian(|x| softmax_temp(x, tau).unwrap(), &u, 1e-6);
        let w = softmax_temp(&u, tau).unwrap();
        let got = softmax_vjp(&w, tau, &g);
        let want = j.transpose() * DVector::from_column_slice(&g);
        assert!(close(&got, want.as_slice(), 1e-8));
    }

    #[test]
    fn projection_examples() {
        let w = project_capped_simplex(&[0.25; 4], &[0.5; 4]).unwrap();
        assert!(close(&w, &[0.25; 4], 1e-15));
        let w = project_capped_simplex(&[0.6, 0.6], &[1.0, 1.0]).unwrap();
        assert!(close(&w, &[0.5, 0.5], 1e-12));
        let w = project_capped_simplex(&[1.0, 0.0, 0.0], &[0.5; 3]).unwrap();
        let oracle = qp_projection_oracle(&[1.0, 0.0, 0.0], &[0.5; 3], 100_000).unwrap();
        assert!(close(&w, &oracle, 1e-7));
        assert!(close(&w, &[0.5, 0.25, 0.25], 1e-12));
        assert!(project_capped_simplex(&[0.0; 3], &[0.3; 3]).is_err());
    }

    #[test]
    fn projection_vjp_examples() {
        let g = [0.3, -1.0, 2.0, 0.7];
        let got = orth_projection_vjp(&[0.2, 0.3, 0.1, 0.4], &[1.0; 4], &g).unwrap();
        let mean = g.iter().sum::<f64>() / 4.0;
        let want: Vec<f64> = g.iter().map(|v| v - mean).collect();
        assert!(close(&got, &want, 1e-15));
        let got = orth_projection_vjp(&[1.0, 0.0, 0.0], &[0.5; 3], &[2.0; 3]).unwrap();
        assert!(close(&got, &[0.0; 3], 1e-15));
        let got = orth_projection_vjp(&[1.0, 0.0, 0.0], &[0.5; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert!(close(&got, &[0.0; 3], 1e-15));
        let j = fd_jacobian(
            |x| project_capped_simplex(x, &[0.5; 3]).unwrap(),
            &[1.0, 0.0, 0.0],
            1e-6,
        );
        let want = j.transpose() * DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        assert!(close(want.as_slice(), &[0.0; 3], 1e-8));
    }

    #[test]
    fn hardnet_scalar_examples() {
        let b = AffineBounds::new(DMatrix::from_element(1, 1, 1.0), vec![0.0], vec![1.0]).unwrap();
        assert_eq!(hardnet_correct(&[0.4], &b).unwrap(), vec![0.4]);
        assert!((hardnet_correct(&[1.5], &b).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(hardnet_correct(&[-0.25], &b).unwrap()[0].abs() < 1e-15);
        let rank_deficient = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            AffineBounds::new(rank_deficient, vec![0.0; 2], vec![1.0; 2]),
            Err(Error::Factorization(_))
        ));
    }

    #[test]
    fn hardnet_matches_generic_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 1.0, 0.7, 0.2]);
        let b = AffineBounds::new(a.clone(), vec![-0.5, -0.2, 0.0], vec![0.5, 0.4, 0.3]).unwrap();
        let u = [1.2, -0.9];
        let (v, _) = b.violation(&u);
        let svd = a.clone().svd(true, true);
        let delta = svd.solve(&DVector::from_vec(v), 1e-14).unwrap();
        let got = hardnet_correct(&u, &b).unwrap();
        assert!(close(&got, &[u[0] + delta[0], u[1] + delta[1]], 1e-12));
    }

    #[test]
    fn hardnet_vjp_matches_fd() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 1.0, 0.7, 0.2]);
        let b = AffineBounds::new(a, vec![-0.5, -0.2, 0.0], vec![0.5, 0.4, 0.3]).unwrap();
        let u = [1.2, -0.9];
        let g = [0.4, -1.3];
        let j = fd_jacobian(|x| hardnet_correct(x, &b).unwrap(), &u, 1e-6);
        let want = j.transpose() * DVector::from_column_slice(&g);
        assert!(close(&hardnet_vjp(&u, &b, &g).unwrap(), want.as_slice(), 1e-8));

        let caps = [0.5, 0.4, 0.6];
        let bounds = AffineBounds::capped_box(&caps).unwrap();
        let u = [0.9, -0.3, 0.2];
        let g = [1.0, 0.2, -0.5];
        let j = fd_jacobian(|x| hardnet_capped(x, &bounds, 2).unwrap(), &u, 1e-6);
        let want = j.transpose() * DVector::from_column_slice(&g);
        let got = hardnet_capped_vjp(&u, &bounds, 2, &g).unwrap();
        assert!(close(&got, want.as_slice(), 1e-8), "{got:?} vs {want}");
    }

    #[test]
    fn dc3_examples() {
        let caps = [0.6; 3];
        let u = [0.9, -0.4, 0.1];
        let cfg0 = Dc3Config::new(0, 0.1, 0.0).unwrap();
        assert!(close(
            &dc3_project(&u, &caps, &cfg0).unwrap(),
            &hyperplane_project(&u),
            1e-15
        ));
        let feasible = [0.2, 0.3, 0.5];
        let w = dc3_project(&feasible, &caps, &Dc3Config::default()).unwrap();
        assert!(close(&w, &feasible, 1e-15));

        // Hand gradient: w0 = (2, -1), dV/dxi = 2 (xi - 1) + 2 (xi - 1) = 4.
        let cfg = Dc3Config::new(1, 0.1, 0.0).unwrap();
        let w = dc3_project(&[2.0, -1.0], &[1.0, 1.0], &cfg).unwrap();
        assert!(close(&w, &[1.6, -0.6], 1e-12));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dc3_tape_matches_plain_loop() {
        let caps = [0.5, 0.4, 0.7, 0.3];
        let u = [1.4, -0.6, 0.3, 0.8];
        for cfg in [
            Dc3Config::new(5, 0.1, 0.0).unwrap(),
            Dc3Config::new(7, 0.05, 0.5).unwrap(),
        ] {
            let mut tape = Tape::new();
            let x = tape.leaf(u.to_vec());
            let w = dc3_on_tape(&mut tape, x, &caps, &cfg).unwrap();
            let plain = dc3_project(&u, &caps, &cfg).unwrap();
            assert!(close(tape.value(w), &plain, 1e-14));
            let g = [0.3, -1.0, 0.5, 0.2];
            let grads = tape.backward_with(w, g.to_vec()).unwrap();
            let j = fd_jacobian(|x| dc3_project(x, &caps, &cfg).unwrap(), &u, 1e-6);
            let want = j.transpose() * DVector::from_column_slice(&g);
            assert!(close(grads.get(x), want.as_slice(), 1e-7));
        }
    }

    #[test]
    fn wrapper_repairs_small_residuals() {
        let caps = [0.6; 3];
        let w = eval_feasibility_wrapper(&[0.5, 0.5 + 1e-9, -1e-9], &caps).unwrap();
        assert!(w.iter().all(|v| *v >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let w = eval_feasibility_wrapper(&[0.7, 0.7, -0.4], &[1.0; 3]).unwrap();
        let oracle = qp_projection_oracle(&[0.7, 0.7, -0.4], &[1.0; 3], 100_000).unwrap();
        assert!(close(&w, &oracle, 1e-10));
        assert!(close(&w, &[0.5, 0.5, 0.0], 1e-12));
    }
}
