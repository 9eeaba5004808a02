//! Training objectives and end-to-end tasks.
//!
//! Scalar helpers come in two flavors: plain functions on slices (used for
//! evaluation metrics and tests) and `*_on_tape` builders that record the same
//! computation for training.

pub mod data;
pub mod dispatch;
pub mod portfolio;
pub mod toy2d;

use std::sync::Arc;

use crate::autodiff::{Gradients, Primitive, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::nets::MlpVars;

/// Guard added to the standard deviation in the Sharpe ratio.
pub const EPS_STD: f64 = 1e-8;

/// Per-step training/evaluation record written to the metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub step: usize,
    pub loss: f64,
    pub objective: f64,
    /// Turnover (portfolio) or served rate (dispatch).
    pub secondary: f64,
    pub feasibility_margin: f64,
}

/// Parameter gradients in the order of [`crate::nets::Mlp::parameters`].
pub(crate) fn param_grads(grads: &Gradients, vars: &MlpVars) -> Vec<Vec<f64>> {
    vars.params().into_iter().map(|v| grads.get(v).to_vec()).collect()
}

/// Weights after one period of passive drift: `y * w / (y^T w)`.
pub fn drift_weights(w: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if w.len() != y.len() {
        return Err(invalid("weights and price relatives differ in length"));
    }
    let total: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    if !(total > 0.0) {
        return Err(invalid(format!("portfolio value {total} is not positive")));
    }
    Ok(w.iter().zip(y).map(|(a, b)| a * b / total).collect())
}

/// `sum_i sqrt(delta^2 + (w_i - v_i)^2) - delta`.
pub fn pseudo_huber_turnover(w: &[f64], w_prev_drifted: &[f64], delta: f64) -> f64 {
    w.iter()
        .zip(w_prev_drifted)
        .map(|(a, b)| {
            let d = a - b;
            (delta * delta + d * d).sqrt() - delta
        })
        .sum()
}

/// How period returns enter the Sharpe ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharpeSpec {
    /// Transaction cost rate; the charge is `gamma / 2` times the turnover.
    pub gamma: f64,
    /// Pseudo-Huber smoothing of the turnover.
    pub delta: f64,
    /// Subtract 1 from `w^T y`, turning price relatives into simple returns.
    pub excess: bool,
}

impl SharpeSpec {
    fn offset(&self) -> f64 {
        if self.excess {
            1.0
        } else {
            0.0
        }
    }
}

fn sharpe_ratio(returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    mean / (var.sqrt() + EPS_STD)
}

fn check_path(weights_len: usize, y_len: usize) -> Result<()> {
    if y_len < 2 {
        return Err(invalid(format!("Sharpe needs at least 2 periods, got {y_len}")));
    }
    if weights_len != y_len + 1 {
        return Err(invalid(format!(
            "weight path needs one more entry than the returns ({weights_len} vs {y_len})"
        )));
    }
    Ok(())
}

/// Net period returns `R_t = w_{t-1}^T y_t - offset - (gamma/2) L_delta(w_t, drift(w_{t-1}, y_t))`
/// for `t = 1..T`, where `weights` holds `w_0..w_T` and `y` holds `y_1..y_T`.
pub fn net_returns(weights: &[Vec<f64>], y: &[Vec<f64>], spec: &SharpeSpec) -> Result<Vec<f64>> {
    check_path(weights.len(), y.len())?;
    (0..y.len())
        .map(|t| {
            let gross: f64 = weights[t].iter().zip(&y[t]).map(|(a, b)| a * b).sum();
            let drifted = drift_weights(&weights[t], &y[t])?;
            let cost = pseudo_huber_turnover(&weights[t + 1], &drifted, spec.delta);
            Ok(gross - spec.offset() - 0.5 * spec.gamma * cost)
        })
        .collect()
}

/// Mean over population standard deviation (plus [`EPS_STD`]) of the net returns.
pub fn sharpe_objective(weights: &[Vec<f64>], y: &[Vec<f64>], spec: &SharpeSpec) -> Result<f64> {
    Ok(sharpe_ratio(&net_returns(weights, y, spec)?))
}

pub fn drift_on_tape(tape: &mut Tape, w: Var, y: &[f64]) -> Result<Var> {
    let yv = tape.leaf(y.to_vec());
    let grown = tape.mul(w, yv)?;
    let total = tape.sum(grown)?;
    let total = tape.broadcast(total, y.len())?;
    tape.div(grown, total)
}

pub fn pseudo_huber_on_tape(tape: &mut Tape, w: Var, v: Var, delta: f64) -> Result<Var> {
    let d = tape.sub(w, v)?;
    let sq = tape.mul(d, d)?;
    let sq = tape.shift(sq, delta * delta)?;
    let root = tape.sqrt(sq)?;
    let root = tape.shift(root, -delta)?;
    tape.sum(root)
}

/// [`sharpe_objective`] recorded on the tape.
pub fn sharpe_on_tape(tape: &mut Tape, weights: &[Var], y: &[Vec<f64>], spec: &SharpeSpec) -> Result<Var> {
    check_path(weights.len(), y.len())?;
    let mut rets = Vec::with_capacity(y.len());
    for t in 0..y.len() {
        let yv = tape.leaf(y[t].clone());
        let gross = tape.dot(weights[t], yv)?;
        let drifted = drift_on_tape(tape, weights[t], &y[t])?;
        let cost = pseudo_huber_on_tape(tape, weights[t + 1], drifted, spec.delta)?;
        let cost = tape.scale(cost, -0.5 * spec.gamma)?;
        let r = tape.add(gross, cost)?;
        rets.push(tape.shift(r, -spec.offset())?);
    }
    let n = rets.len();
    let r = tape.concat(&rets)?;
    let mean = tape.mean(r)?;
    let mean_b = tape.broadcast(mean, n)?;
    let centered = tape.sub(r, mean_b)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean(sq)?;
    let std = tape.sqrt(var)?;
    let den = tape.shift(std, EPS_STD)?;
    tape.div(mean, den)
}

/// Smooth minimum `-tau log(exp(-x/tau) + exp(-y/tau))`, evaluated stably.
pub fn softmin(x: f64, y: f64, tau: f64) -> f64 {
    x.min(y) - tau * (-(x - y).abs() / tau).exp().ln_1p()
}

/// Weight of `x` in the gradient of [`softmin`]: `d softmin / dx`.
fn softmin_weight(x: f64, y: f64, tau: f64) -> f64 {
    let z = (x - y) / tau;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Elementwise [`softmin`] of two vectors as a tape primitive.
#[derive(Clone, Debug)]
pub struct SoftMinPrimitive {
    pub tau: f64,
}

impl Primitive for SoftMinPrimitive {
    fn name(&self) -> &str {
        "softmin"
    }

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let [a, b] = inputs else {
            return Err(invalid("softmin takes two inputs"));
        };
        if a.len() != b.len() {
            return Err(invalid("softmin inputs differ in length"));
        }
        Ok(a.iter().zip(b.iter()).map(|(x, y)| softmin(*x, *y, self.tau)).collect())
    }

    fn vjp(&self, inputs: &[&[f64]], _output: &[f64], cotangent: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let mut ga = Vec::with_capacity(a.len());
        let mut gb = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let s = softmin_weight(a[i], b[i], self.tau);
            ga.push(cotangent[i] * s);
            gb.push(cotangent[i] * (1.0 - s));
        }
        Ok(vec![ga, gb])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServedMode {
    Soft,
    Hard,
}

/// `sum_i min(a_i, d_i) / sum_i d_i` with an exact or smooth minimum.
pub fn served_rate(a: &[f64], d: &[f64], tau: f64, mode: ServedMode) -> Result<f64> {
    if a.len() != d.len() {
        return Err(invalid("allocation and demand differ in length"));
    }
    let total: f64 = d.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SkipSample("total demand is zero".into()));
    }
    let served: f64 = match mode {
        ServedMode::Hard => a.iter().zip(d).map(|(x, y)| x.min(*y)).sum(),
        ServedMode::Soft => a.iter().zip(d).map(|(x, y)| softmin(*x, *y, tau)).sum(),
    };
    Ok(served / total)
}

/// Soft served rate recorded on the tape.
pub fn served_rate_on_tape(tape: &mut Tape, a: Var, d: &[f64], tau: f64) -> Result<Var> {
    let total: f64 = d.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SkipSample("total demand is zero".into()));
    }
    let dv = tape.leaf(d.to_vec());
    let m = tape.custom(Arc::new(SoftMinPrimitive { tau }), &[a, dv])?;
    let s = tape.sum(m)?;
    tape.scale(s, 1.0 / total)
}

/// `S * op(u / S)`: a unit capped-simplex operator (caps `kappa`) carried to
/// the set scaled by the supply `S`.
pub fn scaled_capped_projection<F>(op: F, u: &[f64], supply: f64, kappa: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if kappa * u.len() as f64 <= 1.0 {
        return Err(Error::InfeasibleSet(format!(
            "zone cap fraction {kappa} times {} zones does not exceed 1",
            u.len()
        )));
    }
    if !(supply > 0.0) {
        return Err(invalid(format!("supply must be positive, got {supply}")));
    }
    let unit: Vec<f64> = u.iter().map(|v| v / supply).collect();
    Ok(op(&unit)?.into_iter().map(|v| v * supply).collect())
}

/// Mean and standard deviation used to normalize features on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| invalid("no rows to fit the scaler on"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = std
            .into_iter()
            .map(|s| if s > 1e-24 { s.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::baselines::project_capped_simplex;

    #[test]
    fn drift_examples() {
        assert_eq!(drift_weights(&[0.3, 0.7], &[1.0, 1.0]).unwrap(), vec![0.3, 0.7]);
        assert_eq!(
            drift_weights(&[1.0, 0.0, 0.0], &[1.3, 0.2, 5.0]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        let w = drift_weights(&[0.5, 0.5], &[2.0, 1.0]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pseudo_huber_examples() {
        assert_eq!(pseudo_huber_turnover(&[0.2, 0.8], &[0.2, 0.8], 1e-3), 0.0);
        let v = pseudo_huber_turnover(&[3.0, 4.0], &[0.0, 0.0], 1.0);
        assert!((v - 5.285_383_3).abs() < 1e-7, "{v}");
        let v = pseudo_huber_turnover(&[0.3, -0.2], &[0.0, 0.0], 1e-6);
        assert!((v - 0.5).abs() < 1e-5);
    }

    #[test]
    fn sharpe_examples() {
        let spec = SharpeSpec {
            gamma: 0.0,
            delta: 1e-3,
            excess: false,
        };
        let w = vec![vec![1.0, 0.0]; 3];
        let y = vec![vec![1.1, 1.0], vec![0.9, 1.0]];
        let s = sharpe_objective(&w, &y, &spec).unwrap();
        assert!((s - 10.0).abs() < 1e-5, "{s}");

        let spec = SharpeSpec {
            gamma: 0.7,
            delta: 1e-3,
            excess: false,
        };
        let w = vec![vec![0.5, 0.5]; 4];
        let y = vec![vec![1.0, 1.0]; 3];
        let r = net_returns(&w, &y, &spec).unwrap();
        assert!(r.iter().all(|v| *v == 1.0));
        assert!(sharpe_objective(&w[..2], &y[..1], &spec).is_err());
    }

    #[test]
    fn gross_equals_net_without_costs() {
        let w = vec![vec![0.2, 0.8], vec![0.6, 0.4], vec![0.5, 0.5], vec![0.1, 0.9]];
        let y = vec![vec![1.02, 0.97], vec![0.99, 1.05], vec![1.01, 1.0]];
        let net = SharpeSpec {
            gamma: 0.0,
            delta: 1e-3,
            excess: true,
        };
        let gross: Vec<f64> = (0..3)
            .map(|t| w[t].iter().zip(&y[t]).map(|(a, b)| a * b).sum::<f64>() - 1.0)
            .collect();
        assert_eq!(sharpe_objective(&w, &y, &net).unwrap(), sharpe_ratio(&gross));
    }

    #[test]
    fn sharpe_tape_matches_plain_and_gradients() {
        let w = vec![
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.3, 0.1],
            vec![0.3, 0.3, 0.4],
            vec![0.1, 0.5, 0.4],
        ];
        let y = vec![vec![1.02, 0.97, 1.01], vec![0.99, 1.05, 0.98], vec![1.01, 1.0, 1.03]];
        let spec = SharpeSpec {
            gamma: 0.2,
            delta: 1e-2,
            excess: true,
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = w.iter().map(|v| tape.leaf(v.clone())).collect();
        let s = sharpe_on_tape(&mut tape, &vars, &y, &spec).unwrap();
        let plain = sharpe_objective(&w, &y, &spec).unwrap();
        assert!((tape.scalar(s) - plain).abs() < 1e-12 * plain.abs().max(1.0));

        let flat: Vec<f64> = w.concat();
        let err = grad_check(
            |t, x| {
                let vars: Vec<Var> = (0..4).map(|k| t.slice(x, 3 * k, 3)).collect::<Result<_>>()?;
                sharpe_on_tape(t, &vars, &y, &spec)
            },
            &flat,
            1e-7,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn softmin_examples() {
        assert!((softmin(0.7, 0.7, 0.3) - (0.7 - 0.3 * 2f64.ln())).abs() < 1e-15);
        assert!((softmin(1.0, 2.0, 1e-6) - 1.0).abs() < 1e-5);
        assert!((softmin(1.0, 2.0, 1.0) - 0.686_738_312_481_777).abs() < 1e-14);
        assert!(softmin(3.0, -2.0, 0.5) <= -2.0);
    }

    #[test]
    fn served_rate_examples() {
        assert_eq!(
            served_rate(&[3.0, 2.0], &[1.0, 2.0], 0.1, ServedMode::Hard).unwrap(),
            1.0
        );
        assert_eq!(
            served_rate(&[0.0, 0.0], &[1.0, 2.0], 0.1, ServedMode::Hard).unwrap(),
            0.0
        );
        assert_eq!(
            served_rate(&[2.0, 0.0], &[1.0, 1.0], 0.1, ServedMode::Hard).unwrap(),
            0.5
        );
        assert!(matches!(
            served_rate(&[1.0], &[0.0], 0.1, ServedMode::Hard),
            Err(Error::SkipSample(_))
        ));
        let soft = served_rate(&[0.4, 1.3], &[1.0, 1.0], 0.2, ServedMode::Soft).unwrap();
        let hard = served_rate(&[0.4, 1.3], &[1.0, 1.0], 0.2, ServedMode::Hard).unwrap();
        assert!(soft <= hard && hard <= 1.0);
    }

    #[test]
    fn served_rate_tape_gradient() {
        let d = [1.0, 2.0, 0.5];
        let err = grad_check(|t, a| served_rate_on_tape(t, a, &d, 0.3), &[0.8, 2.5, 0.1], 1e-6).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn scaled_projection_examples() {
        let op = |u: &[f64]| project_capped_simplex(u, &[0.5; 3]);
        let a = scaled_capped_projection(op, &[10.0, 0.0, 0.0], 10.0, 0.5).unwrap();
        assert!(a.iter().zip([5.0, 2.5, 2.5]).all(|(x, y)| (x - y).abs() < 1e-10));
        let u = [0.7, 0.1, 0.4];
        assert_eq!(scaled_capped_projection(op, &u, 1.0, 0.5).unwrap(), op(&u).unwrap());
        let c = 3.7;
        let scaled: Vec<f64> = u.iter().map(|v| v * c).collect();
        let lhs = scaled_capped_projection(op, &scaled, 2.0 * c, 0.5).unwrap();
        let rhs = scaled_capped_projection(op, &u, 2.0, 0.5).unwrap();
        assert!(lhs.iter().zip(&rhs).all(|(x, y)| (x - c * y).abs() < 1e-12));
        assert!(matches!(
            scaled_capped_projection(op, &u, 1.0, 1.0 / 3.0),
            Err(Error::InfeasibleSet(_))
        ));
    }
}
