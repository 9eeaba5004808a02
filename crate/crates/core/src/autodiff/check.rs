use super::{Tape, Var};
use crate::error::{invalid, Result};

/// Largest `|analytic - numeric| / max(1, |numeric|)` over coordinates, where
/// `numeric` is the central difference with step `h`.
///
/// `f` must build a scalar on the tape from the given input node. Near a kink
/// the two sides disagree and the error is large; callers pick smooth points.
pub fn grad_check<F>(f: F, x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let eval = |p: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(p.to_vec());
        let out = f(&mut tape, v)?;
        Ok(tape.scalar(out))
    };
    let mut tape = Tape::new();
    let v = tape.leaf(x.to_vec());
    let out = f(&mut tape, v)?;
    let grads = tape.backward(out)?;
    let analytic = grads.get(v);

    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = eval(&probe)?;
        probe[i] = x[i] - h;
        let minus = eval(&probe)?;
        probe[i] = x[i];
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}
