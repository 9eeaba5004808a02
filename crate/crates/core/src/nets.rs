//! Multilayer perceptron on the tape, Adam and scheduled SGD, and a text
//! checkpoint format.
//!
//! Checkpoint layout (UTF-8, one item per line):
//!
//! ```text
//! radialfeas-checkpoint v1
//! activation relu
//! sizes 4 16 3
//! seed 7
//! tensor w0 16 4
//! values <16*4 numbers, row-major, space separated>
//! tensor b0 16 1
//! values <16 numbers>
//! ...
//! ```
//!
//! Lines starting with `#` are comments and may appear anywhere.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bitwise exact.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Error, Result};

pub const CHECKPOINT_HEADER: &str = "radialfeas-checkpoint v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    seed: u64,
    /// Row-major `(out x in)` weights, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Parameter nodes of one [`Mlp`] on a tape.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl MlpVars {
    /// Nodes in the order of [`Mlp::parameters`].
    pub fn params(&self) -> Vec<Var> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [*w, *b])
            .collect()
    }
}

impl Mlp {
    /// Glorot-uniform weights `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// drawn from ChaCha8 seeded with `seed`; zero biases.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!(
                "layer sizes must be >= 2 positive entries, got {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            seed,
            weights,
            biases,
        })
    }

    /// Builds a net from explicit `[w0, b0, w1, b1, ...]`.
    pub fn from_parameters(sizes: &[usize], activation: Activation, params: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Self::new(sizes, activation, 0)?;
        net.set_parameters(params)?;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn parameters(&self) -> Vec<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }

    pub fn set_parameters(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        let layers = self.weights.len();
        if params.len() != 2 * layers {
            return Err(invalid(format!(
                "expected {} tensors, got {}",
                2 * layers,
                params.len()
            )));
        }
        for (k, p) in params.iter().enumerate() {
            let want = if k % 2 == 0 {
                self.sizes[k / 2] * self.sizes[k / 2 + 1]
            } else {
                self.sizes[k / 2 + 1]
            };
            if p.len() != want {
                return Err(invalid(format!("tensor {k} has {} entries, expected {want}", p.len())));
            }
        }
        let mut it = params.into_iter();
        for l in 0..layers {
            self.weights[l] = it.next().expect("length checked");
            self.biases[l] = it.next().expect("length checked");
        }
        Ok(())
    }

    /// Places the parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Result<MlpVars> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in self.sizes.windows(2).enumerate() {
            weights.push(tape.matrix(pair[1], pair[0], self.weights[l].clone())?);
            biases.push(tape.leaf(self.biases[l].clone()));
        }
        Ok(MlpVars { weights, biases })
    }

    pub fn forward(&self, tape: &mut Tape, vars: &MlpVars, z: Var) -> Result<Var> {
        self.forward_inner(tape, vars, z, None)
    }

    /// Forward pass with inverted dropout of rate `p` on hidden activations.
    pub fn forward_with_dropout(
        &self,
        tape: &mut Tape,
        vars: &MlpVars,
        z: Var,
        p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(format!("dropout rate must lie in [0, 1), got {p}")));
        }
        if p == 0.0 {
            return self.forward_inner(tape, vars, z, None);
        }
        self.forward_inner(tape, vars, z, Some((p, rng)))
    }

    fn forward_inner(
        &self,
        tape: &mut Tape,
        vars: &MlpVars,
        z: Var,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<Var> {
        let n = tape.value(z).len();
        if n != self.input_dim() {
            return Err(invalid(format!("input dimension {n} != {}", self.input_dim())));
        }
        let last = vars.weights.len() - 1;
        let mut h = z;
        for l in 0..=last {
            h = tape.affine(vars.weights[l], h, vars.biases[l])?;
            if l < last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h)?,
                    Activation::Tanh => tape.tanh(h)?,
                };
                if let Some((p, rng)) = dropout.as_mut() {
                    let keep = 1.0 - *p;
                    let mask: Vec<f64> = (0..self.sizes[l + 1])
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let m = tape.leaf(mask);
                    h = tape.mul(h, m)?;
                }
            }
        }
        Ok(h)
    }

    /// Forward pass without recording gradients.
    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let x = tape.leaf(z.to_vec());
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(y).to_vec())
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_HEADER);
        out.push('\n');
        out.push_str(&format!("activation {}\n", self.activation));
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("sizes {}\n", sizes.join(" ")));
        out.push_str(&format!("seed {}\n", self.seed));
        for (l, pair) in self.sizes.windows(2).enumerate() {
            write_tensor(&mut out, &format!("w{l}"), pair[1], pair[0], &self.weights[l]);
            write_tensor(&mut out, &format!("b{l}"), pair[1], 1, &self.biases[l]);
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Data(format!("checkpoint: {msg}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad("missing or unsupported header"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected '{key}' line")))
        };
        let activation: Activation = field("activation")?.parse()?;
        let sizes: Vec<usize> = field("sizes")?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad layer size")))
            .collect::<Result<_>>()?;
        let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed"))?;
        let mut params = Vec::new();
        loop {
            let Ok(spec) = field("tensor") else { break };
            let parts: Vec<&str> = spec.split_whitespace().collect();
            let [_, rows, cols] = parts[..] else {
                return Err(bad("bad tensor line"));
            };
            let len = rows.parse::<usize>().map_err(|_| bad("bad rows"))?
                * cols.parse::<usize>().map_err(|_| bad("bad cols"))?;
            let values: Vec<f64> = field("values")?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad value")))
                .collect::<Result<_>>()?;
            if values.len() != len {
                return Err(bad("tensor length does not match its shape"));
            }
            params.push(values);
        }
        let mut net = Self::from_parameters(&sizes, activation, params)?;
        net.seed = seed;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

fn write_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    out.push_str(&format!("tensor {name} {rows} {cols}\n"));
    let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    out.push_str("values ");
    out.push_str(&vals.join(" "));
    out.push('\n');
}

fn check_grads(params: &[Vec<f64>], grads: &[Vec<f64>]) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(invalid("gradient shapes do not match parameters"));
    }
    for (k, g) in grads.iter().enumerate() {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of tensor {k}, entry {i} is {}",
                g[i]
            )));
        }
    }
    Ok(())
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &[Vec<f64>]) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8, params)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64, params: &[Vec<f64>]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>]) -> Result<()> {
        check_grads(params, grads)?;
        if params.len() != self.m.len() {
            return Err(invalid("optimizer state does not match parameters"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for i in 0..p.len() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// SGD step-size rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `c / sqrt(T)` for a fixed horizon `T`, the same at every step.
    Horizon {
        c: f64,
        horizon: u64,
    },
    /// `c / sqrt(t + 1)`.
    Diminishing {
        c: f64,
    },
}

impl StepSchedule {
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant(lr) => lr,
            StepSchedule::Horizon { c, horizon } => c / (horizon.max(1) as f64).sqrt(),
            StepSchedule::Diminishing { c } => c / ((t + 1) as f64).sqrt(),
        }
    }
}

/// Plain gradient step with the rate of `schedule` at step `t`.
pub fn sgd_step(params: &mut [Vec<f64>], grads: &[Vec<f64>], t: u64, schedule: StepSchedule) -> Result<()> {
    check_grads(params, grads)?;
    let lr = schedule.rate(t);
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, gi) in p.iter_mut().zip(g) {
            *pi -= lr * gi;
        }
    }
    Ok(())
}
