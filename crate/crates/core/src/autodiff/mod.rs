//! Reverse-mode automatic differentiation over dense `f64` vectors.
//!
//! A [`Tape`] is an append-only list of nodes. Every operation checks shapes
//! eagerly and records its inputs, so nodes always precede their consumers and
//! the backward sweep is a single pass in reverse insertion order. Cotangents
//! from multiple consumers are summed.
//!
//! There is no broadcasting: scalars are length-1 vectors and must be expanded
//! with [`Tape::broadcast`] before elementwise use. Layers with hand-written
//! derivatives plug in through the [`Primitive`] trait.

mod check;
mod primitives;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use check::grad_check;
pub use primitives::{
    check_primitive, CappedSimplexProjectionPrimitive, HardNetPrimitive, PrimitiveRegistry, SoftRadialPrimitive,
    SoftmaxPrimitive, REGISTRATION_TOLERANCE,
};

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a custom vector-Jacobian product.
///
/// `vjp` must be linear in `cotangent` and return one cotangent per input.
pub trait Primitive: Send + Sync {
    fn name(&self) -> &str;

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>>;

    fn vjp(&self, inputs: &[&[f64]], output: &[f64], cotangent: &[f64]) -> Result<Vec<Vec<f64>>>;
}

enum Op {
    Leaf,
    Affine { w: Var, x: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Shift(Var),
    Powf(Var, f64),
    Sqrt(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    Clamp { x: Var, lo: Vec<f64>, hi: Vec<f64> },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Broadcast(Var),
    Custom { prim: Arc<dyn Primitive>, inputs: Vec<Var> },
}

impl Op {
    fn tag(&self) -> &str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::Shift(_) => "shift",
            Op::Powf(..) => "powf",
            Op::Sqrt(_) => "sqrt",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Dot(..) => "dot",
            Op::Clamp { .. } => "clamp",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Broadcast(_) => "broadcast",
            Op::Custom { prim, .. } => prim.name(),
        }
    }
}

struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<&str> = self.nodes.iter().map(|n| n.op.tag()).collect();
        f.debug_struct("Tape").field("ops", &ops).finish()
    }
}

fn mismatch(op: &'static str, expected: impl fmt::Display, got: impl fmt::Display) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, op });
        Var(self.nodes.len() - 1)
    }

    fn vector(&mut self, value: Vec<f64>, op: Op) -> Var {
        let n = value.len();
        self.push(value, n, 1, op)
    }

    /// Column-vector input (parameter, data or constant).
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.vector(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> Var {
        self.leaf(vec![value])
    }

    /// Row-major matrix input.
    pub fn matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(mismatch("matrix", rows * cols, data.len()));
        }
        Ok(self.push(data, rows, cols, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    fn vec_len(&self, op: &'static str, v: Var) -> Result<usize> {
        let n = &self.nodes[v.0];
        if n.cols != 1 {
            return Err(mismatch(op, "column vector", format!("{}x{} matrix", n.rows, n.cols)));
        }
        Ok(n.rows)
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let la = self.vec_len(op, a)?;
        let lb = self.vec_len(op, b)?;
        if la != lb {
            return Err(mismatch(op, la, lb));
        }
        Ok(la)
    }

    fn scalar_len(&self, op: &'static str, v: Var) -> Result<()> {
        let n = self.vec_len(op, v)?;
        if n != 1 {
            return Err(mismatch(op, 1, n));
        }
        Ok(())
    }

    fn unary(&mut self, op: &'static str, x: Var, f: impl Fn(f64) -> f64, rec: Op) -> Result<Var> {
        self.vec_len(op, x)?;
        let value = self.value(x).iter().map(|v| f(*v)).collect();
        Ok(self.vector(value, rec))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        self.same_len(op, a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.vector(value, rec))
    }

    /// `W x + b` for a row-major matrix node `W`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.shape(w);
        let xn = self.vec_len("affine", x)?;
        let bn = self.vec_len("affine", b)?;
        if xn != cols {
            return Err(mismatch("affine", format!("input of length {cols}"), xn));
        }
        if bn != rows {
            return Err(mismatch("affine", format!("bias of length {rows}"), bn));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let value = (0..rows)
            .map(|r| {
                let row = &wv[r * cols..(r + 1) * cols];
                row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>() + self.value(b)[r]
            })
            .collect();
        Ok(self.vector(value, Op::Affine { w, x, b }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary("neg", x, |v| -v, Op::Neg(x))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.unary("scale", x, |v| v * s, Op::Scale(x, s))
    }

    /// Addition of a constant.
    pub fn shift(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary("shift", x, |v| v + c, Op::Shift(x))
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Result<Var> {
        self.unary("powf", x, |v| v.powf(p), Op::Powf(x, p))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary("sqrt", x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary("log", x, f64::ln, Op::Log(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, f64::exp, Op::Exp(x))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.vec_len("sum", x)?;
        let s = self.value(x).iter().sum();
        Ok(self.vector(vec![s], Op::Sum(x)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.vec_len("mean", x)?;
        if n == 0 {
            return Err(mismatch("mean", "nonempty vector", 0));
        }
        let s = self.value(x).iter().sum::<f64>() / n as f64;
        Ok(self.vector(vec![s], Op::Mean(x)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("dot", a, b)?;
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.vector(vec![s], Op::Dot(a, b)))
    }

    /// Elementwise clamp to `[lo_i, hi_i]`; the cotangent passes only where
    /// `lo_i < x_i < hi_i`.
    pub fn clamp(&mut self, x: Var, lo: &[f64], hi: &[f64]) -> Result<Var> {
        let n = self.vec_len("clamp", x)?;
        if lo.len() != n || hi.len() != n {
            return Err(mismatch(
                "clamp",
                n,
                format!("bounds of length {}/{}", lo.len(), hi.len()),
            ));
        }
        let value = self
            .value(x)
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (l, h))| v.max(*l).min(*h))
            .collect();
        Ok(self.vector(
            value,
            Op::Clamp {
                x,
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            },
        ))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut value = Vec::new();
        for &p in parts {
            self.vec_len("concat", p)?;
            value.extend_from_slice(self.value(p));
        }
        Ok(self.vector(value, Op::Concat(parts.to_vec())))
    }

    /// `x[start..start + len]`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vec_len("slice", x)?;
        if start + len > n {
            return Err(mismatch(
                "slice",
                format!("range within {n}"),
                format!("{start}..{}", start + len),
            ));
        }
        let value = self.value(x)[start..start + len].to_vec();
        Ok(self.vector(value, Op::Slice { x, start }))
    }

    /// Expands a length-1 node to length `n`.
    pub fn broadcast(&mut self, x: Var, n: usize) -> Result<Var> {
        self.scalar_len("broadcast", x)?;
        let v = self.scalar(x);
        Ok(self.vector(vec![v; n], Op::Broadcast(x)))
    }

    /// Records a custom primitive; every input must be a column vector.
    pub fn custom(&mut self, prim: Arc<dyn Primitive>, inputs: &[Var]) -> Result<Var> {
        for &i in inputs {
            self.vec_len("custom", i)?;
        }
        let value = {
            let slices: Vec<&[f64]> = inputs.iter().map(|v| self.value(*v)).collect();
            prim.forward(&slices)?
        };
        Ok(self.vector(
            value,
            Op::Custom {
                prim,
                inputs: inputs.to_vec(),
            },
        ))
    }

    /// Gradients of a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.scalar_len("backward", output)?;
        self.backward_with(output, vec![1.0])
    }

    /// Pulls `cotangent` back from `output` to every node.
    pub fn backward_with(&self, output: Var, cotangent: Vec<f64>) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if cotangent.len() != out.value.len() {
            return Err(mismatch("backward", out.value.len(), cotangent.len()));
        }
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(output.0 + 1);
        grads.extend(self.nodes[..=output.0].iter().map(|n| vec![0.0; n.value.len()]));
        let mut touched = vec![false; output.0 + 1];
        grads[output.0] = cotangent;
        touched[output.0] = true;

        for i in (0..=output.0).rev() {
            if !touched[i] {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            self.pull_back(node, &g, &mut grads, &mut touched)?;
            grads[i] = g;
        }
        Ok(Gradients { grads })
    }

    fn pull_back(&self, node: &Node, g: &[f64], grads: &mut [Vec<f64>], touched: &mut [bool]) -> Result<()> {
        let mut acc = |v: Var, f: &mut dyn FnMut(usize) -> f64| {
            touched[v.0] = true;
            for (k, slot) in grads[v.0].iter_mut().enumerate() {
                *slot += f(k);
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Affine { w, x, b } => {
                let (rows, cols) = self.shape(*w);
                let wv = self.value(*w);
                let xv = self.value(*x);
                acc(*w, &mut |k| g[k / cols] * xv[k % cols]);
                acc(*x, &mut |c| (0..rows).map(|r| wv[r * cols + c] * g[r]).sum());
                acc(*b, &mut |r| g[r]);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |k| if xv[k] > 0.0 { g[k] } else { 0.0 });
            }
            Op::Tanh(x) => acc(*x, &mut |k| g[k] * (1.0 - y[k] * y[k])),
            Op::Add(a, b) => {
                acc(*a, &mut |k| g[k]);
                acc(*b, &mut |k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |k| g[k]);
                acc(*b, &mut |k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |k| g[k] * bv[k]);
                acc(*b, &mut |k| g[k] * av[k]);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |k| g[k] / bv[k]);
                acc(*b, &mut |k| -g[k] * av[k] / (bv[k] * bv[k]));
            }
            Op::Neg(x) => acc(*x, &mut |k| -g[k]),
            Op::Scale(x, s) => acc(*x, &mut |k| g[k] * s),
            Op::Shift(x) => acc(*x, &mut |k| g[k]),
            Op::Powf(x, p) => {
                let xv = self.value(*x);
                acc(*x, &mut |k| g[k] * p * xv[k].powf(p - 1.0));
            }
            Op::Sqrt(x) => acc(*x, &mut |k| g[k] / (2.0 * y[k])),
            Op::Log(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |k| g[k] / xv[k]);
            }
            Op::Exp(x) => acc(*x, &mut |k| g[k] * y[k]),
            Op::Sum(x) => acc(*x, &mut |_| g[0]),
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                acc(*x, &mut |_| g[0] / n);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |k| g[0] * bv[k]);
                acc(*b, &mut |k| g[0] * av[k]);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                acc(*x, &mut |k| if xv[k] > lo[k] && xv[k] < hi[k] { g[k] } else { 0.0 });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    acc(*p, &mut |k| g[offset + k]);
                    offset += len;
                }
            }
            Op::Slice { x, start } => {
                let len = g.len();
                acc(*x, &mut |k| {
                    if k >= *start && k < start + len {
                        g[k - start]
                    } else {
                        0.0
                    }
                });
            }
            Op::Broadcast(x) => {
                let s: f64 = g.iter().sum();
                acc(*x, &mut |_| s);
            }
            Op::Custom { prim, inputs } => {
                let slices: Vec<&[f64]> = inputs.iter().map(|v| self.value(*v)).collect();
                let cots = prim.vjp(&slices, y, g)?;
                if cots.len() != inputs.len() {
                    return Err(mismatch("custom vjp", inputs.len(), cots.len()));
                }
                for ((v, c), s) in inputs.iter().zip(&cots).zip(&slices) {
                    if c.len() != s.len() {
                        return Err(mismatch("custom vjp", s.len(), c.len()));
                    }
                    acc(*v, &mut |k| c[k]);
                }
            }
        }
        Ok(())
    }
}

/// Per-node gradients produced by a backward sweep.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient with respect to `v` (zeros when `v` does not influence the output
    /// or was created after it).
    pub fn get(&self, v: Var) -> &[f64] {
        self.grads.get(v.0).map_or(&[], Vec::as_slice)
    }
}
