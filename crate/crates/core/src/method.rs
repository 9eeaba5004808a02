//! Constraint heads mapping a raw network output onto the capped simplex.
//!
//! During training each head is recorded on the tape. At evaluation HardNet
//! and DC3 outputs are additionally passed through the exact projection; the
//! other heads are feasible by construction.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::autodiff::{
    CappedSimplexProjectionPrimitive, HardNetPrimitive, Primitive, SoftRadialPrimitive, SoftmaxPrimitive, Tape, Var,
};
use crate::baselines::{dc3_on_tape, dc3_project, eval_feasibility_wrapper, Dc3Config};
use crate::error::{invalid, Error, Result};
use crate::radial::{RadialContraction, SoftRadialLayer};
use crate::sets::{CappedSimplex, ConvexSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SoftRadial,
    Orthogonal,
    Softmax,
    HardNet,
    Dc3,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SoftRadial,
        Method::Orthogonal,
        Method::Softmax,
        Method::HardNet,
        Method::Dc3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SoftRadial => "soft-radial",
            Method::Orthogonal => "orthogonal",
            Method::Softmax => "softmax",
            Method::HardNet => "hardnet",
            Method::Dc3 => "dc3",
        }
    }

    /// Softmax only reaches the plain simplex; it cannot honor caps below 1.
    pub fn supports_caps(self, caps: &[f64]) -> Result<()> {
        if self == Method::Softmax {
            if let Some((i, c)) = caps.iter().enumerate().find(|(_, c)| **c < 1.0) {
                return Err(invalid(format!(
                    "softmax cannot satisfy the per-coordinate cap w_{} <= {c} (caps below 1 bind); \
                     choose soft-radial, orthogonal, hardnet or dc3",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "soft-radial" | "softradial" | "radial" => Ok(Method::SoftRadial),
            "orthogonal" | "projection" | "orth" => Ok(Method::Orthogonal),
            "softmax" => Ok(Method::Softmax),
            "hardnet" => Ok(Method::HardNet),
            "dc3" => Ok(Method::Dc3),
            other => Err(invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Method-specific hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodConfig {
    pub contraction: RadialContraction,
    pub softmax_tau: f64,
    pub hardnet_steps: usize,
    pub dc3: Dc3Config,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            contraction: RadialContraction::default(),
            softmax_tau: 1.0,
            hardnet_steps: 1,
            dc3: Dc3Config::default(),
        }
    }
}

#[derive(Clone)]
pub struct ConstraintHead {
    method: Method,
    caps: Vec<f64>,
    cfg: MethodConfig,
    prim: Option<Arc<dyn Primitive>>,
}

impl fmt::Debug for ConstraintHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintHead")
            .field("method", &self.method)
            .field("caps", &self.caps)
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl ConstraintHead {
    /// Head onto `{1^T w = 1, 0 <= w <= caps}`. Softmax ignores the caps and
    /// targets the plain simplex; see [`ConstraintHead::feasible_caps`].
    pub fn new(method: Method, caps: Vec<f64>, cfg: MethodConfig) -> Result<Self> {
        let simplex = CappedSimplex::new(caps.clone())?;
        let prim: Option<Arc<dyn Primitive>> = match method {
            Method::SoftRadial => Some(Arc::new(SoftRadialPrimitive {
                layer: SoftRadialLayer::new(ConvexSet::capped_simplex(simplex), cfg.contraction),
            })),
            Method::Orthogonal => Some(Arc::new(CappedSimplexProjectionPrimitive { caps: caps.clone() })),
            Method::Softmax => {
                if !(cfg.softmax_tau > 0.0) {
                    return Err(invalid("softmax temperature must be positive"));
                }
                Some(Arc::new(SoftmaxPrimitive { tau: cfg.softmax_tau }))
            }
            Method::HardNet => Some(Arc::new(HardNetPrimitive::capped(&caps, cfg.hardnet_steps)?)),
            Method::Dc3 => {
                cfg.dc3.validate()?;
                None
            }
        };
        Ok(Self {
            method,
            caps,
            cfg,
            prim,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &MethodConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.caps.len()
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    /// Caps the evaluated output is guaranteed to satisfy.
    pub fn feasible_caps(&self) -> Vec<f64> {
        match self.method {
            Method::Softmax => vec![1.0; self.caps.len()],
            _ => self.caps.clone(),
        }
    }

    /// Training-time head recorded on the tape.
    pub fn apply(&self, tape: &mut Tape, u: Var) -> Result<Var> {
        match &self.prim {
            Some(p) => tape.custom(p.clone(), &[u]),
            None => dc3_on_tape(tape, u, &self.caps, &self.cfg.dc3),
        }
    }

    /// Evaluation-time output, always inside `feasible_caps()`.
    pub fn evaluate(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self.method {
            Method::Dc3 => eval_feasibility_wrapper(&dc3_project(u, &self.caps, &self.cfg.dc3)?, &self.caps),
            Method::HardNet => {
                let p = self.prim.as_ref().expect("hardnet has a primitive");
                eval_feasibility_wrapper(&p.forward(&[u])?, &self.caps)
            }
            _ => self.prim.as_ref().expect("primitive head").forward(&[u]),
        }
    }
}

/// Smallest slack of `w` in `{1^T w = 1, 0 <= w <= caps}`: the minimum over
/// `w_i`, `caps_i - w_i` and `-|1^T w - 1|`. Nonnegative means feasible.
pub fn simplex_margin(w: &[f64], caps: &[f64]) -> f64 {
    let sum_gap = -(w.iter().sum::<f64>() - 1.0).abs();
    w.iter().zip(caps).map(|(x, c)| x.min(c - x)).fold(sum_gap, f64::min)
}
