//! Tape primitives for the projection layers. Each one forwards to the layer's
//! own forward map and VJP.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{grad_check, Primitive, Tape, Var};
use crate::baselines::{
    hardnet_capped, hardnet_capped_vjp, hardnet_correct, hardnet_vjp, orth_projection_vjp, project_capped_simplex,
    softmax_temp, softmax_vjp, AffineBounds,
};
use crate::error::{invalid, Result};
use crate::radial::{RadialContraction, SoftRadialLayer};
use crate::sets::{CappedSimplex, ConvexSet};

/// Gradient-check tolerance enforced at registration.
pub const REGISTRATION_TOLERANCE: f64 = 1e-5;

fn single<'a>(name: &str, inputs: &[&'a [f64]]) -> Result<&'a [f64]> {
    match inputs {
        [x] => Ok(x),
        _ => Err(invalid(format!("{name} takes exactly one input, got {}", inputs.len()))),
    }
}

#[derive(Clone, Debug)]
pub struct SoftRadialPrimitive {
    pub layer: SoftRadialLayer,
}

impl Primitive for SoftRadialPrimitive {
    fn name(&self) -> &str {
        "soft_radial"
    }

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        self.layer.soft_project(single(self.name(), inputs)?)
    }

    fn vjp(&self, inputs: &[&[f64]], _output: &[f64], cotangent: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.layer.vjp(single(self.name(), inputs)?, cotangent)?])
    }
}

#[derive(Clone, Debug)]
pub struct CappedSimplexProjectionPrimitive {
    pub caps: Vec<f64>,
}

impl Primitive for CappedSimplexProjectionPrimitive {
    fn name(&self) -> &str {
        "capped_simplex_projection"
    }

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        project_capped_simplex(single(self.name(), inputs)?, &self.caps)
    }

    fn vjp(&self, inputs: &[&[f64]], _output: &[f64], cotangent: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![orth_projection_vjp(
            single(self.name(), inputs)?,
            &self.caps,
            cotangent,
        )?])
    }
}

#[derive(Clone, Debug)]
pub struct SoftmaxPrimitive {
    pub tau: f64,
}

impl Primitive for SoftmaxPrimitive {
    fn name(&self) -> &str {
        "softmax"
    }

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        softmax_temp(single(self.name(), inputs)?, self.tau)
    }

    fn vjp(&self, _inputs: &[&[f64]], output: &[f64], cotangent: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![softmax_vjp(output, self.tau, cotangent)])
    }
}

/// HardNet correction repeated `steps` times. With `hyperplane` set the input
/// is first mapped onto `{1^T w = 1}` (the capped-simplex instantiation).
#[derive(Clone, Debug)]
pub struct HardNetPrimitive {
    pub bounds: AffineBounds,
    pub steps: usize,
    pub hyperplane: bool,
}

impl HardNetPrimitive {
    pub fn capped(caps: &[f64], steps: usize) -> Result<Self> {
        Ok(Self {
            bounds: AffineBounds::capped_box(caps)?,
            steps,
            hyperplane: true,
        })
    }
}

impl Primitive for HardNetPrimitive {
    fn name(&self) -> &str {
        "hardnet"
    }

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let u = single(self.name(), inputs)?;
        if self.hyperplane {
            return hardnet_capped(u, &self.bounds, self.steps);
        }
        let mut w = u.to_vec();
        for _ in 0..self.steps {
            w = hardnet_correct(&w, &self.bounds)?;
        }
        Ok(w)
    }

    fn vjp(&self, inputs: &[&[f64]], _output: &[f64], cotangent: &[f64]) -> Result<Vec<Vec<f64>>> {
        let u = single(self.name(), inputs)?;
        if self.hyperplane {
            return Ok(vec![hardnet_capped_vjp(u, &self.bounds, self.steps, cotangent)?]);
        }
        let mut iterates = vec![u.to_vec()];
        for _ in 0..self.steps {
            let next = hardnet_correct(iterates.last().expect("nonempty"), &self.bounds)?;
            iterates.push(next);
        }
        let mut cot = cotangent.to_vec();
        for w in iterates[..self.steps].iter().rev() {
            cot = hardnet_vjp(w, &self.bounds, &cot)?;
        }
        Ok(vec![cot])
    }
}

/// Max relative gradient error of `x -> sum_i k_i prim(x)_i` with fixed,
/// distinct weights `k_i`.
pub fn check_primitive(prim: &Arc<dyn Primitive>, x: &[f64], h: f64) -> Result<f64> {
    let out_len = prim.forward(&[x])?.len();
    let weights: Vec<f64> = (0..out_len).map(|i| 1.0 + 0.37 * i as f64).collect();
    grad_check(
        |tape: &mut Tape, v: Var| {
            let y = tape.custom(prim.clone(), &[v])?;
            let k = tape.leaf(weights.clone());
            tape.dot(y, k)
        },
        x,
        h,
    )
}

/// Named primitives, each gradient-checked when it is first registered.
#[derive(Default)]
pub struct PrimitiveRegistry {
    entries: BTreeMap<String, Arc<dyn Primitive>>,
}

impl std::fmt::Debug for PrimitiveRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl PrimitiveRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `prim` after a gradient check at `probe`. Returns `false`
    /// without checking when the name is already taken.
    pub fn register(&mut self, prim: Arc<dyn Primitive>, probe: &[f64]) -> Result<bool> {
        if self.entries.contains_key(prim.name()) {
            return Ok(false);
        }
        let err = check_primitive(&prim, probe, 1e-6)?;
        if !(err <= REGISTRATION_TOLERANCE) {
            return Err(invalid(format!(
                "primitive '{}' failed its gradient check (relative error {err:e})",
                prim.name()
            )));
        }
        self.entries.insert(prim.name().to_string(), prim);
        Ok(true)
    }

    /// Registers the soft-radial layer, the exact capped-simplex projection,
    /// softmax and HardNet on a 3-asset capped simplex (caps 0.6). Calling it
    /// again is a no-op. Returns the number of newly added primitives.
    pub fn register_projection_primitives(&mut self) -> Result<usize> {
        let caps = vec![0.6; 3];
        let simplex = ConvexSet::capped_simplex(CappedSimplex::new(caps.clone())?);
        let layer = SoftRadialLayer::new(simplex, RadialContraction::default());
        let probe = [0.9, 0.15, -0.2];
        let prims: Vec<Arc<dyn Primitive>> = vec![
            Arc::new(SoftRadialPrimitive { layer }),
            Arc::new(CappedSimplexProjectionPrimitive { caps: caps.clone() }),
            Arc::new(SoftmaxPrimitive { tau: 1.0 }),
            Arc::new(HardNetPrimitive::capped(&caps, 1)?),
        ];
        let mut added = 0;
        for p in prims {
            if self.register(p, &probe)? {
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Primitive>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
