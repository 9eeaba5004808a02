//! Two-dimensional saturation demo on the box `[-1, 1]^2`.
//!
//! Gradient descent on `|Proj(u) - x*|^2` starting outside the box. With the
//! orthogonal projection (a clamp) the candidate stalls as soon as the
//! cotangent is normal to the active face; the soft-radial layer keeps a
//! full-rank Jacobian and moves on.

use crate::error::{invalid, Result};
use crate::linalg::{norm_sq, sub};
use crate::method::Method;
use crate::radial::{ContractionFamily, RadialContraction, SoftRadialLayer};
use crate::sets::{ConvexSet, Polytope};

#[derive(Clone, Debug, PartialEq)]
pub struct Toy2dConfig {
    /// Half-width of the box centered at the origin (also the anchor).
    pub half_width: f64,
    pub target: [f64; 2],
    pub init: [f64; 2],
    pub steps: usize,
    pub lr: f64,
    pub contraction: RadialContraction,
}

impl Default for Toy2dConfig {
    /// Exterior start at the height of a target near the right face, so the
    /// clamp's cotangent at step 0 is purely normal to that face.
    fn default() -> Self {
        Self {
            half_width: 1.0,
            target: [0.9, 0.5],
            init: [3.0, 0.5],
            steps: 500,
            lr: 0.05,
            contraction: RadialContraction::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub u: [f64; 2],
    pub p: [f64; 2],
    pub loss: f64,
}

fn box_set(half_width: f64) -> Result<ConvexSet> {
    let h = half_width;
    ConvexSet::polytope(Polytope::boxed(&[-h, -h], &[h, h])?, vec![0.0, 0.0])
}

struct Operator {
    method: Method,
    half_width: f64,
    layer: SoftRadialLayer,
}

impl Operator {
    fn new(cfg: &Toy2dConfig, method: Method) -> Result<Self> {
        if !matches!(method, Method::SoftRadial | Method::Orthogonal) {
            return Err(invalid(format!(
                "the 2D demo supports soft-radial and orthogonal, not {method}"
            )));
        }
        Ok(Self {
            method,
            half_width: cfg.half_width,
            layer: SoftRadialLayer::new(box_set(cfg.half_width)?, cfg.contraction),
        })
    }

    fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        let h = self.half_width;
        match self.method {
            Method::SoftRadial => self.layer.soft_project(u),
            _ => Ok(u.iter().map(|v| v.clamp(-h, h)).collect()),
        }
    }

    fn vjp(&self, u: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let h = self.half_width;
        match self.method {
            Method::SoftRadial => self.layer.vjp(u, g),
            _ => Ok(u
                .iter()
                .zip(g)
                .map(|(v, gi)| if v.abs() < h { *gi } else { 0.0 })
                .collect()),
        }
    }

    fn loss_and_grad(&self, u: &[f64], target: &[f64]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let p = self.project(u)?;
        let r = sub(&p, target);
        let cot: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let grad = self.vjp(u, &cot)?;
        Ok((p, norm_sq(&r), grad))
    }
}

fn check(cfg: &Toy2dConfig) -> Result<()> {
    if !(cfg.half_width > 0.0) || !(cfg.lr > 0.0) {
        return Err(invalid("box half-width and learning rate must be positive"));
    }
    if cfg.target.iter().any(|t| !(t.abs() <= cfg.half_width)) {
        return Err(invalid(format!("target {:?} lies outside the box", cfg.target)));
    }
    Ok(())
}

/// Gradient of the loss at the initial point.
pub fn first_step_gradient(cfg: &Toy2dConfig, method: Method) -> Result<Vec<f64>> {
    check(cfg)?;
    let op = Operator::new(cfg, method)?;
    Ok(op.loss_and_grad(&cfg.init, &cfg.target)?.2)
}

/// Full trajectory, `steps + 1` points including the start.
pub fn run_toy2d(cfg: &Toy2dConfig, method: Method) -> Result<Vec<TrajectoryPoint>> {
    check(cfg)?;
    let op = Operator::new(cfg, method)?;
    let mut u = cfg.init.to_vec();
    let mut out = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let (p, loss, grad) = op.loss_and_grad(&u, &cfg.target)?;
        out.push(TrajectoryPoint {
            step,
            u: [u[0], u[1]],
            p: [p[0], p[1]],
            loss,
        });
        if step < cfg.steps {
            for (ui, gi) in u.iter_mut().zip(&grad) {
                *ui -= cfg.lr * gi;
            }
        }
    }
    Ok(out)
}

pub const WARP_LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const WARP_EPSILONS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Clone, Debug, PartialEq)]
pub struct WarpSample {
    pub family: ContractionFamily,
    pub lambda: f64,
    pub epsilon: f64,
    pub u: [f64; 2],
    pub p: [f64; 2],
}

/// Images of a square grid `{-extent, -extent + spacing, ..., extent}^2` under
/// the soft-radial layer for every family, lambda and epsilon in the sweep.
pub fn warp_grid(half_width: f64, extent: f64, spacing: f64) -> Result<Vec<WarpSample>> {
    if !(spacing > 0.0 && extent > 0.0) {
        return Err(invalid("grid extent and spacing must be positive"));
    }
    let k = (2.0 * extent / spacing).round() as usize;
    let axis: Vec<f64> = (0..=k).map(|i| -extent + i as f64 * spacing).collect();
    let set = box_set(half_width)?;
    let mut out = Vec::new();
    for family in ContractionFamily::ALL {
        for &lambda in &WARP_LAMBDAS {
            for &epsilon in &WARP_EPSILONS {
                let layer = SoftRadialLayer::new(set.clone(), RadialContraction::new(family, epsilon, lambda)?);
                for &x in &axis {
                    for &y in &axis {
                        let p = layer.soft_project(&[x, y])?;
                        out.push(WarpSample {
                            family,
                            lambda,
                            epsilon,
                            u: [x, y],
                            p: [p[0], p[1]],
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}
