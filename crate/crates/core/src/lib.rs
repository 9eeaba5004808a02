//! Constrained-output learning with the soft-radial projection.
//!
//! The soft-radial layer maps all of `R^n` onto the interior of a convex set by
//! contracting points along rays that emanate from a fixed interior anchor. Unlike
//! an orthogonal projection it is a homeomorphism, so its Jacobian stays full rank
//! almost everywhere and gradients do not vanish when a candidate lands outside the
//! feasible set.
//!
//! Module map:
//! - [`sets`]: convex geometry (membership, ray/boundary time, gauge and gradient).
//! - [`radial`]: contraction families and the projection layer (forward, Jacobian,
//!   VJP, inverse).
//! - [`baselines`]: softmax, exact capped-simplex projection, HardNet and DC3.
//! - [`autodiff`]: a vector-valued reverse-mode tape with custom primitives.
//! - [`nets`]: MLP, Adam/SGD and checkpoints.
//! - [`method`]: the constraint head used by training tasks.
//! - [`tasks`]: saturation demo, portfolio and dispatch objectives with data.
//! - [`oracles`]: finite differences, bisection and a reference QP projection.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod linalg;
pub mod method;
pub mod nets;
pub mod oracles;
pub mod radial;
pub mod sampling;
pub mod sets;
pub mod tasks;

pub use error::{Error, Result};
pub use radial::{ContractionFamily, RadialContraction, SoftRadialLayer};
pub use sets::ConvexSet;

/// Library version, echoed into every output file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
