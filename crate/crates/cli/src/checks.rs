//! Invariant checks shared by `verify`, `oracle` and the acceptance suite.
//!
//! Each check samples its own seeded instances and returns one
//! [`OracleReport`] per quantity, holding the worst case seen.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radialfeas::autodiff::{check_primitive, grad_check, Primitive, PrimitiveRegistry, Tape};
use radialfeas::baselines::{
    dc3_project, dc3_trace, eval_feasibility_wrapper, hardnet_capped, orth_projection_vjp, project_capped_simplex,
    AffineBounds, Dc3Config,
};
use radialfeas::linalg::norm;
use radialfeas::method::{simplex_margin, ConstraintHead, Method, MethodConfig};
use radialfeas::nets::{Activation, AdamState, Mlp};
use radialfeas::oracles::{bisect_boundary, fd_gradient, fd_jacobian, qp_projection_oracle, OracleReport};
use radialfeas::sampling::{capped_instance, gaussian, point_at_fraction, random_set, unit_direction, GeometryKind};
use radialfeas::sets::{Ball, CappedSimplex};
use radialfeas::tasks::toy2d::{run_toy2d, Toy2dConfig};
use radialfeas::tasks::{sharpe_on_tape, SharpeSpec};
use radialfeas::{ContractionFamily, ConvexSet, RadialContraction, Result, SoftRadialLayer};

/// Jacobian under test; [`analytic_jacobian`] in normal use.
pub type JacobianFn = dyn Fn(&SoftRadialLayer, &[f64]) -> Result<DMatrix<f64>> + Sync;

pub fn analytic_jacobian(layer: &SoftRadialLayer, u: &[f64]) -> Result<DMatrix<f64>> {
    Ok(layer.jacobian(u)?.matrix)
}

/// Passes when `value >= bound` (or `>` when `strict`).
pub fn lower_bound_report(quantity: impl Into<String>, value: f64, bound: f64, strict: bool) -> OracleReport {
    let pass = if strict { value > bound } else { value >= bound };
    let shortfall = if pass { 0.0 } else { (bound - value).abs() };
    OracleReport {
        quantity: quantity.into(),
        analytic: value,
        oracle: bound,
        abs_err: shortfall,
        rel_err: shortfall,
        tolerance: 0.0,
        pass,
    }
}

/// Relative error `|a - o| / |o|`, for quantities whose scale is below 1.
pub fn relative_report(quantity: impl Into<String>, analytic: f64, oracle: f64, tolerance: f64) -> OracleReport {
    let abs_err = (analytic - oracle).abs();
    let rel_err = abs_err / oracle.abs();
    OracleReport {
        quantity: quantity.into(),
        analytic,
        oracle,
        abs_err,
        rel_err,
        tolerance,
        pass: rel_err <= tolerance,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn layer(set: ConvexSet, family: ContractionFamily) -> Result<SoftRadialLayer> {
    Ok(SoftRadialLayer::new(set, RadialContraction::new(family, 0.1, 1.0)?))
}

/// Closed-form boundary times against bisection for polytopes and balls.
pub fn geometry_exactness(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for kind in [GeometryKind::Polytope, GeometryKind::Ball] {
        let mut worst = 0.0f64;
        for _ in 0..count {
            let set = random_set(kind, &mut rng)?;
            let lo = rng.random_range(0.05..4.0);
            let u = point_at_fraction(&set, &mut rng, lo..lo + 0.5);
            let exact = set.ray_boundary_time(&u)?;
            let oracle = bisect_boundary(&set, &u, 200)?;
            worst = worst.max((exact - oracle).abs() / oracle);
        }
        out.push(OracleReport::error_only(
            format!("boundary_time_rel_err/{kind}"),
            worst,
            1e-10,
        ));
    }
    Ok(out)
}

/// Orthonormal basis of the sum-zero hyperplane (Helmert contrasts).
fn hull_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n - 1, |r, c| {
        let k = (c + 1) as f64;
        let scale = 1.0 / (k * (k + 1.0)).sqrt();
        if r <= c {
            scale
        } else if r == c + 1 {
            -k * scale
        } else {
            0.0
        }
    })
}

/// Distance from the anchor beyond which the saturating families are flat in
/// floating point: `r'` underflows or `r` reaches its clamp.
pub const CONDITIONED_RADIUS: f64 = 2.0;

/// Jacobian against central differences and its smallest singular value
/// (restricted to the hull for the capped simplex), skipping points within
/// `1e-4` of a kink. The singular value is taken within [`CONDITIONED_RADIUS`].
pub fn jacobian_correctness(count: usize, seed: u64, jacobian: &JacobianFn) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for kind in GeometryKind::ALL {
        for family in ContractionFamily::ALL {
            let mut worst = 0.0f64;
            let mut min_sv = f64::INFINITY;
            let mut sampled = 0;
            while sampled < count {
                let l = layer(random_set(kind, &mut rng)?, family)?;
                let u = point_at_fraction(l.set(), &mut rng, 0.05..4.0);
                if l.set().kink_distance(&u)? <= 1e-4 {
                    continue;
                }
                sampled += 1;
                let j = jacobian(&l, &u)?;
                let fd = fd_jacobian(|x| l.soft_project(x).expect("finite input"), &u, 1e-6);
                worst = worst.max((&j - &fd).abs().max() / fd.abs().max().max(1.0));
                let v = unit_direction(l.set(), &mut rng);
                let near = l.set().ray_point(rng.random_range(0.01..CONDITIONED_RADIUS), &v);
                if l.set().kink_distance(&near)? > 1e-4 {
                    let j = jacobian(&l, &near)?;
                    let restricted = if l.set().is_capped_simplex() {
                        &j * hull_basis(l.dim())
                    } else {
                        j
                    };
                    min_sv = min_sv.min(restricted.singular_values().min());
                }
            }
            out.push(OracleReport::error_only(
                format!("jacobian_fd_rel_err/{kind}/{family}"),
                worst,
                1e-5,
            ));
            out.push(lower_bound_report(
                format!("jacobian_min_singular_value/{kind}/{family}"),
                min_sv,
                1e-10,
                false,
            ));
        }
    }
    Ok(out)
}

/// `inverse(p(u)) = u` and `p(inverse(x)) = x`. Inputs stay within
/// [`CONDITIONED_RADIUS`] of the anchor.
pub fn round_trip(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for kind in GeometryKind::ALL {
        for family in ContractionFamily::ALL {
            let (mut worst_u, mut worst_x) = (0.0f64, 0.0f64);
            for _ in 0..count {
                let l = layer(random_set(kind, &mut rng)?, family)?;
                let v = unit_direction(l.set(), &mut rng);
                let u = l.set().ray_point(rng.random_range(0.01..CONDITIONED_RADIUS), &v);
                let back = l.inverse(&l.soft_project(&u)?)?;
                worst_u = worst_u.max(max_abs(&back, &u));
                let x = point_at_fraction(l.set(), &mut rng, 0.0..0.95);
                let again = l.soft_project(&l.inverse(&x)?)?;
                worst_x = worst_x.max(max_abs(&again, &x));
            }
            out.push(OracleReport::error_only(
                format!("round_trip_u/{kind}/{family}"),
                worst_u,
                1e-8,
            ));
            out.push(OracleReport::error_only(
                format!("round_trip_x/{kind}/{family}"),
                worst_x,
                1e-10,
            ));
        }
    }
    Ok(out)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Soft projections of points at log-uniform distances up to `1e6`, every
/// tenth exactly at `1e6`, must all have positive slack.
pub fn strict_feasibility(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for kind in GeometryKind::ALL {
        let mut violations = 0usize;
        let mut min_slack = f64::INFINITY;
        for i in 0..count {
            let family = ContractionFamily::ALL[i % 3];
            let l = layer(random_set(kind, &mut rng)?, family)?;
            let v = unit_direction(l.set(), &mut rng);
            let dist = if i % 10 == 0 {
                1e6
            } else {
                10f64.powf(rng.random_range(-3.0..6.0))
            };
            let p = l.soft_project(&l.set().ray_point(dist, &v))?;
            let slack = l.set().slack(&p);
            let on_hull = !l.set().is_capped_simplex() || (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
            if !(slack > 0.0 && on_hull) {
                violations += 1;
            }
            min_slack = min_slack.min(slack);
        }
        out.push(OracleReport::error_only(
            format!("feasibility_violations/{kind}"),
            violations as f64,
            0.0,
        ));
        out.push(lower_bound_report(format!("min_slack/{kind}"), min_slack, 0.0, true));
    }
    Ok(out)
}

/// Finite-difference gradient norm of `|p(u)|^2` on the unit ball at `t e_1`
/// against `4 t r(t^2) r'(t^2)`, plus the reference value 0.144 at `t = 2`.
pub fn pl_law() -> Result<Vec<OracleReport>> {
    let set = ConvexSet::ball(Ball::new(vec![0.0, 0.0], 1.0)?, vec![0.0, 0.0])?;
    let rc = RadialContraction::new(ContractionFamily::Rational, 0.5, 1.0)?;
    let l = SoftRadialLayer::new(set, rc);
    let loss = |u: &[f64]| {
        let p = l.soft_project(u).expect("finite input");
        p.iter().map(|v| v * v).sum::<f64>()
    };
    let mut out = Vec::new();
    for t in [2.0, 5.0, 10.0] {
        let measured = norm(&fd_gradient(loss, &[t, 0.0], 1e-6));
        let (r, dr) = rc.eval(t * t)?;
        out.push(relative_report(
            format!("pl_gradient_norm/t={t}"),
            measured,
            4.0 * t * r * dr,
            1e-4,
        ));
        if t == 2.0 {
            out.push(relative_report("pl_gradient_norm_reference/t=2", measured, 0.144, 1e-4));
        }
    }
    Ok(out)
}

/// Exterior capped-simplex point whose clamped coordinates leave a single
/// free one, with a cotangent normal to the active faces.
pub fn saturation_contrast() -> Result<Vec<OracleReport>> {
    let caps = vec![0.6; 3];
    let u = [0.9, 0.15, -0.6];
    let g = [1.0, 0.0, -1.0];
    let orth = orth_projection_vjp(&u, &caps, &g)?;
    let l = SoftRadialLayer::new(
        ConvexSet::capped_simplex(CappedSimplex::new(caps)?),
        RadialContraction::default(),
    );
    let soft = l.vjp(&u, &g)?;
    Ok(vec![
        OracleReport::error_only("orthogonal_vjp_norm_at_exterior_point", norm(&orth), 1e-12),
        lower_bound_report("soft_radial_vjp_norm_at_exterior_point", norm(&soft), 1e-6, false),
    ])
}

/// Final losses of the default 2D run for both methods.
pub fn toy2d_final_losses(cfg: &Toy2dConfig) -> Result<(f64, f64)> {
    let soft = run_toy2d(cfg, Method::SoftRadial)?.last().map_or(f64::NAN, |p| p.loss);
    let orth = run_toy2d(cfg, Method::Orthogonal)?.last().map_or(f64::NAN, |p| p.loss);
    Ok((soft, orth))
}

/// Exact capped-simplex projection against the QP oracle, its KKT residual and
/// the `(1, 0, 0)` hand example.
pub fn capped_projection(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let (mut worst, mut worst_kkt) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let spread = rng.random_range(0.1..5.0);
        let (u, caps) = capped_instance(&mut rng, 12, spread);
        let w = project_capped_simplex(&u, &caps)?;
        let oracle = qp_projection_oracle(&u, &caps, 100_000)?;
        worst = worst.max(max_abs(&w, &oracle));
        worst_kkt = worst_kkt.max(kkt_residual(&u, &w, &caps));
    }
    let hand = project_capped_simplex(&[1.0, 0.0, 0.0], &[0.5; 3])?;
    Ok(vec![
        OracleReport::error_only("capped_projection_vs_qp_oracle", worst, 1e-7),
        OracleReport::error_only("capped_projection_kkt_residual", worst_kkt, 1e-8),
        OracleReport::error_only(
            "capped_projection_hand_example",
            max_abs(&hand, &[0.5, 0.25, 0.25]),
            1e-10,
        ),
    ])
}

/// Distance from `w = clip(u - mu, 0, caps)` for the best multiplier `mu`
/// among the breakpoints, plus the sum-one residual.
pub fn kkt_residual(u: &[f64], w: &[f64], caps: &[f64]) -> f64 {
    let mut candidates: Vec<f64> = u.iter().zip(w).map(|(a, b)| a - b).collect();
    candidates.extend(u.iter().copied());
    candidates.extend(u.iter().zip(caps).map(|(a, c)| a - c));
    let stationarity = candidates
        .iter()
        .map(|mu| {
            u.iter()
                .zip(w)
                .zip(caps)
                .map(|((ui, wi), ci)| (wi - (ui - mu).clamp(0.0, *ci)).abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    stationarity.max((w.iter().sum::<f64>() - 1.0).abs())
}

/// HardNet and DC3 outputs after the evaluation wrapper, and DC3 energy
/// monotonicity (momentum 0, step size at most 0.1, N at most 10).
pub fn baseline_contracts(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let (mut hard, mut dc3, mut rise) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..count {
        let spread = rng.random_range(0.1..5.0);
        let (u, caps) = capped_instance(&mut rng, 10, spread);
        let bounds = AffineBounds::capped_box(&caps)?;
        let h = eval_feasibility_wrapper(&hardnet_capped(&u, &bounds, 1)?, &caps)?;
        hard = hard.max(-simplex_margin(&h, &caps));
        let d = eval_feasibility_wrapper(&dc3_project(&u, &caps, &Dc3Config::default())?, &caps)?;
        dc3 = dc3.max(-simplex_margin(&d, &caps));
        let eta = rng.random_range(0.005..=0.1);
        let (_, energies) = dc3_trace(&u, &caps, &Dc3Config::new(25, eta, 0.0)?)?;
        for pair in energies.windows(2) {
            rise = rise.max(pair[1] - pair[0]);
        }
    }
    Ok(vec![
        OracleReport::error_only("hardnet_wrapper_violation", hard.max(0.0), 1e-10),
        OracleReport::error_only("dc3_wrapper_violation", dc3.max(0.0), 1e-10),
        OracleReport::error_only("dc3_energy_increase", rise.max(0.0), 0.0),
    ])
}

/// `vjp(u0, g) = epsilon g` exactly.
pub fn anchor_identity(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..count {
        let kind = [GeometryKind::Polytope, GeometryKind::Ball][i % 2];
        let set = random_set(kind, &mut rng)?;
        let eps = rng.random_range(0.01..0.9);
        let family = ContractionFamily::ALL[i % 3];
        let l = SoftRadialLayer::new(set.clone(), RadialContraction::new(family, eps, 1.0)?);
        let g = gaussian(&mut rng, set.dim());
        let v = l.vjp(set.anchor(), &g)?;
        let expected: Vec<f64> = g.iter().map(|x| eps * x).collect();
        worst = worst.max(max_abs(&v, &expected));
    }
    Ok(vec![OracleReport::error_only("anchor_vjp_deviation", worst, 0.0)])
}

/// Every registered primitive at random points, plus the composite
/// network, constraint head and Sharpe objective for each method.
pub fn gradient_checks(count: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = rng(seed);
    let mut reg = PrimitiveRegistry::new();
    reg.register_projection_primitives()?;
    let mut out = Vec::new();
    for name in reg.names() {
        let prim: Arc<dyn Primitive> = reg.get(name).expect("registered");
        let mut worst = 0.0f64;
        for _ in 0..count {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            worst = worst.max(check_primitive(&prim, &x, 1e-6)?);
        }
        out.push(OracleReport::error_only(
            format!("primitive_grad_check/{name}"),
            worst,
            1e-5,
        ));
    }
    let spec = SharpeSpec {
        gamma: 0.1,
        delta: 1e-3,
        excess: true,
    };
    for method in Method::ALL {
        let mut worst = 0.0f64;
        for k in 0..count.div_ceil(5) {
            let net = Mlp::new(&[4, 8, 3], Activation::Tanh, seed.wrapping_add(k as u64))?;
            let head = ConstraintHead::new(method, vec![0.6; 3], MethodConfig::default())?;
            let shifts: Vec<Vec<f64>> = (0..5).map(|_| gaussian(&mut rng, 4)).collect();
            let y: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..3).map(|_| 1.0 + rng.random_range(-0.05..0.05)).collect())
                .collect();
            let x = gaussian(&mut rng, 4);
            let err = grad_check(
                |tape: &mut Tape, v| {
                    let vars = net.bind(tape)?;
                    let mut ws = Vec::new();
                    for s in &shifts {
                        let sv = tape.leaf(s.clone());
                        let z = tape.add(v, sv)?;
                        let u = net.forward(tape, &vars, z)?;
                        ws.push(head.apply(tape, u)?);
                    }
                    sharpe_on_tape(tape, &ws, &y, &spec)
                },
                &x,
                1e-6,
            )?;
            worst = worst.max(err);
        }
        out.push(OracleReport::error_only(
            format!("composite_grad_check/{method}"),
            worst,
            1e-4,
        ));
    }
    Ok(out)
}

/// Fits a fixed smooth map from `[-1, 1]^2` into the capped simplex (N = 3,
/// caps 0.7) with an MLP followed by the soft-radial layer. Returns the
/// initial and final training MSE.
pub fn universal_approximation(steps: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = rng(seed);
    let caps = vec![0.7; 3];
    let target = |x: &[f64]| -> Vec<f64> {
        let raw = [
            1.0 + 0.4 * (2.0 * x[0] + x[1]).sin(),
            1.0 + 0.4 * (3.0 * x[1] - x[0]).cos(),
            1.0 + 0.4 * (x[0] * x[1] * 4.0).sin(),
        ];
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    };
    let xs: Vec<Vec<f64>> = (0..64)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| target(x)).collect();
    let mut net = Mlp::new(&[2, 32, 3], Activation::Tanh, seed)?;
    let head = ConstraintHead::new(Method::SoftRadial, caps, MethodConfig::default())?;
    let mse = |net: &Mlp| -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let w = head.evaluate(&net.predict(x)?)?;
            total += w.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / xs.len() as f64)
    };
    let initial = mse(&net)?;
    let mut adam = AdamState::new(1e-2, &net.parameters());
    for _ in 0..steps {
        let mut tape = Tape::new();
        let vars = net.bind(&mut tape)?;
        let mut terms = Vec::with_capacity(xs.len());
        for (x, y) in xs.iter().zip(&ys) {
            let z = tape.leaf(x.clone());
            let u = net.forward(&mut tape, &vars, z)?;
            let w = head.apply(&mut tape, u)?;
            let yv = tape.leaf(y.clone());
            let r = tape.sub(w, yv)?;
            terms.push(tape.dot(r, r)?);
        }
        let all = tape.concat(&terms)?;
        let loss = tape.mean(all)?;
        let grads = tape.backward(loss)?;
        let g: Vec<Vec<f64>> = vars.params().into_iter().map(|v| grads.get(v).to_vec()).collect();
        let mut params = net.parameters();
        adam.step(&mut params, &g)?;
        net.set_parameters(params)?;
    }
    Ok((initial, mse(&net)?))
}

/// The invariant suite run by `verify`, at moderate sample sizes.
pub fn invariant_suite(seed: u64, jacobian: &JacobianFn) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    out.extend(geometry_exactness(200, seed)?);
    out.extend(jacobian_correctness(50, seed + 1, jacobian)?);
    out.extend(round_trip(100, seed + 2)?);
    out.extend(strict_feasibility(1000, seed + 3)?);
    out.extend(pl_law()?);
    out.extend(saturation_contrast()?);
    out.extend(capped_projection(200, seed + 4)?);
    out.extend(baseline_contracts(200, seed + 5)?);
    out.extend(anchor_identity(100, seed + 6)?);
    out.extend(gradient_checks(20, seed + 7)?);
    Ok(out)
}
