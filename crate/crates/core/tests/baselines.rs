mod common;

use proptest::prelude::*;
use radialfeas::baselines::{
    dc3_project, dc3_trace, eval_feasibility_wrapper, hardnet_capped, hardnet_capped_vjp, hardnet_correct,
    orth_projection_vjp, project_capped_simplex, softmax_temp, AffineBounds, Dc3Config,
};
use radialfeas::method::simplex_margin;
use radialfeas::oracles::{fd_jacobian, qp_projection_oracle};
use radialfeas::sampling::{capped_instance, gaussian};
use radialfeas::sets::hyperplane_project;

/// Smallest violation of `w = clip(u - mu, 0, caps)` over the candidate
/// multipliers where the residual can vanish.
fn kkt_residual(u: &[f64], w: &[f64], caps: &[f64]) -> f64 {
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

proptest! {
    #![proptest_config(common::config(300))]

    #[test]
    fn projection_matches_the_qp_oracle(seed in any::<u64>(), spread in 0.1f64..5.0) {
        let (u, caps) = capped_instance(&mut common::rng(seed), 12, spread);
        let w = project_capped_simplex(&u, &caps).unwrap();
        let oracle = qp_projection_oracle(&u, &caps, 100_000).unwrap();
        prop_assert!(common::max_abs(&w, &oracle) <= 1e-7);
        prop_assert!(kkt_residual(&u, &w, &caps) <= 1e-8);
        prop_assert!(simplex_margin(&w, &caps) >= -1e-12);
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let (u, caps) = capped_instance(&mut common::rng(seed), 12, 2.0);
        let w = project_capped_simplex(&u, &caps).unwrap();
        let again = project_capped_simplex(&w, &caps).unwrap();
        prop_assert!(common::max_abs(&w, &again) <= 1e-12);
    }

    #[test]
    fn orthogonal_vjp_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (u, caps) = capped_instance(&mut rng, 8, 1.0);
        let w = project_capped_simplex(&u, &caps).unwrap();
        // Stay away from the breakpoints where the active set changes.
        let mu = u.iter().zip(&w).zip(&caps)
            .filter(|((_, wi), ci)| **wi > 0.0 && **wi < **ci)
            .map(|((ui, wi), _)| ui - wi)
            .next();
        prop_assume!(mu.is_some());
        let mu = mu.unwrap();
        prop_assume!(u.iter().zip(&caps).all(|(ui, ci)| (ui - mu).abs() > 1e-4 && (ui - mu - ci).abs() > 1e-4));
        let g = gaussian(&mut rng, u.len());
        let j = fd_jacobian(|x| project_capped_simplex(x, &caps).unwrap(), &u, 1e-7);
        let fd: Vec<f64> = (0..u.len()).map(|c| (0..u.len()).map(|r| j[(r, c)] * g[r]).sum()).collect();
        let v = orth_projection_vjp(&u, &caps, &g).unwrap();
        prop_assert!(common::max_abs(&v, &fd) <= 1e-6);
    }

    #[test]
    fn corrected_outputs_are_feasible(seed in any::<u64>(), spread in 0.1f64..5.0, steps in 1usize..4) {
        let (u, caps) = capped_instance(&mut common::rng(seed), 12, spread);
        let bounds = AffineBounds::capped_box(&caps).unwrap();
        let h = eval_feasibility_wrapper(&hardnet_capped(&u, &bounds, steps).unwrap(), &caps).unwrap();
        prop_assert!(simplex_margin(&h, &caps) >= -1e-10);
        let d = eval_feasibility_wrapper(&dc3_project(&u, &caps, &Dc3Config::default()).unwrap(), &caps).unwrap();
        prop_assert!(simplex_margin(&d, &caps) >= -1e-10);
    }

    #[test]
    fn dc3_energy_never_increases(seed in any::<u64>(), spread in 0.1f64..5.0, eta in 0.005f64..0.1) {
        let (u, caps) = capped_instance(&mut common::rng(seed), 10, spread);
        let cfg = Dc3Config::new(25, eta, 0.0).unwrap();
        let (_, energies) = dc3_trace(&u, &caps, &cfg).unwrap();
        for pair in energies.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-15, "{:?}", energies);
        }
    }

    #[test]
    fn hardnet_fixes_every_violated_row(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (u, caps) = capped_instance(&mut rng, 8, 3.0);
        let bounds = AffineBounds::capped_box(&caps).unwrap();
        let w = hardnet_correct(&u, &bounds).unwrap();
        for (wi, ci) in w.iter().zip(&caps) {
            prop_assert!(*wi >= -1e-12 && *wi <= ci + 1e-12);
        }
    }

    #[test]
    fn hardnet_vjp_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (u, caps) = capped_instance(&mut rng, 6, 2.0);
        let y = hyperplane_project(&u);
        // One correction is linear between the kinks at y_i = 0 and y_i = c_i.
        prop_assume!(y.iter().zip(&caps).all(|(yi, ci)| yi.abs() > 1e-4 && (yi - ci).abs() > 1e-4));
        let bounds = AffineBounds::capped_box(&caps).unwrap();
        let g = gaussian(&mut rng, u.len());
        let j = fd_jacobian(|x| hardnet_capped(x, &bounds, 1).unwrap(), &u, 1e-7);
        let fd: Vec<f64> = (0..u.len()).map(|c| (0..u.len()).map(|r| j[(r, c)] * g[r]).sum()).collect();
        let v = hardnet_capped_vjp(&u, &bounds, 1, &g).unwrap();
        prop_assert!(common::max_abs(&v, &fd) <= 1e-6, "{:?} vs {:?}", v, fd);
    }

    #[test]
    fn softmax_lands_on_the_simplex(u in prop::collection::vec(-50.0f64..50.0, 2..10), tau in 0.05f64..5.0) {
        let w = softmax_temp(&u, tau).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn hand_example_is_exact() {
    let w = project_capped_simplex(&[1.0, 0.0, 0.0], &[0.5; 3]).unwrap();
    assert!(common::max_abs(&w, &[0.5, 0.25, 0.25]) <= 1e-10);
    let oracle = qp_projection_oracle(&[1.0, 0.0, 0.0], &[0.5; 3], 100_000).unwrap();
    assert!(common::max_abs(&oracle, &[0.5, 0.25, 0.25]) <= 1e-7);
}
