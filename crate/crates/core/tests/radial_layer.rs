mod common;

use proptest::prelude::*;
use radialfeas::linalg::{center, norm, sub};
use radialfeas::oracles::{fd_gradient, fd_jacobian};
use radialfeas::sampling::{gaussian, point_at_fraction, random_set, unit_direction, GeometryKind};
use radialfeas::sets::Ball;
use radialfeas::{ContractionFamily, ConvexSet, RadialContraction, SoftRadialLayer};
use rand::Rng;

fn kind() -> impl Strategy<Value = GeometryKind> {
    prop_oneof![
        Just(GeometryKind::Polytope),
        Just(GeometryKind::Ball),
        Just(GeometryKind::CappedSimplex)
    ]
}

fn family() -> impl Strategy<Value = ContractionFamily> {
    prop_oneof![
        Just(ContractionFamily::Rational),
        Just(ContractionFamily::Exponential),
        Just(ContractionFamily::Hyperbolic)
    ]
}

fn layer(k: GeometryKind, fam: ContractionFamily, seed: u64) -> (SoftRadialLayer, rand_chacha::ChaCha8Rng) {
    let mut rng = common::rng(seed);
    let set = random_set(k, &mut rng).unwrap();
    (
        SoftRadialLayer::new(set, RadialContraction::new(fam, 0.1, 1.0).unwrap()),
        rng,
    )
}

proptest! {
    #![proptest_config(common::config(300))]

    #[test]
    fn jacobian_matches_finite_differences(k in kind(), fam in family(), seed in any::<u64>()) {
        let (layer, mut rng) = layer(k, fam, seed);
        let u = point_at_fraction(layer.set(), &mut rng, 0.05..4.0);
        prop_assume!(layer.set().kink_distance(&u).unwrap() > 1e-4);
        let j = layer.jacobian(&u).unwrap().matrix;
        let fd = fd_jacobian(|x| layer.soft_project(x).unwrap(), &u, 1e-6);
        let err = (&j - &fd).abs().max() / fd.abs().max().max(1.0);
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }

    #[test]
    fn vjp_is_the_transposed_jacobian(k in kind(), fam in family(), seed in any::<u64>()) {
        let (layer, mut rng) = layer(k, fam, seed);
        let u = point_at_fraction(layer.set(), &mut rng, 0.05..4.0);
        let g = gaussian(&mut rng, layer.dim());
        let j = layer.jacobian(&u).unwrap().matrix;
        let jt: Vec<f64> = (0..layer.dim()).map(|c| (0..layer.dim()).map(|r| j[(r, c)] * g[r]).sum()).collect();
        let v = layer.vjp(&u, &g).unwrap();
        prop_assert!(common::max_abs(&v, &jt) <= 1e-12 * norm(&jt).max(1.0));
    }

    #[test]
    fn inverse_undoes_the_projection(k in kind(), fam in family(), seed in any::<u64>()) {
        let (layer, mut rng) = layer(k, fam, seed);
        // Beyond a couple of length scales the saturating families leave p
        // numerically flat along the ray and the inverse is ill-conditioned.
        let v = unit_direction(layer.set(), &mut rng);
        let u = layer.set().ray_point(rng.random_range(0.01..2.0), &v);
        let back = layer.inverse(&layer.soft_project(&u).unwrap()).unwrap();
        prop_assert!(common::max_abs(&back, &u) <= 1e-8, "{:?} vs {:?}", back, u);
        let x = point_at_fraction(layer.set(), &mut rng, 0.0..0.95);
        let again = layer.soft_project(&layer.inverse(&x).unwrap()).unwrap();
        prop_assert!(common::max_abs(&again, &x) <= 1e-10);
    }

    #[test]
    fn outputs_are_strictly_feasible(k in kind(), fam in family(), seed in any::<u64>(), log_dist in -3.0f64..6.0) {
        let (layer, mut rng) = layer(k, fam, seed);
        let v = unit_direction(layer.set(), &mut rng);
        let u = layer.set().ray_point(10f64.powf(log_dist), &v);
        let p = layer.soft_project(&u).unwrap();
        prop_assert!(layer.set().slack(&p) > 0.0, "slack {}", layer.set().slack(&p));
        if layer.set().is_capped_simplex() {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn vjp_at_the_anchor_scales_by_epsilon(fam in family(), eps in 0.01f64..0.9, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let set = random_set(GeometryKind::Polytope, &mut rng).unwrap();
        let layer = SoftRadialLayer::new(set.clone(), RadialContraction::new(fam, eps, 1.0).unwrap());
        let g = gaussian(&mut rng, set.dim());
        let v = layer.vjp(set.anchor(), &g).unwrap();
        let expected: Vec<f64> = g.iter().map(|x| eps * x).collect();
        prop_assert_eq!(v, expected);
    }

    #[test]
    fn hard_projection_lands_on_the_boundary(k in kind(), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let set = random_set(k, &mut rng).unwrap();
        let layer = SoftRadialLayer::new(set.clone(), RadialContraction::default());
        let u = point_at_fraction(&set, &mut rng, 1.05..10.0);
        let q = layer.hard_project(&u).unwrap();
        prop_assert!(set.slack(&q).abs() <= 1e-12);
        let inside = point_at_fraction(&set, &mut rng, 0.0..0.95);
        let expected = if set.is_capped_simplex() { radialfeas::sets::hyperplane_project(&inside) } else { inside.clone() };
        prop_assert_eq!(layer.hard_project(&inside).unwrap(), expected);
    }

    #[test]
    fn radial_profile_is_increasing(fam in family(), t_bar in 0.1f64..5.0, a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let set = ConvexSet::ball(Ball::new(vec![0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]).unwrap();
        let layer = SoftRadialLayer::new(set, RadialContraction::new(fam, 0.1, 1.0).unwrap());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let (plo, phi) = (layer.radial_profile(lo, t_bar), layer.radial_profile(hi, t_bar));
        prop_assert!(plo <= phi);
        if hi <= 2.0 {
            prop_assert!(plo < phi);
        }
    }
}

#[test]
fn loss_gradient_norm_follows_the_radial_law() {
    let set = ConvexSet::ball(Ball::new(vec![0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]).unwrap();
    let rc = RadialContraction::new(ContractionFamily::Rational, 0.5, 1.0).unwrap();
    let layer = SoftRadialLayer::new(set, rc);
    let loss = |u: &[f64]| {
        let p = layer.soft_project(u).unwrap();
        p.iter().map(|v| v * v).sum::<f64>()
    };
    for t in [2.0, 5.0, 10.0] {
        let g = fd_gradient(loss, &[t, 0.0], 1e-6);
        let (r, dr) = rc.eval(t * t).unwrap();
        let law = 4.0 * t * r * dr;
        assert!((norm(&g) - law).abs() <= 1e-4 * law, "t={t}: {} vs {law}", norm(&g));
    }
    let g2 = norm(&fd_gradient(loss, &[2.0, 0.0], 1e-6));
    assert!((g2 - 0.144).abs() <= 1e-4 * 0.144, "{g2}");
}

#[test]
fn capped_simplex_jacobian_ignores_the_all_ones_direction() {
    let mut rng = common::rng(11);
    for _ in 0..50 {
        let set = random_set(GeometryKind::CappedSimplex, &mut rng).unwrap();
        let layer = SoftRadialLayer::new(set.clone(), RadialContraction::default());
        let u = point_at_fraction(&set, &mut rng, 0.1..3.0);
        let shifted: Vec<f64> = u.iter().map(|v| v + 0.7).collect();
        let a = layer.soft_project(&u).unwrap();
        let b = layer.soft_project(&shifted).unwrap();
        assert!(common::max_abs(&a, &b) <= 1e-14);
        let g = gaussian(&mut rng, set.dim());
        let v = layer.vjp(&u, &g).unwrap();
        assert!(common::max_abs(&v, &center(&v)) <= 1e-15);
        assert!(norm(&sub(&v, &center(&v))) <= 1e-15);
    }
}
