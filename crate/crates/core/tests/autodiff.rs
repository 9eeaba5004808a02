mod common;

use std::sync::Arc;

use proptest::prelude::*;
use radialfeas::autodiff::{check_primitive, grad_check, Primitive, PrimitiveRegistry, Tape, REGISTRATION_TOLERANCE};
use radialfeas::method::{ConstraintHead, Method, MethodConfig};
use radialfeas::nets::{Activation, Mlp};
use radialfeas::sampling::gaussian;
use radialfeas::tasks::{sharpe_objective, sharpe_on_tape, SharpeSpec, SoftMinPrimitive};
use rand::Rng;

fn registry() -> PrimitiveRegistry {
    let mut reg = PrimitiveRegistry::new();
    reg.register_projection_primitives().unwrap();
    reg
}

proptest! {
    #![proptest_config(common::config(100))]

    #[test]
    fn registered_primitives_pass_gradient_checks(x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let reg = registry();
        for name in reg.names() {
            let prim = reg.get(name).unwrap();
            let err = check_primitive(&prim, &x, 1e-6).unwrap();
            prop_assert!(err <= REGISTRATION_TOLERANCE, "{}: {} at {:?}", name, err, x);
        }
    }

    #[test]
    fn softmin_primitive_passes_gradient_checks(x in prop::collection::vec(0.0f64..5.0, 8), tau in 0.05f64..2.0) {
        let prim: Arc<dyn Primitive> = Arc::new(SoftMinPrimitive { tau });
        let err = grad_check(
            |tape: &mut Tape, v| {
                let a = tape.slice(v, 0, 4)?;
                let b = tape.slice(v, 4, 4)?;
                let m = tape.custom(prim.clone(), &[a, b])?;
                tape.sum(m)
            },
            &x,
            1e-6,
        )
        .unwrap();
        prop_assert!(err <= 1e-6, "{}", err);
    }
}

fn composite(method: Method, seed: u64) -> (Mlp, ConstraintHead, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = common::rng(seed);
    let net = Mlp::new(&[4, 8, 3], Activation::Tanh, seed).unwrap();
    let head = ConstraintHead::new(method, vec![0.6; 3], MethodConfig::default()).unwrap();
    let shifts: Vec<Vec<f64>> = (0..5).map(|_| gaussian(&mut rng, 4)).collect();
    let y: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..3).map(|_| 1.0 + rng.random_range(-0.05..0.05)).collect())
        .collect();
    let x = gaussian(&mut rng, 4);
    (net, head, shifts, y, x)
}

const SPEC: SharpeSpec = SharpeSpec {
    gamma: 0.1,
    delta: 1e-3,
    excess: true,
};

#[test]
fn network_projection_and_sharpe_compose_under_grad_check() {
    for method in Method::ALL {
        for seed in 0..20 {
            let (net, head, shifts, y, x) = composite(method, seed);
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
                    sharpe_on_tape(tape, &ws, &y, &SPEC)
                },
                &x,
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-4, "{method} seed {seed}: {err}");
        }
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let (net, head, shifts, y, _) = composite(Method::SoftRadial, 3);
    let objective = |net: &Mlp| -> f64 {
        let ws: Vec<Vec<f64>> = shifts
            .iter()
            .map(|s| head.evaluate(&net.predict(s).unwrap()).unwrap())
            .collect();
        sharpe_objective(&ws, &y, &SPEC).unwrap()
    };
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape).unwrap();
    let mut ws = Vec::new();
    for s in &shifts {
        let z = tape.leaf(s.clone());
        let u = net.forward(&mut tape, &vars, z).unwrap();
        ws.push(head.apply(&mut tape, u).unwrap());
    }
    let out = sharpe_on_tape(&mut tape, &ws, &y, &SPEC).unwrap();
    assert!((tape.scalar(out) - objective(&net)).abs() <= 1e-12);
    let grads = tape.backward(out).unwrap();
    let params = net.parameters();
    let h = 1e-6;
    for (k, var) in vars.params().into_iter().enumerate() {
        let analytic = grads.get(var);
        for i in (0..params[k].len()).step_by(3) {
            let mut plus = params.clone();
            plus[k][i] += h;
            let mut minus = params.clone();
            minus[k][i] -= h;
            let mut np = net.clone();
            np.set_parameters(plus).unwrap();
            let mut nm = net.clone();
            nm.set_parameters(minus).unwrap();
            let fd = (objective(&np) - objective(&nm)) / (2.0 * h);
            assert!(
                (analytic[i] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                "tensor {k} entry {i}: {} vs {fd}",
                analytic[i]
            );
        }
    }
}

#[test]
fn backward_is_deterministic() {
    let (net, head, shifts, y, x) = composite(Method::Dc3, 9);
    let run = || {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let vars = net.bind(&mut tape).unwrap();
        let mut ws = Vec::new();
        for s in &shifts {
            let sv = tape.leaf(s.clone());
            let z = tape.add(xv, sv).unwrap();
            let u = net.forward(&mut tape, &vars, z).unwrap();
            ws.push(head.apply(&mut tape, u).unwrap());
        }
        let out = sharpe_on_tape(&mut tape, &ws, &y, &SPEC).unwrap();
        let g1 = tape.backward(out).unwrap();
        let g2 = tape.backward(out).unwrap();
        let mut all: Vec<Vec<f64>> = vars.params().into_iter().map(|v| g1.get(v).to_vec()).collect();
        all.push(g1.get(xv).to_vec());
        assert_eq!(g1.get(xv), g2.get(xv));
        all
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}
