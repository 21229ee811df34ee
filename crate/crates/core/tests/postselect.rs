mod common;

use common::*;
use gptsim::circuit::CompiledCircuit;
use gptsim::eval::{
    accept_exact, eval_exact, postselect, AcceptanceRule, Engine, EvalError, PostSelection,
};
use num_bigint::BigInt;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const D: u32 = 16;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_conditional_identity(seed in any::<u64>()) {
        let theories = random_suite_theories();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, ti) = random_suite_circuit(&mut rng, &theories, 5, 1 << 14);
        let t = &theories[ti];
        let atoms = circuit_atoms(&c, t);
        let cc = CompiledCircuit::new(&c, t).unwrap();
        let rule = AcceptanceRule::expr(random_expr(&mut rng, &atoms, 2)).compile(&cc).unwrap();
        let selector = AcceptanceRule::expr(random_expr(&mut rng, &atoms, 2)).compile(&cc).unwrap();

        // independent sums of exact amplitudes
        let mut joint = BigInt::from(0);
        let mut selected = BigInt::from(0);
        for z in cc.enumerate_outcomes().unwrap() {
            if selector.accepts(&z) {
                let a = eval_exact(&cc, &z, D).unwrap();
                if rule.accepts(&z) {
                    joint += &a.numerator;
                }
                selected += a.numerator;
            }
        }
        prop_assert_eq!(&accept_exact(&cc, &selector, D).unwrap().numerator, &selected);

        let s = PostSelection::new(selector, 1e-300).unwrap();
        match postselect(&cc, &rule, &s, Engine::Exact { d: D }) {
            Err(EvalError::DivisionImpossible) => prop_assert_eq!(selected, BigInt::from(0)),
            Ok(r) => {
                let e = r.exact.unwrap();
                prop_assert_eq!(&e.joint.numerator, &joint);
                prop_assert_eq!(&e.selected.numerator, &selected);
                prop_assert_eq!(e.joint.exponent, D * c.nodes.len() as u32);
                prop_assert!(e.identity_holds());
                prop_assert_eq!(&e.reduced_numerator * &selected, &e.reduced_denominator * &joint);
            }
            Err(other) => prop_assert!(false, "unexpected {other}"),
        }
    }

    #[test]
    fn threshold_guard_fires_below_threshold(seed in any::<u64>(), scale in prop::sample::select(vec![0.5, 0.999999, 1.0, 1.000001, 2.0])) {
        let theories = random_suite_theories();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, ti) = random_suite_circuit(&mut rng, &theories, 5, 1 << 14);
        let t = &theories[ti];
        let atoms = circuit_atoms(&c, t);
        let cc = CompiledCircuit::new(&c, t).unwrap();
        let rule = AcceptanceRule::always().compile(&cc).unwrap();
        let selector = AcceptanceRule::expr(random_expr(&mut rng, &atoms, 2)).compile(&cc).unwrap();
        let p_s = accept_exact(&cc, &selector, D).unwrap();
        prop_assume!(!p_s.is_zero() && p_s.to_f64() > 0.0);
        let threshold = p_s.to_f64() * scale;
        let s = PostSelection::new(selector.clone(), threshold).unwrap();
        let out = postselect(&cc, &rule, &s, Engine::Exact { d: D });
        let below = p_s.to_f64() < threshold;
        prop_assert_eq!(matches!(out, Err(EvalError::BelowThreshold { .. })), below);
        if !below {
            prop_assert!((out.unwrap().conditional - 1.0).abs() <= 1e-12);
        }

        let float_s = PostSelection::new(selector, 1e-9).unwrap();
        if let Ok(r) = postselect(&cc, &rule, &float_s, Engine::Dense) {
            prop_assert!((r.conditional * r.selected - r.joint).abs() <= 1e-12);
        }
    }
}

#[test]
fn threshold_must_be_positive() {
    let theories = random_suite_theories();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (c, ti) = random_suite_circuit(&mut rng, &theories, 4, 1 << 10);
    let cc = CompiledCircuit::new(&c, &theories[ti]).unwrap();
    let sel = AcceptanceRule::always().compile(&cc).unwrap();
    for bad in [0.0, -1.0, f64::NAN] {
        assert!(matches!(
            PostSelection::new(sel.clone(), bad),
            Err(EvalError::BadThreshold(_))
        ));
    }
}
