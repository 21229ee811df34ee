mod common;

use common::*;
use gptsim::circuit::CompiledCircuit;
use gptsim::eval::eval_dense;
use gptsim::oracle::{
    estimate_accept, exact_accept_probability, run_adaptive, validate_program, CausalContext,
    OracleError,
};
use gptsim::theory::{builtin_noncausal_counterexample, check_causality, resolve_builtin, Theory};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn program_theories() -> Vec<Theory> {
    random_suite_theories()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn no_signalling_from_the_future(seed in any::<u64>()) {
        let theories = random_suite_theories();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, ti) = random_suite_circuit(&mut rng, &theories, 5, 1 << 14);
        let t = &theories[ti];
        let (f, prefix) = change_future(&e, t, &mut rng);
        let (me, mf) = (marginal(&e, t, &prefix), marginal(&f, t, &prefix));
        prop_assert_eq!(me.len(), mf.len());
        for (k, p) in &me {
            prop_assert!((p - mf[k]).abs() <= 1e-12, "{k:?}: {p} vs {}", mf[k]);
        }
    }

    #[test]
    fn sampled_runs_obey_the_chain_rule(seed in any::<u64>(), run_seed in any::<u64>()) {
        let theories = program_theories();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = theories.choose(&mut rng).unwrap();
        let p = random_program(t, &mut rng);
        let oracle = random_oracle(&mut rng);
        let ctx = CausalContext::new(t).unwrap();
        validate_program(&ctx, &p).unwrap();
        let trace = run_adaptive(&ctx, &p, &oracle, run_seed).unwrap();
        let product: f64 = trace.gates.iter().map(|g| g.probability).product();
        prop_assert!((product - trace.path_probability).abs() <= 1e-12);
        let cc = CompiledCircuit::new(&trace.realised, t).unwrap();
        let joint = eval_dense(&cc, &trace.outcomes()).unwrap();
        prop_assert!((product - joint).abs() <= 1e-9, "{product} vs {joint}");
        prop_assert!((joint - contract(&trace.realised, t, &trace.outcomes().0)).abs() <= 1e-9);

        let again = run_adaptive(&ctx, &p, &oracle, run_seed).unwrap();
        prop_assert_eq!(&trace.gates, &again.gates);
        prop_assert_eq!(&trace.queries, &again.queries);

        let leaves = enumerate_program(t, &p, &oracle);
        let names: Vec<&str> = trace.gates.iter().map(|g| g.gate.as_str()).collect();
        let leaf = leaves
            .iter()
            .find(|l| l.outcomes == trace.outcomes().0 && l.circuit.nodes.iter().map(|n| n.gate.as_str()).eq(names.iter().copied()))
            .expect("sampled path is a program path");
        prop_assert_eq!(leaf.queries, trace.queries.len());
        prop_assert_eq!(leaf.accept, trace.accept);
    }

    #[test]
    fn exact_acceptance_matches_enumeration(seed in any::<u64>()) {
        let theories = program_theories();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = theories.choose(&mut rng).unwrap();
        let p = random_program(t, &mut rng);
        let oracle = random_oracle(&mut rng);
        let ctx = CausalContext::new(t).unwrap();
        let exact = exact_accept_probability(&ctx, &p, &oracle).unwrap();
        let leaves = enumerate_program(t, &p, &oracle);
        let total: f64 = leaves.iter().map(|l| l.probability).sum();
        let accepted: f64 = leaves.iter().filter(|l| l.accept).map(|l| l.probability).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!((exact - accepted).abs() <= 1e-9, "{exact} vs {accepted}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn frequencies_track_exact_probability(seed in any::<u64>()) {
        let theories = program_theories();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = theories.choose(&mut rng).unwrap();
        let p = random_program(t, &mut rng);
        let oracle = random_oracle(&mut rng);
        let ctx = CausalContext::new(t).unwrap();
        let exact = exact_accept_probability(&ctx, &p, &oracle).unwrap();
        let n = 2000u64;
        let est = estimate_accept(&ctx, &p, &oracle, n, seed).unwrap();
        let q = exact.clamp(0.0, 1.0);
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        prop_assert!((est.frequency - exact).abs() <= 4.0 * sigma + 1e-9, "{} vs {exact}", est.frequency);
        prop_assert_eq!(est, estimate_accept(&ctx, &p, &oracle, n, seed).unwrap());
    }
}

#[test]
fn builtins_are_causal_and_the_counterexample_is_not() {
    for name in [
        "classical2",
        "classical3",
        "qubits1",
        "qubits2",
        "qubits3",
        "boxworld",
    ] {
        let t = resolve_builtin(name).unwrap();
        let report = check_causality(&t, 1e-9);
        assert!(report.is_causal, "{name}: {:?}", report.violations);
    }
    let bad = builtin_noncausal_counterexample();
    assert!(!check_causality(&bad, 1e-9).is_causal);
    assert!(matches!(
        CausalContext::new(&bad),
        Err(OracleError::NonCausal(_))
    ));
}
