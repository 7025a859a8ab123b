use graphforge::interp::{compile, CompileOptions, TensorValue};
use graphforge::ir::{ElementType, Function, Node, OpTag};
use graphforge::passes::{
    algebraic_simplify, eliminate_common_subexpressions, liveness, partition, plan_memory,
    run_pipeline, ConvLayout, LayoutPreferences, Pass,
};
use graphforge_testkit::{
    check_partition, check_plan, max_abs_diff, random_function, random_inputs, reference_liveness,
    GraphConfig,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn graph(seed: u64, f32: bool) -> Function {
    let config = GraphConfig {
        element_type: if f32 {
            ElementType::F32
        } else {
            ElementType::F64
        },
        ..GraphConfig::default()
    };
    random_function(&mut StdRng::seed_from_u64(seed), &config)
}

fn run(f: &Function, inputs: &[TensorValue]) -> Vec<TensorValue> {
    compile(f, &CompileOptions::unoptimized())
        .unwrap()
        .call(inputs)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn each_pass_preserves_semantics(seed: u64, f32: bool, pass in 0usize..4) {
        let f = graph(seed, f32);
        let pass = Pass::ALL[pass];
        let g = run_pipeline(&f, &[pass], &LayoutPreferences::for_conv(ConvLayout::Nhwc)).unwrap();
        prop_assert!(g.validate().is_empty());
        let inputs = random_inputs(&mut StdRng::seed_from_u64(!seed), &f);
        let tolerance = if f32 { 1e-6 } else { 1e-12 };
        for (a, b) in run(&f, &inputs).iter().zip(&run(&g, &inputs)) {
            let diff = max_abs_diff(a, b);
            prop_assert!(diff <= tolerance, "{:?}: {}", pass, diff);
        }
    }

    #[test]
    fn cse_and_simplify_are_idempotent(seed: u64) {
        let f = graph(seed, false);
        let s = algebraic_simplify(&f);
        prop_assert_eq!(algebraic_simplify(&s), s);
        let c = eliminate_common_subexpressions(&f);
        prop_assert_eq!(eliminate_common_subexpressions(&c), c);
    }

    #[test]
    fn liveness_matches_reference(seed: u64) {
        let f = graph(seed, false);
        prop_assert_eq!(liveness(&f), reference_liveness(&f));
    }

    #[test]
    fn plans_are_valid(seed: u64, f32: bool) {
        let f = graph(seed, f32);
        let plan = plan_memory(&f);
        if let Err(e) = check_plan(&f, &plan) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn partitions_are_acyclic_and_maximal(seed: u64) {
        let f = graph(seed, false);
        let mut rng = StdRng::seed_from_u64(seed.rotate_left(7));
        let allowed: Vec<OpTag> = OpTag::ALL.iter().copied().filter(|_| rng.gen()).collect();
        let supported = |n: &Node| allowed.contains(&n.op.tag());
        let p = partition(&f, supported);
        if let Err(e) = check_partition(&f, &p, supported) {
            prop_assert!(false, "{}", e);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passes_preserve_gradient_graphs(seed: u64, pass in 0usize..4) {
        let config = GraphConfig {
            integer_branch: false,
            differentiable_only: true,
            ..GraphConfig::default()
        };
        let mut f = random_function(&mut StdRng::seed_from_u64(seed), &config);
        let first = f.results()[0];
        f.set_results(vec![first]).unwrap();
        let wrt = f.parameters().to_vec();
        let g = graphforge::autodiff::differentiate(&f, &wrt).unwrap();
        let h = run_pipeline(&g, &[Pass::ALL[pass]], &LayoutPreferences::for_conv(ConvLayout::Nhwc)).unwrap();
        let inputs = random_inputs(&mut StdRng::seed_from_u64(!seed), &g);
        for (a, b) in run(&g, &inputs).iter().zip(&run(&h, &inputs)) {
            prop_assert!(max_abs_diff(a, b) <= 1e-12);
        }
    }
}
