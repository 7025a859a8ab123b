use graphforge::interp::TensorValue;
use graphforge::ir::{Buffer, Diagnostic, ElementType, Function, Op, TensorDescriptor};
use graphforge::serial::{
    export_dot, parse_function, parse_tensor, print_function, print_tensor, ParseError,
};
use graphforge_testkit::{random_function, GraphConfig};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn float() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL,
        1 => prop::num::f64::ZERO | prop::num::f64::INFINITE,
        1 => Just(f64::NAN),
    ]
}

fn diagnostics(text: &str) -> Vec<Diagnostic> {
    match parse_function(text) {
        Err(ParseError::Validation(d)) => d,
        other => panic!("expected validation failure, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn print_parse_is_a_fixpoint(seed: u64, f32: bool) {
        let config = GraphConfig {
            element_type: if f32 { ElementType::F32 } else { ElementType::F64 },
            ..GraphConfig::default()
        };
        let f = random_function(&mut StdRng::seed_from_u64(seed), &config);
        let text = print_function(&f);
        let g = parse_function(&text).unwrap();
        prop_assert_eq!(&g, &f);
        prop_assert_eq!(print_function(&g), text);
    }

    #[test]
    fn f64_constants_survive_bit_exactly(data in prop::collection::vec(float(), 0..12)) {
        let d = TensorDescriptor::new(ElementType::F64, [data.len()]);
        let mut f = Function::new("k");
        let c = f.add_constant(d, Buffer::F64(data.clone())).unwrap();
        f.add_result(c).unwrap();
        let g = parse_function(&print_function(&f)).unwrap();
        match &g.node(c).unwrap().op {
            Op::Constant { value: Buffer::F64(v), .. } => {
                for (a, b) in data.iter().zip(v) {
                    prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
                }
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn f32_tensors_survive_bit_exactly(data in prop::collection::vec(prop_oneof![
        prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO | prop::num::f32::INFINITE,
        Just(f32::NAN),
    ], 6)) {
        let t = TensorValue::f32([2, 3], data).unwrap();
        let back = parse_tensor(&print_tensor(&t)).unwrap();
        prop_assert!(back.same_values(&t));
    }

    #[test]
    fn dangling_inputs_are_rejected(seed: u64) {
        let f = random_function(&mut StdRng::seed_from_u64(seed), &GraphConfig::default());
        let text = print_function(&f);
        // point the last node's first input at a missing id
        let Some(at) = text.rfind("\"inputs\": [[") else { return Ok(()) };
        let start = at + "\"inputs\": [[".len();
        let end = start + text[start..].find(',').unwrap();
        let broken = format!("{}999{}", &text[..start], &text[end..]);
        prop_assert!(!diagnostics(&broken).is_empty());
    }
}

#[test]
fn zero_sized_and_scalar_tensors_round_trip() {
    let mut f = Function::new("edges");
    let e = f
        .add_parameter(TensorDescriptor::new(ElementType::F32, [0, 3]))
        .unwrap();
    let s = f
        .add_constant(
            TensorDescriptor::new(ElementType::F64, []),
            Buffer::F64(vec![-0.0]),
        )
        .unwrap();
    let b = f
        .add_constant(
            TensorDescriptor::new(ElementType::Bool, [2]),
            Buffer::Bool(vec![true, false]),
        )
        .unwrap();
    let n = f.add_node(Op::Negate, [e]).unwrap();
    f.add_result(n).unwrap();
    f.add_result(s).unwrap();
    f.add_result(b).unwrap();
    let text = print_function(&f);
    assert_eq!(parse_function(&text).unwrap(), f);
}

#[test]
fn invalid_documents_carry_diagnostics() {
    let cycle = r#"{"name": "c", "nodes": [
        {"id": 1, "op": "Parameter", "attrs": {"element_type": "f64", "shape": [2]}},
        {"id": 2, "op": "Add", "inputs": [[1, 0], [3, 0]]},
        {"id": 3, "op": "Exp", "inputs": [[2, 0]]}
      ], "parameters": [1], "results": [[3, 0]]}"#;
    let d = diagnostics(cycle);
    assert!(matches!(&d[0], Diagnostic::CycleDetected { nodes } if nodes.len() == 2));

    let shapes = r#"{"name": "s", "nodes": [
        {"id": 1, "op": "Parameter", "attrs": {"element_type": "f64", "shape": [2]}},
        {"id": 2, "op": "Parameter", "attrs": {"element_type": "f64", "shape": [3]}},
        {"id": 3, "op": "Add", "inputs": [[1, 0], [2, 0]]}
      ], "parameters": [1, 2], "results": [[3, 0]]}"#;
    assert!(matches!(
        diagnostics(shapes)[0],
        Diagnostic::InferenceFailed { .. }
    ));

    let unlisted = r#"{"name": "u", "nodes": [
        {"id": 1, "op": "Parameter", "attrs": {"element_type": "f64", "shape": [2]}}
      ], "parameters": [], "results": [[1, 0]]}"#;
    assert!(!diagnostics(unlisted).is_empty());

    let bad_result = r#"{"name": "r", "nodes": [
        {"id": 1, "op": "Parameter", "attrs": {"element_type": "f64", "shape": [2]}}
      ], "parameters": [1], "results": [[4, 0]]}"#;
    assert!(!diagnostics(bad_result).is_empty());

    assert!(matches!(
        parse_function(
            r#"{"name": "x", "nodes": [{"id": 1, "op": "Frobnicate"}], "parameters": [], "results": []}"#
        ),
        Err(ParseError::UnknownOp(_))
    ));
}

#[test]
fn dot_has_one_edge_per_input() {
    let f = random_function(&mut StdRng::seed_from_u64(3), &GraphConfig::default());
    let text = export_dot(&f);
    let edges = f.nodes().map(|n| n.inputs.len()).sum::<usize>();
    assert_eq!(text.matches(" -> ").count(), edges);
    assert_eq!(text.matches('{').count(), text.matches('}').count());
    assert!(text.starts_with("digraph "));
}
