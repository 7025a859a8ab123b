//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

use std::process::ExitCode;

use graphforge::autodiff::differentiate;
use graphforge::interp::{compile, run_with_fallback, CompileOptions, TensorValue};
use graphforge::ir::{
    build_softmax, Buffer, ElementType, Function, Node, NodeId, Op, OpTag, Padding, Shape,
    TensorDescriptor,
};
use graphforge::layout::Layout;
use graphforge::passes::{
    liveness, partition, plan_memory, run_pipeline, ConvLayout, LayoutPreferences, Pass, ALIGNMENT,
};
use graphforge::serial::{parse_function, print_function};
use graphforge_testkit::{
    check_partition, check_plan, max_abs_diff, random_function, random_inputs, reference_liveness,
    GraphConfig,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const GRAPHS: usize = 200;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn corpus() -> Vec<Function> {
    let mut rng = StdRng::seed_from_u64(2024);
    (0..GRAPHS)
        .map(|i| {
            let config = GraphConfig {
                element_type: if i % 4 == 3 {
                    ElementType::F32
                } else {
                    ElementType::F64
                },
                ..GraphConfig::default()
            };
            random_function(&mut rng, &config)
        })
        .collect()
}

fn d(shape: &[usize]) -> TensorDescriptor {
    TensorDescriptor::new(ElementType::F64, shape)
}

// ---- gradients ----

/// Draws one point, or None to resample near a kink.
type Sampler = Box<dyn Fn(&mut StdRng) -> Option<Vec<TensorValue>>>;

struct Case {
    name: &'static str,
    f: Function,
    sample: Sampler,
}

/// False for NaN, unlike a negated comparison.
fn within(x: f64, tolerance: f64) -> bool {
    x <= tolerance
}

fn uniform(rng: &mut StdRng, shape: &[usize], lo: f64, hi: f64) -> TensorValue {
    let n = shape.iter().product();
    TensorValue::f64(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .unwrap()
}

fn away_from_zero(rng: &mut StdRng, shape: &[usize]) -> TensorValue {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.5..2.0);
            if rng.gen() {
                m
            } else {
                -m
            }
        })
        .collect();
    TensorValue::f64(shape.to_vec(), data).unwrap()
}

fn values(t: &TensorValue) -> Vec<f64> {
    t.to_row_major().to_f64_vec()
}

/// `sum(y * w)` for a fixed weight tensor, so every output element counts.
fn weighted_loss(f: &mut Function, y: NodeId, seed: u64) {
    let shape = f.node(y).unwrap().descriptor().shape.clone();
    let mut rng = StdRng::seed_from_u64(seed);
    let n = shape.element_count();
    let w = f
        .add_constant(
            d(shape.dims()),
            Buffer::F64((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        )
        .unwrap();
    let m = f.add_node(Op::Multiply, [y, w]).unwrap();
    let s = f.add_node(Op::sum(0..shape.rank()), [m]).unwrap();
    f.add_result(s).unwrap();
}

fn unary_case(name: &'static str, op: Op, lo: f64, hi: f64, kink: Option<f64>) -> Case {
    let mut f = Function::new(name);
    let x = f.add_parameter(d(&[2, 3])).unwrap();
    let y = f.add_node(op, [x]).unwrap();
    weighted_loss(&mut f, y, 1);
    Case {
        name,
        f,
        sample: Box::new(move |rng| {
            let x = uniform(rng, &[2, 3], lo, hi);
            match kink {
                Some(k) if values(&x).iter().any(|v| (v - k).abs() < 1e-3) => None,
                _ => Some(vec![x]),
            }
        }),
    }
}

fn binary_case(name: &'static str, op: Op) -> Case {
    let mut f = Function::new(name);
    let a = f.add_parameter(d(&[2, 3])).unwrap();
    let b = f.add_parameter(d(&[2, 3])).unwrap();
    let y = f.add_node(op.clone(), [a, b]).unwrap();
    weighted_loss(&mut f, y, 2);
    Case {
        name,
        f,
        sample: Box::new(move |rng| {
            let a = uniform(rng, &[2, 3], -2.0, 2.0);
            let b = match op {
                Op::Divide => away_from_zero(rng, &[2, 3]),
                _ => uniform(rng, &[2, 3], -2.0, 2.0),
            };
            if op == Op::Maximum
                && values(&a)
                    .iter()
                    .zip(values(&b))
                    .any(|(x, y)| (x - y).abs() < 1e-3)
            {
                return None;
            }
            Some(vec![a, b])
        }),
    }
}

fn shaped_case(
    name: &'static str,
    inputs: &[&[usize]],
    build: impl Fn(&mut Function, &[NodeId]) -> NodeId,
) -> Case {
    let mut f = Function::new(name);
    let params: Vec<NodeId> = inputs
        .iter()
        .map(|s| f.add_parameter(d(s)).unwrap())
        .collect();
    let y = build(&mut f, &params);
    weighted_loss(&mut f, y, 3);
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|s| s.to_vec()).collect();
    Case {
        name,
        f,
        sample: Box::new(move |rng| {
            Some(shapes.iter().map(|s| uniform(rng, s, -2.0, 2.0)).collect())
        }),
    }
}

fn mlp_case() -> Case {
    let mut f = Function::new("mlp");
    let x = f.add_parameter(d(&[1, 4])).unwrap();
    let w1 = f.add_parameter(d(&[4, 5])).unwrap();
    let w2 = f.add_parameter(d(&[5, 3])).unwrap();
    let h = f.add_node(Op::Dot, [x, w1]).unwrap();
    let r = f.add_node(Op::Relu, [h]).unwrap();
    let o = f.add_node(Op::Dot, [r, w2]).unwrap();
    let s = build_softmax(&mut f, o, 1).unwrap();
    let target = f
        .add_constant(d(&[1, 3]), Buffer::F64(vec![0.2, 0.5, 0.3]))
        .unwrap();
    let m = f.add_node(Op::Multiply, [s, target]).unwrap();
    let loss = f.add_node(Op::sum([0, 1]), [m]).unwrap();
    f.add_result(loss).unwrap();
    Case {
        name: "mlp",
        f,
        sample: Box::new(|rng| {
            let x = uniform(rng, &[1, 4], -2.0, 2.0);
            let w1 = uniform(rng, &[4, 5], -1.0, 1.0);
            let w2 = uniform(rng, &[5, 3], -1.0, 1.0);
            let (xv, wv) = (values(&x), values(&w1));
            let near_kink = (0..5).any(|j| {
                let pre: f64 = (0..4).map(|k| xv[k] * wv[k * 5 + j]).sum();
                pre.abs() < 1e-3
            });
            (!near_kink).then(|| vec![x, w1, w2])
        }),
    }
}

fn gradient_cases() -> Vec<Case> {
    vec![
        unary_case("negate", Op::Negate, -2.0, 2.0, None),
        unary_case("exp", Op::Exp, -2.0, 2.0, None),
        unary_case("log", Op::Log, 0.5, 2.0, None),
        unary_case("tanh", Op::Tanh, -2.0, 2.0, None),
        unary_case("sigmoid", Op::Sigmoid, -2.0, 2.0, None),
        unary_case("relu", Op::Relu, -2.0, 2.0, Some(0.0)),
        binary_case("add", Op::Add),
        binary_case("subtract", Op::Subtract),
        binary_case("multiply", Op::Multiply),
        binary_case("divide", Op::Divide),
        binary_case("maximum", Op::Maximum),
        shaped_case("dot", &[&[2, 3], &[3, 4]], |f, p| {
            f.add_node(Op::Dot, [p[0], p[1]]).unwrap()
        }),
        shaped_case("broadcast", &[&[3]], |f, p| {
            f.add_node(Op::broadcast([2, 3, 2], [0, 2]), [p[0]])
                .unwrap()
        }),
        shaped_case("sum", &[&[2, 3, 4]], |f, p| {
            f.add_node(Op::sum([1]), [p[0]]).unwrap()
        }),
        shaped_case("reshape", &[&[2, 3, 4]], |f, p| {
            f.add_node(Op::reshape([2, 0, 1], [4, 6]), [p[0]]).unwrap()
        }),
        shaped_case("conv2d", &[&[1, 2, 5, 4], &[3, 2, 3, 2]], |f, p| {
            let padding = Padding {
                top: 1,
                bottom: 0,
                left: 1,
                right: 1,
            };
            f.add_node(Op::conv2d((1, 1), padding), [p[0], p[1]])
                .unwrap()
        }),
        shaped_case("softmax", &[&[2, 3]], |f, p| {
            build_softmax(f, p[0], 1).unwrap()
        }),
        mlp_case(),
    ]
}

/// Central differences, evaluated with the interpreter on the forward graph.
fn numeric_gradient(f: &Function, point: &[TensorValue]) -> Vec<Vec<f64>> {
    let exe = compile(f, &CompileOptions::unoptimized()).unwrap();
    let eval = |args: &[TensorValue]| exe.call(args).unwrap()[0].to_row_major().get_f64(0);
    let mut grads = Vec::new();
    for (p, t) in point.iter().enumerate() {
        let base = values(t);
        let mut g = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let step = 1e-6 * base[i].abs().max(1.0);
            let shifted = |delta: f64| {
                let mut v = base.clone();
                v[i] += delta;
                let mut args = point.to_vec();
                args[p] = TensorValue::f64(t.shape().clone(), v).unwrap();
                eval(&args)
            };
            g.push((shifted(step) - shifted(-step)) / (2.0 * step));
        }
        grads.push(g);
    }
    grads
}

fn gradients() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: (f64, &str) = (0.0, "");
    let cases = gradient_cases();
    for case in &cases {
        let wrt = case.f.parameters().to_vec();
        let grad = differentiate(&case.f, &wrt).map_err(|e| format!("{}: {e}", case.name))?;
        let exe = compile(&grad, &CompileOptions::unoptimized()).unwrap();
        let mut points = 0;
        while points < 20 {
            let Some(point) = (case.sample)(&mut rng) else {
                continue;
            };
            points += 1;
            let mut args = point.clone();
            args.push(TensorValue::f64(Shape::scalar(), vec![1.0]).unwrap());
            let analytic = exe.call(&args).unwrap();
            let numeric = numeric_gradient(&case.f, &point);
            for (a, n) in analytic.iter().zip(&numeric) {
                for (&x, &y) in values(a).iter().zip(n) {
                    let rel = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
                    if rel.is_nan() || rel >= 1e-5 {
                        return Err(format!(
                            "{}: analytic {x} numeric {y} (rel {rel:.2e})",
                            case.name
                        ));
                    }
                    if rel > worst.0 {
                        worst = (rel, case.name);
                    }
                }
            }
        }
    }
    Ok(format!(
        "{} cases x 20 points, worst relative error {:.2e} ({})",
        cases.len(),
        worst.0,
        worst.1
    ))
}

// ---- passes ----

fn ordered_pipelines() -> Vec<Vec<Pass>> {
    fn extend(prefix: Vec<Pass>, out: &mut Vec<Vec<Pass>>) {
        out.push(prefix.clone());
        for p in Pass::ALL {
            if !prefix.contains(&p) {
                let mut next = prefix.clone();
                next.push(p);
                extend(next, out);
            }
        }
    }
    let mut out = Vec::new();
    extend(Vec::new(), &mut out);
    out
}

fn outputs_differ(a: &[TensorValue], b: &[TensorValue]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

fn pass_soundness(graphs: &[Function]) -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let pipelines = ordered_pipelines();
    let prefs = LayoutPreferences::for_conv(ConvLayout::Nhwc);
    let mut runs = 0;
    let mut worst: f64 = 0.0;
    for (gi, f) in graphs.iter().enumerate() {
        let inputs = random_inputs(&mut rng, f);
        let baseline = compile(f, &CompileOptions::unoptimized())
            .unwrap()
            .call(&inputs)
            .unwrap();
        let tolerance = match f.parameter_descriptors()[0].element_type {
            ElementType::F32 => 1e-6,
            _ => 1e-12,
        };
        for passes in &pipelines {
            let g = run_pipeline(f, passes, &prefs).map_err(|e| format!("graph {gi}: {e}"))?;
            let out = compile(&g, &CompileOptions::unoptimized())
                .unwrap()
                .call(&inputs)
                .unwrap();
            let diff = outputs_differ(&baseline, &out);
            if !within(diff, tolerance) {
                return Err(format!(
                    "graph {gi} pipeline {passes:?}: difference {diff:e}"
                ));
            }
            if passes.as_slice() == [Pass::Fold]
                && !baseline.iter().zip(&out).all(|(a, b)| a.same_values(b))
            {
                return Err(format!("graph {gi}: constant folding is not bit-exact"));
            }
            worst = worst.max(diff);
            runs += 1;
        }
        let optimized = compile(f, &CompileOptions::default())
            .unwrap()
            .call(&inputs)
            .unwrap();
        let diff = outputs_differ(&baseline, &optimized);
        if !within(diff, tolerance) {
            return Err(format!("graph {gi} default compile: difference {diff:e}"));
        }
    }
    let tags: std::collections::BTreeSet<OpTag> = graphs
        .iter()
        .flat_map(|f| f.nodes().map(|n| n.op.tag()))
        .collect();
    Ok(format!(
        "{} graphs x {} pipelines = {runs} runs, {} op kinds, worst difference {worst:e}",
        graphs.len(),
        pipelines.len(),
        tags.len()
    ))
}

// ---- memory ----

fn uniform_chain(intermediates: usize) -> Function {
    let mut f = Function::new("chain");
    let mut cur = f.add_parameter(d(&[100])).unwrap();
    for _ in 0..=intermediates {
        cur = f.add_node(Op::Exp, [cur]).unwrap();
    }
    f.add_result(cur).unwrap();
    f
}

fn memory_plans(graphs: &[Function]) -> Outcome {
    let mut plans = 0;
    for (gi, f) in graphs.iter().enumerate() {
        check_plan(f, &plan_memory(f)).map_err(|e| format!("graph {gi}: {e}"))?;
        let exe = compile(f, &CompileOptions::default()).unwrap();
        check_plan(exe.function(), exe.plan()).map_err(|e| format!("graph {gi} compiled: {e}"))?;
        plans += 2;
    }
    let slot = 800usize.div_ceil(ALIGNMENT) * ALIGNMENT;
    for n in 2..=50 {
        let arena = plan_memory(&uniform_chain(n)).arena_size;
        if arena != 2 * slot {
            return Err(format!(
                "chain of {n}: arena {arena}, expected {}",
                2 * slot
            ));
        }
    }
    Ok(format!(
        "{plans} plans checked; chains 2..=50 all use {} bytes",
        2 * slot
    ))
}

fn liveness_oracle(graphs: &[Function]) -> Outcome {
    for (gi, f) in graphs.iter().enumerate() {
        if liveness(f) != reference_liveness(f) {
            return Err(format!(
                "graph {gi}: intervals differ from the reference scan"
            ));
        }
        let exe = compile(f, &CompileOptions::default()).unwrap();
        let g = exe.function();
        if liveness(g) != reference_liveness(g) {
            return Err(format!("graph {gi} compiled: intervals differ"));
        }
    }
    Ok(format!("{} graphs, raw and compiled", graphs.len()))
}

// ---- partition ----

fn partitions(graphs: &[Function]) -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let mut small = 0;
    let mut groups = 0;
    for (gi, f) in graphs.iter().enumerate() {
        let allowed: Vec<OpTag> = OpTag::ALL.iter().copied().filter(|_| rng.gen()).collect();
        let supported = |n: &Node| allowed.contains(&n.op.tag());
        let p = partition(f, supported);
        // the checker's exhaustive merge test covers every instance, not only small ones
        check_partition(f, &p, supported).map_err(|e| format!("graph {gi}: {e}"))?;
        if f.node_count() <= 15 {
            small += 1;
        }
        groups += p.groups.len();
        let inputs = random_inputs(&mut rng, f);
        let options = CompileOptions::unoptimized();
        let plain = compile(f, &options).unwrap().call(&inputs).unwrap();
        let split = run_with_fallback(f, supported, &inputs, &options)
            .map_err(|e| format!("graph {gi}: {e}"))?;
        let same = plain.len() == split.len()
            && plain.iter().zip(&split).all(|(a, b)| {
                a.descriptor() == b.descriptor() && a.to_row_major().bit_eq(&b.to_row_major())
            });
        if !same {
            return Err(format!("graph {gi}: fallback execution differs"));
        }
    }
    Ok(format!(
        "{} graphs ({small} with at most 15 nodes), {groups} groups, fallback bit-equal",
        graphs.len()
    ))
}

// ---- layouts ----

/// With `explicit`, the data input passes through a channels-last
/// `ConvertLayout` before the first convolution.
fn conv_network(explicit: bool) -> Function {
    let mut f = Function::new("convnet");
    let mut x = f.add_parameter(d(&[2, 3, 7, 6])).unwrap();
    let k1 = f.add_parameter(d(&[4, 3, 3, 3])).unwrap();
    if explicit {
        let order = Layout::nhwc().order().to_vec();
        x = f.add_node(Op::ConvertLayout { order }, [x]).unwrap();
    }
    let c1 = f
        .add_node(Op::conv2d((1, 1), Padding::uniform(1)), [x, k1])
        .unwrap();
    let r = f.add_node(Op::Relu, [c1]).unwrap();
    let k2 = f.add_parameter(d(&[2, 4, 2, 3])).unwrap();
    let padding = Padding {
        top: 0,
        bottom: 1,
        left: 2,
        right: 0,
    };
    let c2 = f.add_node(Op::conv2d((2, 1), padding), [r, k2]).unwrap();
    let t = f.add_node(Op::Tanh, [c2]).unwrap();
    let dims = f.node(t).unwrap().descriptor().shape.clone();
    let flat = f
        .add_node(
            Op::reshape([0, 1, 2, 3], [2, dims.element_count() / 2]),
            [t],
        )
        .unwrap();
    f.add_result(flat).unwrap();
    f.add_result(c1).unwrap();
    f
}

fn layout_transparency() -> Outcome {
    let f = conv_network(false);
    let mut rng = StdRng::seed_from_u64(3);
    let inputs = random_inputs(&mut rng, &f);

    let mut runs = Vec::new();
    for value in ["identity", "nhwc"] {
        std::env::set_var(ConvLayout::ENV_VAR, value);
        let options = CompileOptions {
            conv_layout: ConvLayout::from_env()?,
            ..CompileOptions::default()
        };
        let exe = compile(&f, &options).unwrap();
        runs.push(exe.call(&inputs).unwrap());
    }
    std::env::remove_var(ConvLayout::ENV_VAR);
    let diff = outputs_differ(&runs[0], &runs[1]);
    if !within(diff, 1e-12) {
        return Err(format!("identity vs nhwc differ by {diff:e}"));
    }

    // the same data handed over channels-last, declared via parameter layouts
    let nhwc = Layout::nhwc();
    let mut permuted = inputs.clone();
    permuted[0] = inputs[0].with_layout(nhwc.clone()).unwrap();
    let options = CompileOptions {
        optimize: false,
        parameter_layouts: vec![nhwc.clone(), Layout::identity(4), Layout::identity(4)],
        ..CompileOptions::default()
    };
    let from_permuted = compile(&f, &options).unwrap().call(&permuted).unwrap();
    let reference = compile(&f, &CompileOptions::unoptimized())
        .unwrap()
        .call(&inputs)
        .unwrap();

    // and with explicit conversions written into the graph
    let explicit = compile(&conv_network(true), &CompileOptions::unoptimized())
        .unwrap()
        .call(&inputs)
        .unwrap();

    for (name, other) in [
        ("permuted input", &from_permuted),
        ("explicit conversion", &explicit),
    ] {
        let same = reference.len() == other.len()
            && reference.iter().zip(other).all(|(a, b)| a.same_values(b));
        if !same {
            return Err(format!("{name} is not bit-equal to the row-major run"));
        }
    }
    Ok(format!(
        "identity vs nhwc difference {diff:e}; permuted inputs bit-equal"
    ))
}

// ---- determinism ----

fn determinism(graphs: &[Function]) -> Outcome {
    let mut rng = StdRng::seed_from_u64(17);
    for (gi, f) in graphs.iter().enumerate() {
        let text = print_function(f);
        let parsed = parse_function(&text).map_err(|e| format!("graph {gi}: {e}"))?;
        if parsed != *f || print_function(&parsed) != text {
            return Err(format!("graph {gi}: print/parse is not a fixpoint"));
        }
        if print_function(f) != text {
            return Err(format!("graph {gi}: printer unstable"));
        }
        let inputs = random_inputs(&mut rng, f);
        let options = CompileOptions::default();
        let a = compile(f, &options).unwrap();
        let b = compile(&parsed, &options).unwrap();
        if a.to_string() != b.to_string() {
            return Err(format!("graph {gi}: compiled listings differ"));
        }
        let first = a.call(&inputs).unwrap();
        for out in [a.call(&inputs).unwrap(), b.call(&inputs).unwrap()] {
            if !first.iter().zip(&out).all(|(x, y)| x.same_values(y)) {
                return Err(format!("graph {gi}: repeated calls differ"));
            }
        }
    }
    Ok(format!(
        "{} graphs: round trip, stable printer, identical reruns",
        graphs.len()
    ))
}

fn main() -> ExitCode {
    let graphs = corpus();
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Box::new(gradients)),
        ("pass soundness", Box::new(|| pass_soundness(&graphs))),
        ("memory plan validity", Box::new(|| memory_plans(&graphs))),
        (
            "liveness oracle equality",
            Box::new(|| liveness_oracle(&graphs)),
        ),
        ("partition contracts", Box::new(|| partitions(&graphs))),
        ("layout transparency", Box::new(layout_transparency)),
        (
            "determinism and round trip",
            Box::new(|| determinism(&graphs)),
        ),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
