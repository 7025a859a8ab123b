use crate::interp::kernels::{evaluate, KernelInput};
use crate::ir::{Buffer, Function, Op, Shape};

use super::PassError;

/// Replaces every node whose inputs are all constants by a constant holding
/// its value, computed with the interpreter's own kernels.
pub fn constant_fold(f: &Function) -> Result<Function, PassError> {
    let mut g = f.clone();
    let order = g.topological_order().map_err(PassError::Ir)?;
    for id in order {
        let node = g.node(id).expect("node in order");
        if node.op.is_source() || node.inputs.is_empty() {
            continue;
        }
        let mut values: Vec<(&Buffer, &Shape)> = Vec::with_capacity(node.inputs.len());
        for input in &node.inputs {
            match &g.node(input.node).expect("wired input").op {
                Op::Constant { descriptor, value } => values.push((value, &descriptor.shape)),
                _ => break,
            }
        }
        if values.len() != node.inputs.len() {
            continue;
        }
        let inputs: Vec<KernelInput> = values
            .iter()
            .map(|(buffer, shape)| KernelInput { buffer, shape })
            .collect();
        let descriptor = node.descriptor().clone();
        let value =
            evaluate(&node.op, &inputs, &descriptor).map_err(|e| PassError::FoldFailure {
                node: id,
                message: e.to_string(),
            })?;
        g.replace_op(id, Op::Constant { descriptor, value }, Vec::new())
            .map_err(PassError::Ir)?;
    }
    g.prune_unreachable();
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ElementType, Output, TensorDescriptor};

    #[test]
    fn two_plus_three() {
        let d = TensorDescriptor::new(ElementType::F64, []);
        let mut f = Function::new("k");
        let a = f.add_constant(d.clone(), Buffer::F64(vec![2.0])).unwrap();
        let b = f.add_constant(d.clone(), Buffer::F64(vec![3.0])).unwrap();
        let s = f.add_node(Op::Add, [a, b]).unwrap();
        f.add_result(s).unwrap();
        let g = constant_fold(&f).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(
            g.node(s).unwrap().op,
            Op::Constant {
                descriptor: d,
                value: Buffer::F64(vec![5.0])
            }
        );
    }

    #[test]
    fn identity_times_matrix() {
        let d = TensorDescriptor::new(ElementType::F64, [2, 2]);
        let mut f = Function::new("k");
        let i = f
            .add_constant(d.clone(), Buffer::F64(vec![1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let m = Buffer::F64(vec![1.5, -2.0, 3.25, 7.0]);
        let mc = f.add_constant(d.clone(), m.clone()).unwrap();
        let p = f.add_node(Op::Dot, [i, mc]).unwrap();
        f.add_result(p).unwrap();
        let g = constant_fold(&f).unwrap();
        assert_eq!(
            g.node(p).unwrap().op,
            Op::Constant {
                descriptor: d,
                value: m
            }
        );
    }

    #[test]
    fn nan_folds_and_parameters_block() {
        let d = TensorDescriptor::new(ElementType::F64, []);
        let mut f = Function::new("k");
        let x = f.add_parameter(d.clone()).unwrap();
        let c = f.add_constant(d.clone(), Buffer::F64(vec![-1.0])).unwrap();
        let l = f.add_node(Op::Log, [c]).unwrap();
        let s = f.add_node(Op::Add, [x, l]).unwrap();
        f.add_result(s).unwrap();
        let g = constant_fold(&f).unwrap();
        match &g.node(l).unwrap().op {
            Op::Constant {
                value: Buffer::F64(v),
                ..
            } => assert!(v[0].is_nan()),
            other => panic!("not folded: {other:?}"),
        }
        assert_eq!(g.node(s).unwrap().op, Op::Add);
        assert_eq!(
            g.node(s).unwrap().inputs,
            vec![Output::from(x), Output::from(l)]
        );
    }
}
