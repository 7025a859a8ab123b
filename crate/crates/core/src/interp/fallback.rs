use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Function, Node, NodeId, Op, Output};
use crate::passes::partition;

use super::{compile, CompileOptions, ExecError, TensorValue};

/// Partitions `f` between a main and a fallback backend, compiles each group
/// as its own function and runs the groups in dependency order, passing
/// boundary tensors between them. Both backends share the interpreter's
/// kernels, so the outputs match a single [`compile`] and call. Results are
/// returned row-major.
pub fn run_with_fallback(
    f: &Function,
    supported: impl Fn(&Node) -> bool,
    inputs: &[TensorValue],
    options: &CompileOptions,
) -> Result<Vec<TensorValue>, ExecError> {
    let diagnostics = f.validate();
    if !diagnostics.is_empty() {
        return Err(ExecError::Invalid(diagnostics));
    }
    let expected = f.parameter_descriptors();
    if inputs.len() != expected.len() {
        return Err(ExecError::SignatureMismatch(format!(
            "expected {} inputs, got {}",
            expected.len(),
            inputs.len()
        )));
    }

    let mut values: BTreeMap<Output, TensorValue> = BTreeMap::new();
    for (i, (p, t)) in f.parameters().iter().zip(inputs).enumerate() {
        if t.descriptor() != &expected[i] {
            return Err(ExecError::SignatureMismatch(format!(
                "input {i}: expected {}, got {}",
                expected[i],
                t.descriptor()
            )));
        }
        values.insert(
            (*p).into(),
            TensorValue::from_row_major(t.descriptor().clone(), t.to_row_major())?,
        );
    }
    for node in f.nodes() {
        if let Op::Constant { descriptor, value } = &node.op {
            values.insert(
                node.id.into(),
                TensorValue::from_row_major(descriptor.clone(), value.clone())?,
            );
        }
    }

    let order = f.topological_order()?;
    let consumers = f.consumers();
    let final_results: BTreeSet<Output> = f.results().iter().copied().collect();
    let sub_options = CompileOptions {
        parameter_layouts: Vec::new(),
        ..options.clone()
    };

    let partitioning = partition(f, supported);
    for (index, group) in partitioning.groups.iter().enumerate() {
        let mut sub = Function::new(format!("{}.{index}", f.name()));
        let mut renamed: BTreeMap<Output, Output> = BTreeMap::new();
        let mut sub_inputs: Vec<TensorValue> = Vec::new();

        for &id in order.iter().filter(|id| group.nodes.contains(id)) {
            let node = f.node(id).unwrap();
            let mut wired = Vec::with_capacity(node.inputs.len());
            for input in &node.inputs {
                if let Some(&o) = renamed.get(input) {
                    wired.push(o);
                    continue;
                }
                let producer = f.node(input.node).unwrap();
                let new_id = match &producer.op {
                    Op::Constant { descriptor, value } => {
                        sub.add_constant(descriptor.clone(), value.clone())?
                    }
                    _ => {
                        let value = values
                            .get(input)
                            .expect("groups run after their producers")
                            .clone();
                        let p = sub.add_parameter(value.descriptor().clone())?;
                        sub_inputs.push(value);
                        p
                    }
                };
                renamed.insert(*input, new_id.into());
                wired.push(new_id.into());
            }
            let new_id = sub.add_op(node.op.clone(), wired)?;
            renamed.insert(id.into(), new_id.into());
        }

        let exported: Vec<NodeId> = group
            .nodes
            .iter()
            .copied()
            .filter(|id| {
                final_results.contains(&(*id).into())
                    || consumers
                        .get(id)
                        .is_some_and(|cs| cs.iter().any(|c| !group.nodes.contains(c)))
            })
            .collect();
        sub.set_results(exported.iter().map(|id| renamed[&(*id).into()]).collect())?;

        let exe = compile(&sub, &sub_options)?;
        let outputs = exe.call(&sub_inputs)?;
        for (id, t) in exported.into_iter().zip(outputs) {
            let row_major = TensorValue::from_row_major(t.descriptor().clone(), t.to_row_major())?;
            values.insert(id.into(), row_major);
        }
    }

    Ok(f.results().iter().map(|r| values[r].clone()).collect())
}
