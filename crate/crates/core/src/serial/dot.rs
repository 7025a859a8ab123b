use std::fmt::Write;

use crate::ir::Function;

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text: one vertex per node labelled `id: op [shape]`, one edge per
/// input, both in id order.
pub fn export_dot(f: &Function) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quoted(f.name())).unwrap();
    for node in f.nodes() {
        let shape = node
            .outputs
            .first()
            .map(|d| d.shape.to_string())
            .unwrap_or_default();
        let label = format!("{}: {} {}", node.id, node.op, shape);
        writeln!(out, "  n{} [label={}];", node.id, quoted(&label)).unwrap();
    }
    for node in f.nodes() {
        for input in &node.inputs {
            writeln!(out, "  n{} -> n{};", input.node, node.id).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ElementType, Op, TensorDescriptor};

    #[test]
    fn chain_of_three() {
        let mut f = Function::new("chain");
        let x = f
            .add_parameter(TensorDescriptor::new(ElementType::F64, [2]))
            .unwrap();
        let a = f.add_node(Op::Exp, [x]).unwrap();
        let b = f.add_node(Op::Negate, [a]).unwrap();
        f.add_result(b).unwrap();
        assert_eq!(
            export_dot(&f),
            "digraph \"chain\" {\n  n1 [label=\"1: Parameter [2]\"];\n  n2 [label=\"2: Exp [2]\"];\n  n3 [label=\"3: Negate [2]\"];\n  n1 -> n2;\n  n2 -> n3;\n}\n"
        );
    }
}
