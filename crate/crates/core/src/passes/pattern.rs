//! Structural pattern matching over the graph.

use std::collections::BTreeMap;

use crate::ir::{Function, NodeId, Op, OpTag};

#[derive(Debug, Clone, PartialEq)]
pub enum ConstantPredicate {
    /// Every element equals the value (numerically, so -0.0 matches 0).
    AllEqual(f64),
}

impl ConstantPredicate {
    fn holds(&self, op: &Op) -> bool {
        match (self, op) {
            (ConstantPredicate::AllEqual(v), Op::Constant { value, .. }) => value.all_equal(*v),
            _ => false,
        }
    }
}

/// A rooted tree of matchers. Repeating a wildcard label requires all its
/// occurrences to bind the same node.
#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Op(OpTag, Vec<Pattern>),
    Wildcard(String),
    Constant(ConstantPredicate),
}

impl Pattern {
    pub fn op(tag: OpTag, args: impl Into<Vec<Pattern>>) -> Pattern {
        let args = args.into();
        debug_assert_eq!(args.len(), tag.arity(), "pattern arity for {tag}");
        Pattern::Op(tag, args)
    }

    pub fn any(label: impl Into<String>) -> Pattern {
        Pattern::Wildcard(label.into())
    }

    pub fn constant_equal(value: f64) -> Pattern {
        Pattern::Constant(ConstantPredicate::AllEqual(value))
    }
}

pub type Bindings = BTreeMap<String, NodeId>;

/// Matches `pattern` against the graph rooted at `root`. Returns the
/// label bindings, or `None` when the pattern does not match.
pub fn match_pattern(pattern: &Pattern, f: &Function, root: NodeId) -> Option<Bindings> {
    let mut bindings = Bindings::new();
    match_at(pattern, f, root, &mut bindings).then_some(bindings)
}

fn match_at(pattern: &Pattern, f: &Function, id: NodeId, bindings: &mut Bindings) -> bool {
    match pattern {
        Pattern::Wildcard(label) => match bindings.get(label) {
            Some(&bound) => bound == id,
            None => {
                bindings.insert(label.clone(), id);
                true
            }
        },
        Pattern::Constant(pred) => f.node(id).is_some_and(|n| pred.holds(&n.op)),
        Pattern::Op(tag, args) => {
            let Some(node) = f.node(id) else {
                return false;
            };
            if node.op.tag() != *tag || node.inputs.len() != args.len() {
                return false;
            }
            node.inputs
                .iter()
                .zip(args)
                .all(|(input, sub)| input.port == 0 && match_at(sub, f, input.node, bindings))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Buffer, ElementType, TensorDescriptor};

    fn setup() -> (Function, NodeId, NodeId, NodeId) {
        let d = TensorDescriptor::new(ElementType::F64, [2]);
        let mut f = Function::new("p");
        let x = f.add_parameter(d.clone()).unwrap();
        let y = f.add_parameter(d.clone()).unwrap();
        let zero = f
            .add_constant(d.clone(), Buffer::F64(vec![0.0, -0.0]))
            .unwrap();
        (f, x, y, zero)
    }

    #[test]
    fn add_zero_binds_operand() {
        let (mut f, x, _, zero) = setup();
        let e = f.add_node(Op::Exp, [x]).unwrap();
        let add = f.add_node(Op::Add, [e, zero]).unwrap();
        let p = Pattern::op(
            OpTag::Add,
            [Pattern::any("x"), Pattern::constant_equal(0.0)],
        );
        let b = match_pattern(&p, &f, add).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b["x"], e);
    }

    #[test]
    fn nonzero_constant_does_not_match() {
        let (mut f, x, _, _) = setup();
        let d = TensorDescriptor::new(ElementType::F64, [2]);
        let one = f.add_constant(d, Buffer::F64(vec![1.0, 1.0])).unwrap();
        let add = f.add_node(Op::Add, [x, one]).unwrap();
        let p = Pattern::op(
            OpTag::Add,
            [Pattern::any("x"), Pattern::constant_equal(0.0)],
        );
        assert_eq!(match_pattern(&p, &f, add), None);
    }

    #[test]
    fn repeated_labels_must_agree() {
        let (mut f, x, y, _) = setup();
        let p = Pattern::op(OpTag::Multiply, [Pattern::any("x"), Pattern::any("x")]);
        let mixed = f.add_node(Op::Multiply, [x, y]).unwrap();
        assert_eq!(match_pattern(&p, &f, mixed), None);
        let square = f.add_node(Op::Multiply, [x, x]).unwrap();
        assert_eq!(match_pattern(&p, &f, square).unwrap()["x"], x);
    }

    #[test]
    fn nested_patterns() {
        let (mut f, x, _, _) = setup();
        let n1 = f.add_node(Op::Negate, [x]).unwrap();
        let n2 = f.add_node(Op::Negate, [n1]).unwrap();
        let p = Pattern::op(
            OpTag::Negate,
            [Pattern::op(OpTag::Negate, [Pattern::any("x")])],
        );
        assert_eq!(match_pattern(&p, &f, n2).unwrap()["x"], x);
        assert_eq!(match_pattern(&p, &f, n1), None);
    }
}
