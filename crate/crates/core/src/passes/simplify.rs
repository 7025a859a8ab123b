//! Algebraic identity rewrites.
//!
//! Rules: `x+0`, `0+x`, `x-0`, `x*1`, `1*x`, `x/1`, `-(-x)` all become `x`,
//! and a pair of reshapes whose composition is the identity map is removed.
//! `x*0` is not rewritten since it does not preserve NaN or infinities.

use std::sync::OnceLock;

use crate::interp::kernels::permute_indices;
use crate::ir::{Function, NodeId, Op, OpTag, Output};

use super::pattern::{match_pattern, Pattern};

fn rules() -> &'static [Pattern] {
    static RULES: OnceLock<Vec<Pattern>> = OnceLock::new();
    RULES.get_or_init(|| {
        let x = || Pattern::any("x");
        let zero = || Pattern::constant_equal(0.0);
        let one = || Pattern::constant_equal(1.0);
        vec![
            Pattern::op(OpTag::Add, [x(), zero()]),
            Pattern::op(OpTag::Add, [zero(), x()]),
            Pattern::op(OpTag::Subtract, [x(), zero()]),
            Pattern::op(OpTag::Multiply, [x(), one()]),
            Pattern::op(OpTag::Multiply, [one(), x()]),
            Pattern::op(OpTag::Divide, [x(), one()]),
            Pattern::op(OpTag::Negate, [Pattern::op(OpTag::Negate, [x()])]),
        ]
    })
}

/// If `id` is an outer reshape whose composition with an inner reshape is
/// the identity map, returns the inner reshape's input.
fn identity_reshape_pair(f: &Function, id: NodeId) -> Option<Output> {
    let outer = f.node(id)?;
    let Op::Reshape {
        input_order: outer_order,
        shape: outer_shape,
    } = &outer.op
    else {
        return None;
    };
    let inner = f.node(outer.inputs[0].node)?;
    let Op::Reshape {
        input_order: inner_order,
        ..
    } = &inner.op
    else {
        return None;
    };
    let source = inner.inputs[0];
    let source_shape = &f.descriptor(source)?.shape;
    if outer_shape != source_shape {
        return None;
    }
    let first = permute_indices(source_shape, inner_order);
    let second = permute_indices(&inner.descriptor().shape, outer_order);
    let identity = second.iter().enumerate().all(|(i, &j)| first[j] == i);
    identity.then_some(source)
}

fn rewrite_target(f: &Function, id: NodeId) -> Option<Output> {
    for rule in rules() {
        if let Some(b) = match_pattern(rule, f, id) {
            return Some(b["x"].into());
        }
    }
    identity_reshape_pair(f, id)
}

/// Applies the rewrite rules in topological order until nothing changes,
/// then drops unreachable nodes.
pub fn algebraic_simplify(f: &Function) -> Function {
    let mut g = f.clone();
    loop {
        let mut changed = false;
        let order = g
            .topological_order()
            .expect("simplify requires a valid function");
        for id in order {
            if g.node(id).is_none() {
                continue;
            }
            if let Some(target) = rewrite_target(&g, id) {
                g.replace_uses(id.into(), target);
                changed = true;
            }
        }
        changed |= g.prune_unreachable() > 0;
        if !changed {
            return g;
        }
    }
}
