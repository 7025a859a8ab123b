use std::collections::HashMap;

use crate::ir::{Function, NodeId, Op, Output};

/// Merges nodes with identical op, attributes and inputs onto the earliest
/// one. Parameters are never merged.
pub fn eliminate_common_subexpressions(f: &Function) -> Function {
    let mut g = f.clone();
    loop {
        let mut seen: HashMap<(Op, Vec<Output>), NodeId> = HashMap::new();
        let mut changed = false;
        let order = g
            .topological_order()
            .expect("cse requires a valid function");
        for id in order {
            let node = g.node(id).expect("node in order");
            if matches!(node.op, Op::Parameter(_)) {
                continue;
            }
            let key = (node.op.clone(), node.inputs.clone());
            match seen.get(&key) {
                // ready at the same time as `id`, so the min-id order saw it first
                Some(&keep) => {
                    g.replace_uses(id.into(), keep.into());
                    g.remove_node(id);
                    changed = true;
                }
                None => {
                    seen.insert(key, id);
                }
            }
        }
        if !changed {
            return g;
        }
    }
}
