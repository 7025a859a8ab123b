use std::collections::{BTreeMap, BTreeSet};

use graphforge::interp::{Executable, TensorValue};
use graphforge::ir::{Function, Node, NodeId, Output};
use graphforge::passes::{BackendTag, LiveInterval, MemoryPlan, Partitioning};
use rand::Rng;

/// Does `order` list every node exactly once with each producer before its
/// consumers?
pub fn is_topological_order(f: &Function, order: &[NodeId]) -> bool {
    let all: BTreeSet<NodeId> = f.nodes().map(|n| n.id).collect();
    let listed: BTreeSet<NodeId> = order.iter().copied().collect();
    if listed != all || order.len() != all.len() {
        return false;
    }
    for (j, &id) in order.iter().enumerate() {
        for input in &f.node(id).unwrap().inputs {
            if !order[..j].contains(&input.node) {
                return false;
            }
        }
    }
    true
}

fn backward_closure(f: &Function) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<NodeId> = f.results().iter().map(|r| r.node).collect();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            stack.extend(f.node(id).unwrap().inputs.iter().map(|i| i.node));
        }
    }
    seen
}

/// Intervals by a direct scan of every later instruction, over the order
/// `f.topological_order()` yields.
pub fn reference_liveness(f: &Function) -> Vec<LiveInterval> {
    let order = f.topological_order().unwrap();
    let live = backward_closure(f);
    let mut out = Vec::new();
    for (i, &id) in order.iter().enumerate() {
        if !live.contains(&id) {
            continue;
        }
        let node = f.node(id).unwrap();
        let tensor = Output::from(id);
        let is_source = node.op.is_source();
        let mut end = None;
        for (j, &consumer) in order.iter().enumerate() {
            if j > i
                && live.contains(&consumer)
                && f.node(consumer).unwrap().inputs.contains(&tensor)
            {
                end = Some(j);
            }
        }
        if f.results().contains(&tensor) {
            end = Some(LiveInterval::END_OF_PROGRAM);
        }
        let Some(end) = end else { continue };
        let start = if is_source { 0 } else { i };
        out.push(LiveInterval { tensor, start, end });
    }
    out
}

/// Alignment, pairwise disjointness of simultaneously live tensors, the
/// reported arena size, and the arena bound by the sum of aligned sizes.
pub fn check_plan(f: &Function, plan: &MemoryPlan) -> Result<(), String> {
    let results: BTreeSet<Output> = f.results().iter().copied().collect();
    let live = backward_closure(f);
    let expected: BTreeSet<Output> = f
        .nodes()
        .filter(|n| live.contains(&n.id) && !n.op.is_source())
        .map(|n| Output::from(n.id))
        .filter(|t| !results.contains(t))
        .collect();
    let planned: BTreeSet<Output> = plan.placements.iter().map(|p| p.tensor()).collect();
    if planned != expected || planned.len() != plan.placements.len() {
        return Err(format!("planned {planned:?}, expected {expected:?}"));
    }
    let align = |n: usize| n.div_ceil(plan.alignment) * plan.alignment;
    let mut end = 0;
    let mut total = 0;
    for p in &plan.placements {
        let size = f.descriptor(p.tensor()).unwrap().byte_size();
        if p.size != size {
            return Err(format!(
                "{} has size {}, expected {size}",
                p.tensor(),
                p.size
            ));
        }
        if p.offset % plan.alignment != 0 {
            return Err(format!("{} at unaligned offset {}", p.tensor(), p.offset));
        }
        end = end.max(p.offset + p.size);
        total += align(p.size);
    }
    for (i, a) in plan.placements.iter().enumerate() {
        for b in &plan.placements[i + 1..] {
            let both_live =
                a.interval.start <= b.interval.end && b.interval.start <= a.interval.end;
            let bytes_overlap = a.size > 0
                && b.size > 0
                && a.offset < b.offset + b.size
                && b.offset < a.offset + a.size;
            if both_live && bytes_overlap {
                return Err(format!("{} and {} overlap", a.tensor(), b.tensor()));
            }
        }
    }
    if plan.arena_size != align(end) {
        return Err(format!("arena {} but highest byte {end}", plan.arena_size));
    }
    if plan.arena_size > total {
        return Err(format!(
            "arena {} exceeds sum of sizes {total}",
            plan.arena_size
        ));
    }
    Ok(())
}

fn cyclic(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    // Floyd-Warshall transitive closure
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n).any(|i| reach[i][i])
}

/// Every non-source node in exactly one group, tags matching `supported`,
/// groups listed in a valid order of an acyclic condensation, and no two
/// same-tag groups whose union would stay acyclic.
pub fn check_partition(
    f: &Function,
    p: &Partitioning,
    supported: impl Fn(&Node) -> bool,
) -> Result<(), String> {
    let mut owner: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (i, g) in p.groups.iter().enumerate() {
        if g.nodes.is_empty() {
            return Err(format!("group {i} is empty"));
        }
        for &id in &g.nodes {
            if owner.insert(id, i).is_some() {
                return Err(format!("{id} in two groups"));
            }
        }
    }
    for node in f.nodes() {
        let tag = if supported(node) {
            BackendTag::Main
        } else {
            BackendTag::Fallback
        };
        match (node.op.is_source(), owner.get(&node.id)) {
            (true, None) => {}
            (true, Some(_)) => return Err(format!("source {} is grouped", node.id)),
            (false, None) => return Err(format!("{} is not grouped", node.id)),
            (false, Some(&g)) => {
                if p.groups[g].tag != tag || p.assignment.get(&node.id) != Some(&tag) {
                    return Err(format!("{} has the wrong tag", node.id));
                }
            }
        }
    }

    let edges_of = |owner: &BTreeMap<NodeId, usize>| {
        let mut edges = BTreeSet::new();
        for node in f.nodes() {
            for input in &node.inputs {
                if let (Some(&a), Some(&b)) = (owner.get(&input.node), owner.get(&node.id)) {
                    if a != b {
                        edges.insert((a, b));
                    }
                }
            }
        }
        edges
    };
    let n = p.groups.len();
    let edges = edges_of(&owner);
    if cyclic(n, &edges) {
        return Err("condensation has a cycle".into());
    }
    if let Some((a, b)) = edges.iter().find(|(a, b)| a > b) {
        return Err(format!("group {a} feeds earlier group {b}"));
    }
    for a in 0..n {
        for b in a + 1..n {
            if p.groups[a].tag != p.groups[b].tag {
                continue;
            }
            let merged: BTreeMap<NodeId, usize> = owner
                .iter()
                .map(|(&id, &g)| (id, if g == b { a } else { g }))
                .collect();
            if !cyclic(n, &edges_of(&merged)) {
                return Err(format!("groups {a} and {b} could be merged"));
            }
        }
    }
    Ok(())
}

/// Largest elementwise difference over the logical values. Two NaNs, or two
/// equal infinities, count as equal; NaN against a number counts as infinite.
pub fn max_abs_diff(a: &TensorValue, b: &TensorValue) -> f64 {
    if a.descriptor() != b.descriptor() {
        return f64::INFINITY;
    }
    let x = a.to_row_major().to_f64_vec();
    let y = b.to_row_major().to_f64_vec();
    x.iter()
        .zip(&y)
        .map(|(&u, &v)| {
            if u.is_nan() && v.is_nan() || u == v {
                0.0
            } else if u.is_nan() || v.is_nan() {
                f64::INFINITY
            } else {
                (u - v).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// A uniformly random dependency-respecting order of the instructions.
pub fn shuffled_instruction_order(exe: &Executable, rng: &mut impl Rng) -> Vec<usize> {
    let instructions = exe.instructions();
    let producer: BTreeMap<Output, usize> = instructions
        .iter()
        .enumerate()
        .map(|(i, ins)| (ins.output.tensor, i))
        .collect();
    let deps: Vec<BTreeSet<usize>> = instructions
        .iter()
        .map(|ins| {
            ins.inputs
                .iter()
                .filter_map(|o| producer.get(&o.tensor).copied())
                .collect()
        })
        .collect();
    let mut done = vec![false; instructions.len()];
    let mut order = Vec::with_capacity(instructions.len());
    while order.len() < instructions.len() {
        let ready: Vec<usize> = (0..instructions.len())
            .filter(|&i| !done[i] && deps[i].iter().all(|&d| done[d]))
            .collect();
        let pick = ready[rng.gen_range(0..ready.len())];
        done[pick] = true;
        order.push(pick);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphforge::ir::{ElementType, Op, TensorDescriptor};

    #[test]
    fn rejects_reversed_order() {
        let mut f = Function::new("t");
        let x = f
            .add_parameter(TensorDescriptor::new(ElementType::F64, [2]))
            .unwrap();
        let e = f.add_node(Op::Exp, [x]).unwrap();
        f.add_result(e).unwrap();
        assert!(is_topological_order(&f, &[x, e]));
        assert!(!is_topological_order(&f, &[e, x]));
        assert!(!is_topological_order(&f, &[x]));
    }

    #[test]
    fn nan_aware_difference() {
        let a = TensorValue::f64([3], vec![f64::NAN, 1.0, f64::INFINITY]).unwrap();
        let b = TensorValue::f64([3], vec![f64::NAN, 1.5, f64::INFINITY]).unwrap();
        assert_eq!(max_abs_diff(&a, &b), 0.5);
        let c = TensorValue::f64([3], vec![0.0, 1.0, f64::INFINITY]).unwrap();
        assert_eq!(max_abs_diff(&a, &c), f64::INFINITY);
    }
}
