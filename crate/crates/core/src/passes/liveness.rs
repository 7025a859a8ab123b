use std::collections::BTreeMap;
use std::fmt;

use crate::ir::{Function, Op, Output};

/// Span of instruction indices (positions in the topological order) during
/// which a tensor must stay intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LiveInterval {
    pub tensor: Output,
    pub start: usize,
    /// Index of the last consumer, or [`LiveInterval::END_OF_PROGRAM`] for results.
    pub end: usize,
}

impl LiveInterval {
    pub const END_OF_PROGRAM: usize = usize::MAX;

    pub fn overlaps(&self, other: &LiveInterval) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for LiveInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.end == Self::END_OF_PROGRAM {
            write!(f, "{} [{}, end]", self.tensor, self.start)
        } else {
            write!(f, "{} [{}, {}]", self.tensor, self.start, self.end)
        }
    }
}

/// One interval per tensor reachable from the results, in producer order.
/// Parameters and constants start at 0.
pub fn liveness(f: &Function) -> Vec<LiveInterval> {
    let order = f
        .topological_order()
        .expect("liveness requires a valid function");
    let reachable = f.reachable();
    let index: BTreeMap<_, _> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut last_use: BTreeMap<Output, usize> = BTreeMap::new();
    for &id in &order {
        if !reachable.contains(&id) {
            continue;
        }
        for input in &f.node(id).unwrap().inputs {
            let at = index[&id];
            last_use
                .entry(*input)
                .and_modify(|e| *e = (*e).max(at))
                .or_insert(at);
        }
    }
    for r in f.results() {
        last_use.insert(*r, LiveInterval::END_OF_PROGRAM);
    }

    let mut intervals = Vec::new();
    for &id in &order {
        let node = f.node(id).unwrap();
        for port in 0..node.outputs.len() as u32 {
            let tensor = Output::new(id, port);
            let Some(&end) = last_use.get(&tensor) else {
                continue;
            };
            let start = match node.op {
                Op::Parameter(_) | Op::Constant { .. } => 0,
                _ => index[&id],
            };
            intervals.push(LiveInterval { tensor, start, end });
        }
    }
    intervals
}
