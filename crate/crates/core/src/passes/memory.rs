//! Static arena planning for intermediate tensors.
//!
//! Parameters, constants and results live outside the arena. Everything else
//! is placed first-fit: tensors sorted by (start asc, size desc, id asc) each
//! take the lowest aligned offset whose byte range is disjoint from every
//! already placed tensor with an overlapping live interval.

use std::collections::BTreeSet;
use std::fmt;

use crate::ir::{Function, Op, Output};

use super::liveness::{liveness, LiveInterval};

pub const ALIGNMENT: usize = 64;

pub fn align_up(bytes: usize, alignment: usize) -> usize {
    bytes.div_ceil(alignment) * alignment
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub interval: LiveInterval,
    pub offset: usize,
    /// Unaligned byte size.
    pub size: usize,
}

impl Placement {
    pub fn tensor(&self) -> Output {
        self.interval.tensor
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryPlan {
    pub arena_size: usize,
    pub alignment: usize,
    /// In placement order.
    pub placements: Vec<Placement>,
    /// Every interval of the function, planned or not.
    pub intervals: Vec<LiveInterval>,
}

impl MemoryPlan {
    pub fn placement(&self, tensor: Output) -> Option<&Placement> {
        self.placements.iter().find(|p| p.interval.tensor == tensor)
    }

    pub fn offset_of(&self, tensor: Output) -> Option<usize> {
        self.placement(tensor).map(|p| p.offset)
    }
}

/// Tab-separated `id start end offset size`, one planned tensor per line in
/// placement order, then `arena <N> bytes`.
impl fmt::Display for MemoryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.placements {
            let t = p.interval.tensor;
            if t.port == 0 {
                write!(f, "{}", t.node)?;
            } else {
                write!(f, "{t}")?;
            }
            writeln!(
                f,
                "\t{}\t{}\t{}\t{}",
                p.interval.start, p.interval.end, p.offset, p.size
            )?;
        }
        writeln!(f, "arena {} bytes", self.arena_size)
    }
}

pub fn plan_memory(f: &Function) -> MemoryPlan {
    let intervals = liveness(f);
    let results: BTreeSet<Output> = f.results().iter().copied().collect();

    let mut candidates: Vec<(LiveInterval, usize)> = intervals
        .iter()
        .filter(|iv| {
            let node = f.node(iv.tensor.node).unwrap();
            !matches!(node.op, Op::Parameter(_) | Op::Constant { .. })
                && !results.contains(&iv.tensor)
        })
        .map(|iv| (*iv, f.descriptor(iv.tensor).unwrap().byte_size()))
        .collect();
    candidates.sort_by(|(a, sa), (b, sb)| {
        a.start
            .cmp(&b.start)
            .then(sb.cmp(sa))
            .then(a.tensor.cmp(&b.tensor))
    });

    let mut placements: Vec<Placement> = Vec::with_capacity(candidates.len());
    for (interval, size) in candidates {
        let offset = if size == 0 {
            0
        } else {
            let mut busy: Vec<(usize, usize)> = placements
                .iter()
                .filter(|p| p.size > 0 && p.interval.overlaps(&interval))
                .map(|p| (p.offset, p.offset + p.size))
                .collect();
            busy.sort_unstable();
            let mut offset = 0;
            for (lo, hi) in busy {
                if lo >= offset + size {
                    break;
                }
                if hi > offset {
                    offset = align_up(hi, ALIGNMENT);
                }
            }
            offset
        };
        placements.push(Placement {
            interval,
            offset,
            size,
        });
    }

    let end = placements
        .iter()
        .map(|p| p.offset + p.size)
        .max()
        .unwrap_or(0);
    MemoryPlan {
        arena_size: align_up(end, ALIGNMENT),
        alignment: ALIGNMENT,
        placements,
        intervals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ElementType, TensorDescriptor};

    fn chain(len: usize) -> Function {
        let d = TensorDescriptor::new(ElementType::F64, [100]);
        let mut f = Function::new("chain");
        let mut cur = f.add_parameter(d).unwrap();
        for _ in 0..len {
            cur = f.add_node(Op::Exp, [cur]).unwrap();
        }
        f.add_result(cur).unwrap();
        f
    }

    #[test]
    fn five_op_chain_uses_two_slots() {
        let plan = plan_memory(&chain(5));
        assert_eq!(plan.placements.len(), 4);
        let offsets: Vec<usize> = plan.placements.iter().map(|p| p.offset).collect();
        assert_eq!(offsets, vec![0, 832, 0, 832]);
        assert_eq!(plan.arena_size, 1664);
    }

    #[test]
    fn single_intermediate() {
        let plan = plan_memory(&chain(2));
        assert_eq!(plan.placements.len(), 1);
        assert_eq!(plan.placements[0].offset, 0);
        assert_eq!(plan.arena_size, 832);
    }

    #[test]
    fn no_intermediates() {
        let plan = plan_memory(&chain(0));
        assert!(plan.placements.is_empty());
        assert_eq!(plan.arena_size, 0);
        assert_eq!(plan.to_string(), "arena 0 bytes\n");
    }

    #[test]
    fn reduction_output_does_not_alias_its_input() {
        let mut f = Function::new("fan");
        let small = TensorDescriptor::new(ElementType::F32, [3]);
        let x = f.add_parameter(small).unwrap();
        let b = f.add_node(Op::broadcast([50, 3], [0]), [x]).unwrap();
        let s = f.add_node(Op::sum([0]), [b]).unwrap();
        let e = f.add_node(Op::Exp, [s]).unwrap();
        f.add_result(e).unwrap();
        let plan = plan_memory(&f);
        assert_eq!(plan.offset_of(b.into()), Some(0));
        assert_eq!(plan.offset_of(s.into()), Some(align_up(600, ALIGNMENT)));
        assert_eq!(plan.arena_size, 640 + 64);
    }

    #[test]
    fn zero_sized_tensors_take_no_space() {
        let d = TensorDescriptor::new(ElementType::F64, [0, 3]);
        let mut f = Function::new("empty");
        let x = f.add_parameter(d).unwrap();
        let a = f.add_node(Op::Exp, [x]).unwrap();
        let b = f.add_node(Op::Exp, [a]).unwrap();
        f.add_result(b).unwrap();
        let plan = plan_memory(&f);
        assert_eq!(plan.placements.len(), 1);
        assert_eq!(plan.arena_size, 0);
    }
}
