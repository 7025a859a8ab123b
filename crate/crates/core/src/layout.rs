//! Physical element layouts.
//!
//! A layout is an axis order: position `i` names the logical axis with the
//! `i`-th largest stride, and strides are contiguous row-major over the
//! permuted axes. The identity order is plain row-major.

use std::fmt;

use crate::ir::{is_identity_order, is_permutation, AxisVector, Shape};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Layout {
    order: AxisVector,
}

impl Layout {
    pub fn identity(rank: usize) -> Self {
        Layout {
            order: (0..rank).collect(),
        }
    }

    /// Returns `None` unless `order` is a permutation of `0..order.len()`.
    pub fn new(order: impl Into<AxisVector>) -> Option<Self> {
        let order = order.into();
        is_permutation(&order, order.len()).then_some(Layout { order })
    }

    /// Channels-last order for a rank-4 `[N, C, H, W]` tensor.
    pub fn nhwc() -> Self {
        Layout {
            order: vec![0, 2, 3, 1],
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn rank(&self) -> usize {
        self.order.len()
    }

    pub fn is_identity(&self) -> bool {
        is_identity_order(&self.order)
    }

    /// Per-logical-axis strides for a tensor of `shape`.
    pub fn strides(&self, shape: &Shape) -> Vec<usize> {
        let mut strides = vec![0; self.order.len()];
        let mut acc = 1;
        for &axis in self.order.iter().rev() {
            strides[axis] = acc;
            acc *= shape.0[axis];
        }
        strides
    }

    /// Buffer position of each element, enumerated in logical row-major order.
    pub fn positions(&self, shape: &Shape) -> Vec<usize> {
        let strides = self.strides(shape);
        let count = shape.element_count();
        let mut out = Vec::with_capacity(count);
        let rank = shape.rank();
        let mut index = vec![0usize; rank];
        for _ in 0..count {
            out.push(index.iter().zip(&strides).map(|(i, s)| i * s).sum());
            for axis in (0..rank).rev() {
                index[axis] += 1;
                if index[axis] < shape.0[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        out
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.order)
    }
}
