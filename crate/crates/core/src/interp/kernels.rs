//! Scalar reference kernels.
//!
//! Kernels see inputs and produce outputs in logical row-major order; layout
//! handling happens around them. Every reduction uses a fixed accumulation
//! order, so results are bit-reproducible.

use num_traits::Float;

use crate::ir::{
    AxisSet, Buffer, ElementType, MaxOperand, Op, OpTag, Padding, ReductionKind, Shape, Strides,
    TensorDescriptor,
};

use super::ExecError;

/// One kernel input: row-major values and their logical shape.
#[derive(Clone, Copy)]
pub struct KernelInput<'a> {
    pub buffer: &'a Buffer,
    pub shape: &'a Shape,
}

fn unsupported(op: &Op, et: ElementType) -> ExecError {
    ExecError::UnsupportedOp {
        op: op.tag(),
        element_type: et,
    }
}

/// Evaluates one op. `out` is the inferred output descriptor.
pub fn evaluate(
    op: &Op,
    inputs: &[KernelInput<'_>],
    out: &TensorDescriptor,
) -> Result<Buffer, ExecError> {
    let result = match op {
        Op::Parameter(_) => return Err(unsupported(op, out.element_type)),
        Op::Constant { value, .. } => value.clone(),
        Op::Add | Op::Subtract | Op::Multiply | Op::Divide | Op::Maximum | Op::ReluBackprop => {
            binary(op, inputs[0].buffer, inputs[1].buffer)?
        }
        Op::MaximumBackprop { operand } => max_backprop(
            *operand,
            inputs[0].buffer,
            inputs[1].buffer,
            inputs[2].buffer,
        )
        .ok_or_else(|| unsupported(op, out.element_type))?,
        Op::Negate | Op::Exp | Op::Log | Op::Tanh | Op::Sigmoid | Op::Relu => {
            unary(op, inputs[0].buffer)?
        }
        Op::Dot => {
            let (m, k) = (inputs[0].shape.0[0], inputs[0].shape.0[1]);
            let n = inputs[1].shape.0[1];
            match (inputs[0].buffer, inputs[1].buffer) {
                (Buffer::F32(a), Buffer::F32(b)) => Buffer::F32(dot(a, b, m, k, n)),
                (Buffer::F64(a), Buffer::F64(b)) => Buffer::F64(dot(a, b, m, k, n)),
                _ => return Err(unsupported(op, out.element_type)),
            }
        }
        Op::Broadcast { shape, axes } => {
            inputs[0]
                .buffer
                .gather(&broadcast_indices(inputs[0].shape, shape, axes))
        }
        Op::Reshape { input_order, .. } => inputs[0]
            .buffer
            .gather(&permute_indices(inputs[0].shape, input_order)),
        // values are logical here; the physical move happens on store
        Op::ConvertLayout { .. } => inputs[0].buffer.clone(),
        Op::Sum { axes, kind } => reduce(op, *kind, inputs[0].buffer, inputs[0].shape, axes)?,
        Op::Conv2D { strides, padding } => {
            let geom = ConvGeometry::new(inputs[0].shape, inputs[1].shape, *strides, *padding);
            match (inputs[0].buffer, inputs[1].buffer) {
                (Buffer::F32(x), Buffer::F32(f)) => Buffer::F32(geom.forward(x, f)),
                (Buffer::F64(x), Buffer::F64(f)) => Buffer::F64(geom.forward(x, f)),
                _ => return Err(unsupported(op, out.element_type)),
            }
        }
        Op::ConvBackpropData {
            data_shape,
            padding,
        } => {
            let geom = ConvGeometry::new(data_shape, inputs[0].shape, Strides::default(), *padding);
            match (inputs[0].buffer, inputs[1].buffer) {
                (Buffer::F32(f), Buffer::F32(d)) => Buffer::F32(geom.backprop_data(f, d)),
                (Buffer::F64(f), Buffer::F64(d)) => Buffer::F64(geom.backprop_data(f, d)),
                _ => return Err(unsupported(op, out.element_type)),
            }
        }
        Op::ConvBackpropFilter {
            filter_shape,
            padding,
        } => {
            let geom =
                ConvGeometry::new(inputs[0].shape, filter_shape, Strides::default(), *padding);
            match (inputs[0].buffer, inputs[1].buffer) {
                (Buffer::F32(x), Buffer::F32(d)) => Buffer::F32(geom.backprop_filter(x, d)),
                (Buffer::F64(x), Buffer::F64(d)) => Buffer::F64(geom.backprop_filter(x, d)),
                _ => return Err(unsupported(op, out.element_type)),
            }
        }
    };
    debug_assert_eq!(result.len(), out.element_count());
    Ok(result)
}

/// Binary maximum that propagates NaN from either side and prefers the first
/// operand on ties.
#[inline]
fn max_of<T: Float>(x: T, y: T) -> T {
    if x.is_nan() || x >= y {
        x
    } else {
        y
    }
}

fn float_binary<T: Float>(tag: OpTag, a: &[T], b: &[T]) -> Vec<T> {
    let f: fn(T, T) -> T = match tag {
        OpTag::Add => |x, y| x + y,
        OpTag::Subtract => |x, y| x - y,
        OpTag::Multiply => |x, y| x * y,
        OpTag::Divide => |x, y| x / y,
        OpTag::Maximum => max_of,
        OpTag::ReluBackprop => |x, d| if x > T::zero() { d } else { T::zero() },
        _ => unreachable!("not a float binary op"),
    };
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn binary(op: &Op, a: &Buffer, b: &Buffer) -> Result<Buffer, ExecError> {
    let tag = op.tag();
    Ok(match (a, b) {
        (Buffer::F32(a), Buffer::F32(b)) => Buffer::F32(float_binary(tag, a, b)),
        (Buffer::F64(a), Buffer::F64(b)) => Buffer::F64(float_binary(tag, a, b)),
        (Buffer::I64(a), Buffer::I64(b)) => {
            let f: fn(i64, i64) -> i64 = match tag {
                OpTag::Add => i64::wrapping_add,
                OpTag::Subtract => i64::wrapping_sub,
                OpTag::Multiply => i64::wrapping_mul,
                _ => return Err(unsupported(op, ElementType::I64)),
            };
            Buffer::I64(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
        }
        _ => return Err(unsupported(op, a.element_type())),
    })
}

fn max_backprop(operand: MaxOperand, x: &Buffer, y: &Buffer, d: &Buffer) -> Option<Buffer> {
    fn go<T: Float>(operand: MaxOperand, x: &[T], y: &[T], d: &[T]) -> Vec<T> {
        x.iter()
            .zip(y)
            .zip(d)
            .map(|((&x, &y), &d)| {
                let first_wins = x >= y;
                match (operand, first_wins) {
                    (MaxOperand::First, true) | (MaxOperand::Second, false) => d,
                    _ => T::zero(),
                }
            })
            .collect()
    }
    match (x, y, d) {
        (Buffer::F32(x), Buffer::F32(y), Buffer::F32(d)) => Some(Buffer::F32(go(operand, x, y, d))),
        (Buffer::F64(x), Buffer::F64(y), Buffer::F64(d)) => Some(Buffer::F64(go(operand, x, y, d))),
        _ => None,
    }
}

fn float_unary<T: Float>(tag: OpTag, a: &[T]) -> Vec<T> {
    let f: fn(T) -> T = match tag {
        OpTag::Negate => |x| -x,
        OpTag::Exp => T::exp,
        OpTag::Log => T::ln,
        OpTag::Tanh => T::tanh,
        OpTag::Sigmoid => |x| T::one() / (T::one() + (-x).exp()),
        // NaN falls through to x
        OpTag::Relu => |x| if x <= T::zero() { T::zero() } else { x },
        _ => unreachable!("not a float unary op"),
    };
    a.iter().map(|&x| f(x)).collect()
}

fn unary(op: &Op, a: &Buffer) -> Result<Buffer, ExecError> {
    let tag = op.tag();
    Ok(match a {
        Buffer::F32(a) => Buffer::F32(float_unary(tag, a)),
        Buffer::F64(a) => Buffer::F64(float_unary(tag, a)),
        Buffer::I64(a) if tag == OpTag::Negate => {
            Buffer::I64(a.iter().map(|x| x.wrapping_neg()).collect())
        }
        _ => return Err(unsupported(op, a.element_type())),
    })
}

fn dot<T: Float>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..k {
                acc = acc + a[i * k + p] * b[p * n + j];
            }
            out.push(acc);
        }
    }
    out
}

/// Calls `f` with every multi-index of `shape` in row-major order.
fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let count: usize = shape.iter().product();
    let mut index = vec![0usize; shape.len()];
    for _ in 0..count {
        f(&index);
        for axis in (0..shape.len()).rev() {
            index[axis] += 1;
            if index[axis] < shape[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
}

/// For each output element of a broadcast, the input element it copies.
pub(crate) fn broadcast_indices(input: &Shape, output: &Shape, axes: &AxisSet) -> Vec<usize> {
    let in_strides = input.strides();
    let mut out = Vec::with_capacity(output.element_count());
    for_each_index(&output.0, |idx| {
        let mut pos = 0;
        let mut k = 0;
        for (axis, &i) in idx.iter().enumerate() {
            if !axes.contains(&axis) {
                pos += i * in_strides[k];
                k += 1;
            }
        }
        out.push(pos);
    });
    out
}

/// For each element of `input` transposed by `order` (row-major), its
/// position in `input`.
pub(crate) fn permute_indices(input: &Shape, order: &[usize]) -> Vec<usize> {
    let in_strides = input.strides();
    let permuted = input.permuted(order);
    let mut out = Vec::with_capacity(input.element_count());
    for_each_index(&permuted.0, |idx| {
        out.push(
            idx.iter()
                .zip(order)
                .map(|(&i, &axis)| i * in_strides[axis])
                .sum(),
        );
    });
    out
}

/// Output position of each input element under reduction over `axes`.
fn reduction_targets(input: &Shape, axes: &AxisSet) -> Vec<usize> {
    let out_shape = input.without_axes(axes);
    let out_strides = out_shape.strides();
    let mut targets = Vec::with_capacity(input.element_count());
    for_each_index(&input.0, |idx| {
        let mut pos = 0;
        let mut k = 0;
        for (axis, &i) in idx.iter().enumerate() {
            if !axes.contains(&axis) {
                pos += i * out_strides[k];
                k += 1;
            }
        }
        targets.push(pos);
    });
    targets
}

// Scanning the input row-major visits the reduced positions of each output in
// ascending lexicographic order, which fixes the accumulation order.
fn reduce_with<T: Copy>(
    data: &[T],
    targets: &[usize],
    out_len: usize,
    init: T,
    f: impl Fn(T, T) -> T,
) -> Vec<T> {
    let mut out = vec![init; out_len];
    for (&x, &t) in data.iter().zip(targets) {
        out[t] = f(out[t], x);
    }
    out
}

fn reduce(
    op: &Op,
    kind: ReductionKind,
    input: &Buffer,
    shape: &Shape,
    axes: &AxisSet,
) -> Result<Buffer, ExecError> {
    let targets = reduction_targets(shape, axes);
    let out_len = shape.without_axes(axes).element_count();
    Ok(match (input, kind) {
        (Buffer::F32(v), ReductionKind::Sum) => {
            Buffer::F32(reduce_with(v, &targets, out_len, 0.0, |a, b| a + b))
        }
        (Buffer::F32(v), ReductionKind::Max) => {
            Buffer::F32(reduce_with(v, &targets, out_len, f32::NEG_INFINITY, max_of))
        }
        (Buffer::F64(v), ReductionKind::Sum) => {
            Buffer::F64(reduce_with(v, &targets, out_len, 0.0, |a, b| a + b))
        }
        (Buffer::F64(v), ReductionKind::Max) => {
            Buffer::F64(reduce_with(v, &targets, out_len, f64::NEG_INFINITY, max_of))
        }
        (Buffer::I64(v), ReductionKind::Sum) => {
            Buffer::I64(reduce_with(v, &targets, out_len, 0, i64::wrapping_add))
        }
        (Buffer::I64(v), ReductionKind::Max) => {
            Buffer::I64(reduce_with(v, &targets, out_len, i64::MIN, i64::max))
        }
        (b, _) => return Err(unsupported(op, b.element_type())),
    })
}

/// Index arithmetic shared by the convolution kernel and its adjoints.
struct ConvGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    r: usize,
    s: usize,
    out_h: usize,
    out_w: usize,
    strides: Strides,
    padding: Padding,
}

impl ConvGeometry {
    fn new(data: &Shape, filter: &Shape, strides: Strides, padding: Padding) -> Self {
        let (n, c, h, w) = (data.0[0], data.0[1], data.0[2], data.0[3]);
        let (k, r, s) = (filter.0[0], filter.0[2], filter.0[3]);
        ConvGeometry {
            n,
            c,
            h,
            w,
            k,
            r,
            s,
            out_h: (h + padding.top + padding.bottom - r) / strides.height + 1,
            out_w: (w + padding.left + padding.right - s) / strides.width + 1,
            strides,
            padding,
        }
    }

    /// Input coordinate read by output row `oh` at filter row `fr`, if it is
    /// inside the unpadded input.
    #[inline]
    fn in_row(&self, oh: usize, fr: usize) -> Option<usize> {
        (oh * self.strides.height + fr)
            .checked_sub(self.padding.top)
            .filter(|&i| i < self.h)
    }

    #[inline]
    fn in_col(&self, ow: usize, fs: usize) -> Option<usize> {
        (ow * self.strides.width + fs)
            .checked_sub(self.padding.left)
            .filter(|&j| j < self.w)
    }

    #[inline]
    fn x_at(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.c + c) * self.h + i) * self.w + j
    }

    #[inline]
    fn f_at(&self, k: usize, c: usize, r: usize, s: usize) -> usize {
        ((k * self.c + c) * self.r + r) * self.s + s
    }

    #[inline]
    fn y_at(&self, n: usize, k: usize, oh: usize, ow: usize) -> usize {
        ((n * self.k + k) * self.out_h + oh) * self.out_w + ow
    }

    /// Padded positions contribute nothing; terms accumulate in (c, r, s) order.
    fn forward<T: Float>(&self, x: &[T], f: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * self.k * self.out_h * self.out_w);
        for n in 0..self.n {
            for k in 0..self.k {
                for oh in 0..self.out_h {
                    for ow in 0..self.out_w {
                        let mut acc = T::zero();
                        for c in 0..self.c {
                            for r in 0..self.r {
                                let Some(i) = self.in_row(oh, r) else {
                                    continue;
                                };
                                for s in 0..self.s {
                                    let Some(j) = self.in_col(ow, s) else {
                                        continue;
                                    };
                                    acc = acc + x[self.x_at(n, c, i, j)] * f[self.f_at(k, c, r, s)];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    /// Stride-1 data adjoint; accumulates in (k, r, s) order.
    fn backprop_data<T: Float>(&self, f: &[T], dy: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * self.c * self.h * self.w);
        for n in 0..self.n {
            for c in 0..self.c {
                for i in 0..self.h {
                    for j in 0..self.w {
                        let mut acc = T::zero();
                        for k in 0..self.k {
                            for r in 0..self.r {
                                let Some(oh) = (i + self.padding.top)
                                    .checked_sub(r)
                                    .filter(|&v| v < self.out_h)
                                else {
                                    continue;
                                };
                                for s in 0..self.s {
                                    let Some(ow) = (j + self.padding.left)
                                        .checked_sub(s)
                                        .filter(|&v| v < self.out_w)
                                    else {
                                        continue;
                                    };
                                    acc = acc
                                        + dy[self.y_at(n, k, oh, ow)] * f[self.f_at(k, c, r, s)];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    /// Stride-1 filter adjoint; accumulates in (n, oh, ow) order.
    fn backprop_filter<T: Float>(&self, x: &[T], dy: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.k * self.c * self.r * self.s);
        for k in 0..self.k {
            for c in 0..self.c {
                for r in 0..self.r {
                    for s in 0..self.s {
                        let mut acc = T::zero();
                        for n in 0..self.n {
                            for oh in 0..self.out_h {
                                let Some(i) = self.in_row(oh, r) else {
                                    continue;
                                };
                                for ow in 0..self.out_w {
                                    let Some(j) = self.in_col(ow, s) else {
                                        continue;
                                    };
                                    acc = acc
                                        + dy[self.y_at(n, k, oh, ow)] * x[self.x_at(n, c, i, j)];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }
}
