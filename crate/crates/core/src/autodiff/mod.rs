//! Reverse-mode differentiation as a graph-to-graph transform.
//!
//! [`differentiate`] copies the forward graph, adds a seed parameter for the
//! result's adjoint, and appends adjoint nodes in reverse topological order.
//! Contributions from several consumers are summed with explicit `Add` nodes.

mod check;

pub use check::{check_gradient, GradientReport, ParameterCheck};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::interp::ExecError;
use crate::ir::{
    inverse_permutation, is_identity_order, Buffer, Diagnostic, Function, IrError, MaxOperand,
    NodeId, Op, OpTag, Output, ReductionKind, Shape, Strides,
};
use crate::passes::join;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("invalid function: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("differentiation needs exactly one result, found {0}")]
    MultipleResults(usize),
    #[error("node {0} is not a parameter")]
    NotAParameter(NodeId),
    #[error("node {node}: {op} is not differentiable")]
    NonDifferentiableOp { node: NodeId, op: String },
    #[error("node {node}: Conv2D gradient needs unit strides, found ({}, {})", .strides.height, .strides.width)]
    UnsupportedStride { node: NodeId, strides: Strides },
    #[error("gradient checking needs a scalar result, found shape {0}")]
    NonScalarResult(Shape),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Max reductions that only shift a softmax. The shift cancels in the
/// normalised output, so they carry no gradient.
fn softmax_shifts(f: &Function, consumers: &BTreeMap<NodeId, Vec<NodeId>>) -> BTreeSet<NodeId> {
    let results: BTreeSet<NodeId> = f.results().iter().map(|r| r.node).collect();
    let users = |id: NodeId| -> &[NodeId] { consumers.get(&id).map_or(&[], Vec::as_slice) };
    let op = |id: NodeId| &f.node(id).unwrap().op;
    let internal = |id: NodeId| !results.contains(&id) && !users(id).is_empty();

    let mut shifts = BTreeSet::new();
    for node in f.nodes() {
        let Op::Sum {
            axes,
            kind: ReductionKind::Max,
        } = &node.op
        else {
            continue;
        };
        let x = node.inputs[0];
        let x_shape = &f.descriptor(x).unwrap().shape;
        let is_broadcast_back = |id: NodeId| matches!(op(id), Op::Broadcast { shape, axes: a } if shape == x_shape && a == axes);
        let normalises = |e: NodeId| {
            users(e).iter().all(|&u| match op(u) {
                Op::Sum {
                    axes: a,
                    kind: ReductionKind::Sum,
                } if a == axes && internal(u) => users(u).iter().all(|&b| {
                    is_broadcast_back(b)
                        && internal(b)
                        && users(b).iter().all(|&d| {
                            *op(d) == Op::Divide && f.node(d).unwrap().inputs == [e.into(), b.into()]
                        })
                }),
                Op::Divide => {
                    let d = f.node(u).unwrap();
                    d.inputs[0] == e.into()
                        && d.inputs[1] != e.into()
                        && is_broadcast_back(d.inputs[1].node)
                        && matches!(
                            f.node(d.inputs[1].node).unwrap().inputs.first(),
                            Some(t) if matches!(op(t.node), Op::Sum { axes: a, kind: ReductionKind::Sum } if a == axes)
                                && f.node(t.node).unwrap().inputs == [e.into()]
                        )
                }
                _ => false,
            })
        };
        let ok = internal(node.id)
            && users(node.id).iter().all(|&b| {
                is_broadcast_back(b)
                    && internal(b)
                    && users(b).iter().all(|&s| {
                        *op(s) == Op::Subtract
                            && internal(s)
                            && f.node(s).unwrap().inputs == [x, b.into()]
                            && users(s)
                                .iter()
                                .all(|&e| *op(e) == Op::Exp && internal(e) && normalises(e))
                    })
            });
        if ok {
            shifts.insert(node.id);
        }
    }
    shifts
}

/// Builds the gradient function of `f` with respect to the parameters `wrt`.
///
/// The result has `f`'s parameters followed by a seed `dY` shaped like the
/// result, and one result per `wrt` entry.
pub fn differentiate(f: &Function, wrt: &[NodeId]) -> Result<Function, AutodiffError> {
    let diagnostics = f.validate();
    if !diagnostics.is_empty() {
        return Err(AutodiffError::Invalid(diagnostics));
    }
    if f.results().len() != 1 {
        return Err(AutodiffError::MultipleResults(f.results().len()));
    }
    let result = f.results()[0];
    let non_float = |id: NodeId| AutodiffError::NonDifferentiableOp {
        node: id,
        op: format!(
            "{} of type {}",
            f.node(id).unwrap().op.tag(),
            f.node(id).unwrap().descriptor().element_type
        ),
    };
    if !f.descriptor(result).unwrap().element_type.is_float() {
        return Err(non_float(result.node));
    }
    for &p in wrt {
        if !f.parameters().contains(&p) {
            return Err(AutodiffError::NotAParameter(p));
        }
        if !f.node(p).unwrap().descriptor().element_type.is_float() {
            return Err(non_float(p));
        }
    }

    let consumers = f.consumers();
    let shifts = softmax_shifts(f, &consumers);
    let order = f.topological_order()?;

    // active: depends on a wrt parameter; needed: active and feeds the result
    // through active nodes
    let mut active: BTreeSet<NodeId> = wrt.iter().copied().collect();
    for &id in &order {
        let node = f.node(id).unwrap();
        if !shifts.contains(&id) && node.inputs.iter().any(|i| active.contains(&i.node)) {
            active.insert(id);
        }
    }
    let mut needed = BTreeSet::new();
    let mut stack = vec![result.node];
    while let Some(id) = stack.pop() {
        if !active.contains(&id) || !needed.insert(id) {
            continue;
        }
        stack.extend(f.node(id).unwrap().inputs.iter().map(|i| i.node));
    }

    for &id in &needed {
        let node = f.node(id).unwrap();
        match &node.op {
            Op::Conv2D { strides, .. } if *strides != Strides::default() => {
                return Err(AutodiffError::UnsupportedStride {
                    node: id,
                    strides: *strides,
                })
            }
            Op::Sum {
                kind: ReductionKind::Max,
                ..
            } => {
                return Err(AutodiffError::NonDifferentiableOp {
                    node: id,
                    op: node.op.to_string(),
                })
            }
            op if op.tag() == OpTag::ConvertLayout || op.tag().is_internal() => {
                return Err(AutodiffError::NonDifferentiableOp {
                    node: id,
                    op: op.to_string(),
                })
            }
            _ if !node.descriptor().element_type.is_float() => return Err(non_float(id)),
            _ => {}
        }
    }

    let mut g = f.clone();
    g.set_name(format!("{}_grad", f.name()));
    let seed = g.add_parameter(f.descriptor(result).unwrap().clone())?;
    let mut adjoints: BTreeMap<NodeId, Output> = BTreeMap::new();
    adjoints.insert(result.node, seed.into());

    let mut b = Builder { g: &mut g };
    for &id in order.iter().rev() {
        if !needed.contains(&id) {
            continue;
        }
        let node = f.node(id).unwrap().clone();
        if matches!(node.op, Op::Parameter(_)) {
            continue;
        }
        let Some(&a) = adjoints.get(&id) else {
            continue;
        };
        let out: Output = id.into();
        let wants = |i: usize| node.inputs.get(i).is_some_and(|o| needed.contains(&o.node));
        let input = |i: usize| node.inputs[i];
        let mut contributions: Vec<(Output, Output)> = Vec::new();
        let mut give = |i: usize, value: Output| contributions.push((input(i), value));
        match &node.op {
            Op::Add => {
                if wants(0) {
                    give(0, a);
                }
                if wants(1) {
                    give(1, a);
                }
            }
            Op::Subtract => {
                if wants(0) {
                    give(0, a);
                }
                if wants(1) {
                    give(1, b.op(Op::Negate, &[a])?);
                }
            }
            Op::Multiply => {
                if wants(0) {
                    give(0, b.op(Op::Multiply, &[a, input(1)])?);
                }
                if wants(1) {
                    give(1, b.op(Op::Multiply, &[a, input(0)])?);
                }
            }
            Op::Divide => {
                if wants(0) {
                    give(0, b.op(Op::Divide, &[a, input(1)])?);
                }
                if wants(1) {
                    // -a*x/y^2 == -(a*out)/y
                    let ao = b.op(Op::Multiply, &[a, out])?;
                    let q = b.op(Op::Divide, &[ao, input(1)])?;
                    give(1, b.op(Op::Negate, &[q])?);
                }
            }
            Op::Negate => give(0, b.op(Op::Negate, &[a])?),
            Op::Exp => give(0, b.op(Op::Multiply, &[a, out])?),
            Op::Log => give(0, b.op(Op::Divide, &[a, input(0)])?),
            Op::Tanh => {
                let one = b.ones(out)?;
                let t2 = b.op(Op::Multiply, &[out, out])?;
                let d = b.op(Op::Subtract, &[one, t2])?;
                give(0, b.op(Op::Multiply, &[a, d])?);
            }
            Op::Sigmoid => {
                let one = b.ones(out)?;
                let c = b.op(Op::Subtract, &[one, out])?;
                let scaled = b.op(Op::Multiply, &[a, out])?;
                give(0, b.op(Op::Multiply, &[scaled, c])?);
            }
            Op::Relu => give(0, b.op(Op::ReluBackprop, &[input(0), a])?),
            Op::Maximum => {
                let args = [input(0), input(1), a];
                if wants(0) {
                    let operand = MaxOperand::First;
                    give(0, b.op(Op::MaximumBackprop { operand }, &args)?);
                }
                if wants(1) {
                    let operand = MaxOperand::Second;
                    give(1, b.op(Op::MaximumBackprop { operand }, &args)?);
                }
            }
            Op::Dot => {
                if wants(0) {
                    let bt = b.transpose(input(1))?;
                    give(0, b.op(Op::Dot, &[a, bt])?);
                }
                if wants(1) {
                    let at = b.transpose(input(0))?;
                    give(1, b.op(Op::Dot, &[at, a])?);
                }
            }
            Op::Broadcast { axes, .. } => {
                let kind = ReductionKind::Sum;
                give(
                    0,
                    b.op(
                        Op::Sum {
                            axes: axes.clone(),
                            kind,
                        },
                        &[a],
                    )?,
                );
            }
            Op::Sum { axes, .. } => {
                let shape = b.shape(input(0));
                give(
                    0,
                    b.op(
                        Op::Broadcast {
                            shape,
                            axes: axes.clone(),
                        },
                        &[a],
                    )?,
                );
            }
            Op::Reshape { input_order, shape } => {
                let input_shape = b.shape(input(0));
                let permuted = input_shape.permuted(input_order);
                let mut cur = a;
                if *shape != permuted {
                    let flat = Op::Reshape {
                        input_order: (0..shape.rank()).collect(),
                        shape: permuted,
                    };
                    cur = b.op(flat, &[cur])?;
                }
                if !is_identity_order(input_order) {
                    let back = Op::Reshape {
                        input_order: inverse_permutation(input_order),
                        shape: input_shape,
                    };
                    cur = b.op(back, &[cur])?;
                }
                give(0, cur);
            }
            Op::Conv2D { padding, .. } => {
                let padding = *padding;
                if wants(0) {
                    let data_shape = b.shape(input(0));
                    let op = Op::ConvBackpropData {
                        data_shape,
                        padding,
                    };
                    give(0, b.op(op, &[input(1), a])?);
                }
                if wants(1) {
                    let filter_shape = b.shape(input(1));
                    let op = Op::ConvBackpropFilter {
                        filter_shape,
                        padding,
                    };
                    give(1, b.op(op, &[input(0), a])?);
                }
            }
            _ => unreachable!("rejected above"),
        }
        for (to, value) in contributions {
            let total = match adjoints.get(&to.node) {
                Some(&prev) => b.op(Op::Add, &[prev, value])?,
                None => value,
            };
            adjoints.insert(to.node, total);
        }
    }

    let mut results = Vec::with_capacity(wrt.len());
    for &p in wrt {
        let grad = match adjoints.get(&p) {
            Some(&a) => a,
            None => {
                let d = f.node(p).unwrap().descriptor().clone();
                let zeros = Buffer::zeros(d.element_type, d.element_count());
                b.g.add_constant(d, zeros)?.into()
            }
        };
        results.push(grad);
    }
    g.set_results(results)?;
    g.prune_unreachable();
    Ok(g)
}

struct Builder<'a> {
    g: &'a mut Function,
}

impl Builder<'_> {
    fn op(&mut self, op: Op, inputs: &[Output]) -> Result<Output, IrError> {
        self.g.add_op(op, inputs.to_vec()).map(Output::from)
    }

    fn shape(&self, t: Output) -> Shape {
        self.g.descriptor(t).unwrap().shape.clone()
    }

    fn ones(&mut self, like: Output) -> Result<Output, IrError> {
        let d = self.g.descriptor(like).unwrap().clone();
        let value = Buffer::filled(d.element_type, d.element_count(), 1.0);
        self.g.add_constant(d, value).map(Output::from)
    }

    fn transpose(&mut self, t: Output) -> Result<Output, IrError> {
        let s = self.shape(t);
        self.op(
            Op::Reshape {
                input_order: vec![1, 0],
                shape: Shape::new([s.0[1], s.0[0]]),
            },
            &[t],
        )
    }
}
