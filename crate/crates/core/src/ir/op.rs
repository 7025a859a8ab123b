use std::fmt;
use std::str::FromStr;

use super::buffer::Buffer;
use super::types::{AxisSet, AxisVector, Shape, TensorDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReductionKind {
    Sum,
    Max,
}

impl ReductionKind {
    pub fn name(self) -> &'static str {
        match self {
            ReductionKind::Sum => "sum",
            ReductionKind::Max => "max",
        }
    }
}

/// Zero padding applied around the two spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Padding {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Strides {
    pub height: usize,
    pub width: usize,
}

impl Default for Strides {
    fn default() -> Self {
        Strides {
            height: 1,
            width: 1,
        }
    }
}

/// Which input of a `Maximum` receives the adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaxOperand {
    First,
    Second,
}

/// An operation together with its constant attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Parameter(TensorDescriptor),
    Constant {
        descriptor: TensorDescriptor,
        /// Row-major values.
        value: Buffer,
    },
    Add,
    Subtract,
    Multiply,
    Divide,
    Negate,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    Maximum,
    Dot,
    Broadcast {
        shape: Shape,
        axes: AxisSet,
    },
    Reshape {
        input_order: AxisVector,
        shape: Shape,
    },
    Sum {
        axes: AxisSet,
        kind: ReductionKind,
    },
    Conv2D {
        strides: Strides,
        padding: Padding,
    },
    ConvertLayout {
        order: AxisVector,
    },
    // Internal ops, emitted only by differentiation.
    ConvBackpropData {
        data_shape: Shape,
        padding: Padding,
    },
    ConvBackpropFilter {
        filter_shape: Shape,
        padding: Padding,
    },
    ReluBackprop,
    MaximumBackprop {
        operand: MaxOperand,
    },
}

/// Attribute-free discriminant of [`Op`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpTag {
    Parameter,
    Constant,
    Add,
    Subtract,
    Multiply,
    Divide,
    Negate,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    Maximum,
    Dot,
    Broadcast,
    Reshape,
    Sum,
    Conv2D,
    ConvertLayout,
    ConvBackpropData,
    ConvBackpropFilter,
    ReluBackprop,
    MaximumBackprop,
}

impl OpTag {
    pub const ALL: [OpTag; 23] = [
        OpTag::Parameter,
        OpTag::Constant,
        OpTag::Add,
        OpTag::Subtract,
        OpTag::Multiply,
        OpTag::Divide,
        OpTag::Negate,
        OpTag::Exp,
        OpTag::Log,
        OpTag::Tanh,
        OpTag::Sigmoid,
        OpTag::Relu,
        OpTag::Maximum,
        OpTag::Dot,
        OpTag::Broadcast,
        OpTag::Reshape,
        OpTag::Sum,
        OpTag::Conv2D,
        OpTag::ConvertLayout,
        OpTag::ConvBackpropData,
        OpTag::ConvBackpropFilter,
        OpTag::ReluBackprop,
        OpTag::MaximumBackprop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpTag::Parameter => "Parameter",
            OpTag::Constant => "Constant",
            OpTag::Add => "Add",
            OpTag::Subtract => "Subtract",
            OpTag::Multiply => "Multiply",
            OpTag::Divide => "Divide",
            OpTag::Negate => "Negate",
            OpTag::Exp => "Exp",
            OpTag::Log => "Log",
            OpTag::Tanh => "Tanh",
            OpTag::Sigmoid => "Sigmoid",
            OpTag::Relu => "Relu",
            OpTag::Maximum => "Maximum",
            OpTag::Dot => "Dot",
            OpTag::Broadcast => "Broadcast",
            OpTag::Reshape => "Reshape",
            OpTag::Sum => "Sum",
            OpTag::Conv2D => "Conv2D",
            OpTag::ConvertLayout => "ConvertLayout",
            OpTag::ConvBackpropData => "ConvBackpropData",
            OpTag::ConvBackpropFilter => "ConvBackpropFilter",
            OpTag::ReluBackprop => "ReluBackprop",
            OpTag::MaximumBackprop => "MaximumBackprop",
        }
    }

    pub fn is_internal(self) -> bool {
        matches!(
            self,
            OpTag::ConvBackpropData
                | OpTag::ConvBackpropFilter
                | OpTag::ReluBackprop
                | OpTag::MaximumBackprop
        )
    }

    /// Number of inputs the op takes.
    pub fn arity(self) -> usize {
        match self {
            OpTag::Parameter | OpTag::Constant => 0,
            OpTag::Negate
            | OpTag::Exp
            | OpTag::Log
            | OpTag::Tanh
            | OpTag::Sigmoid
            | OpTag::Relu
            | OpTag::Broadcast
            | OpTag::Reshape
            | OpTag::Sum
            | OpTag::ConvertLayout => 1,
            OpTag::MaximumBackprop => 3,
            _ => 2,
        }
    }

    pub fn is_elementwise_binary(self) -> bool {
        matches!(
            self,
            OpTag::Add | OpTag::Subtract | OpTag::Multiply | OpTag::Divide | OpTag::Maximum
        )
    }

    pub fn is_elementwise_unary(self) -> bool {
        matches!(
            self,
            OpTag::Negate | OpTag::Exp | OpTag::Log | OpTag::Tanh | OpTag::Sigmoid | OpTag::Relu
        )
    }
}

impl fmt::Display for OpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpTag::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown op `{s}`"))
    }
}

impl Op {
    pub fn tag(&self) -> OpTag {
        match self {
            Op::Parameter(_) => OpTag::Parameter,
            Op::Constant { .. } => OpTag::Constant,
            Op::Add => OpTag::Add,
            Op::Subtract => OpTag::Subtract,
            Op::Multiply => OpTag::Multiply,
            Op::Divide => OpTag::Divide,
            Op::Negate => OpTag::Negate,
            Op::Exp => OpTag::Exp,
            Op::Log => OpTag::Log,
            Op::Tanh => OpTag::Tanh,
            Op::Sigmoid => OpTag::Sigmoid,
            Op::Relu => OpTag::Relu,
            Op::Maximum => OpTag::Maximum,
            Op::Dot => OpTag::Dot,
            Op::Broadcast { .. } => OpTag::Broadcast,
            Op::Reshape { .. } => OpTag::Reshape,
            Op::Sum { .. } => OpTag::Sum,
            Op::Conv2D { .. } => OpTag::Conv2D,
            Op::ConvertLayout { .. } => OpTag::ConvertLayout,
            Op::ConvBackpropData { .. } => OpTag::ConvBackpropData,
            Op::ConvBackpropFilter { .. } => OpTag::ConvBackpropFilter,
            Op::ReluBackprop => OpTag::ReluBackprop,
            Op::MaximumBackprop { .. } => OpTag::MaximumBackprop,
        }
    }

    pub fn sum(axes: impl IntoIterator<Item = usize>) -> Op {
        Op::Sum {
            axes: axes.into_iter().collect(),
            kind: ReductionKind::Sum,
        }
    }

    pub fn max_reduce(axes: impl IntoIterator<Item = usize>) -> Op {
        Op::Sum {
            axes: axes.into_iter().collect(),
            kind: ReductionKind::Max,
        }
    }

    pub fn broadcast(shape: impl Into<Shape>, axes: impl IntoIterator<Item = usize>) -> Op {
        Op::Broadcast {
            shape: shape.into(),
            axes: axes.into_iter().collect(),
        }
    }

    pub fn reshape(input_order: impl Into<AxisVector>, shape: impl Into<Shape>) -> Op {
        Op::Reshape {
            input_order: input_order.into(),
            shape: shape.into(),
        }
    }

    pub fn conv2d(strides: (usize, usize), padding: Padding) -> Op {
        Op::Conv2D {
            strides: Strides {
                height: strides.0,
                width: strides.1,
            },
            padding,
        }
    }

    pub fn constant(descriptor: TensorDescriptor, value: Buffer) -> Op {
        Op::Constant { descriptor, value }
    }

    pub fn is_source(&self) -> bool {
        matches!(self, Op::Parameter(_) | Op::Constant { .. })
    }

    pub fn is_max_reduce(&self) -> bool {
        matches!(
            self,
            Op::Sum {
                kind: ReductionKind::Max,
                ..
            }
        )
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Sum {
                kind: ReductionKind::Max,
                ..
            } => f.write_str("Sum(max)"),
            _ => f.write_str(self.tag().name()),
        }
    }
}
