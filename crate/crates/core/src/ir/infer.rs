//! Output descriptor inference.
//!
//! Every op's output is a pure function of its attributes and its input
//! descriptors. There is no implicit broadcasting: elementwise ops require
//! identical input descriptors.

use super::op::{Op, OpTag, Padding, Strides};
use super::types::{is_permutation, ElementType, Shape, TensorDescriptor};
use super::IrError;

fn invalid(op: OpTag, reason: impl Into<String>) -> IrError {
    IrError::InvalidAttribute {
        op,
        reason: reason.into(),
    }
}

fn shape_mismatch(op: OpTag, inputs: &[TensorDescriptor]) -> IrError {
    IrError::ShapeMismatch {
        op,
        shapes: inputs.iter().map(|d| d.shape.clone()).collect(),
    }
}

fn type_mismatch(op: OpTag, inputs: &[TensorDescriptor]) -> IrError {
    IrError::ElementTypeMismatch {
        op,
        types: inputs.iter().map(|d| d.element_type).collect(),
    }
}

/// Element types each op accepts.
fn supports(op: OpTag, et: ElementType) -> bool {
    use OpTag::*;
    match et {
        ElementType::F32 | ElementType::F64 => true,
        ElementType::I64 => matches!(
            op,
            Parameter
                | Constant
                | Add
                | Subtract
                | Multiply
                | Negate
                | Reshape
                | Broadcast
                | Sum
                | ConvertLayout
        ),
        ElementType::Bool => matches!(
            op,
            Parameter | Constant | Reshape | Broadcast | ConvertLayout
        ),
    }
}

/// Computes the descriptor of `op`'s single output.
pub fn infer_output(op: &Op, inputs: &[TensorDescriptor]) -> Result<TensorDescriptor, IrError> {
    let tag = op.tag();
    if inputs.len() != tag.arity() {
        return Err(IrError::ArityMismatch {
            op: tag,
            expected: tag.arity(),
            found: inputs.len(),
        });
    }
    // all multi-input ops need a common element type
    if let Some(first) = inputs.first() {
        if inputs.iter().any(|d| d.element_type != first.element_type) {
            return Err(type_mismatch(tag, inputs));
        }
        if !supports(tag, first.element_type) {
            return Err(type_mismatch(tag, inputs));
        }
    }

    match op {
        Op::Parameter(desc) => {
            if !supports(tag, desc.element_type) {
                return Err(type_mismatch(tag, std::slice::from_ref(desc)));
            }
            Ok(desc.clone())
        }
        Op::Constant { descriptor, value } => {
            if value.element_type() != descriptor.element_type {
                return Err(invalid(
                    tag,
                    format!(
                        "data is {} but descriptor says {}",
                        value.element_type(),
                        descriptor.element_type
                    ),
                ));
            }
            if value.len() != descriptor.element_count() {
                return Err(invalid(
                    tag,
                    format!("{} values for shape {}", value.len(), descriptor.shape),
                ));
            }
            Ok(descriptor.clone())
        }
        Op::Add
        | Op::Subtract
        | Op::Multiply
        | Op::Divide
        | Op::Maximum
        | Op::ReluBackprop
        | Op::MaximumBackprop { .. } => {
            if inputs.iter().any(|d| d.shape != inputs[0].shape) {
                return Err(shape_mismatch(tag, inputs));
            }
            Ok(inputs[0].clone())
        }
        Op::Negate | Op::Exp | Op::Log | Op::Tanh | Op::Sigmoid | Op::Relu => Ok(inputs[0].clone()),
        Op::Dot => {
            let (a, b) = (&inputs[0].shape, &inputs[1].shape);
            if a.rank() != 2 || b.rank() != 2 || a.0[1] != b.0[0] {
                return Err(shape_mismatch(tag, inputs));
            }
            Ok(TensorDescriptor::new(
                inputs[0].element_type,
                [a.0[0], b.0[1]],
            ))
        }
        Op::Broadcast { shape, axes } => {
            if let Some(&bad) = axes.iter().find(|&&a| a >= shape.rank()) {
                return Err(invalid(
                    tag,
                    format!("broadcast axis {bad} out of range for output shape {shape}"),
                ));
            }
            if shape.without_axes(axes) != inputs[0].shape {
                return Err(IrError::ShapeMismatch {
                    op: tag,
                    shapes: vec![inputs[0].shape.clone(), shape.clone()],
                });
            }
            Ok(TensorDescriptor::new(inputs[0].element_type, shape.clone()))
        }
        Op::Reshape { input_order, shape } => {
            let input = &inputs[0];
            if !is_permutation(input_order, input.shape.rank()) {
                return Err(invalid(
                    tag,
                    format!(
                        "input order {:?} is not a permutation of rank {}",
                        input_order,
                        input.shape.rank()
                    ),
                ));
            }
            if shape.element_count() != input.element_count() {
                return Err(IrError::ShapeMismatch {
                    op: tag,
                    shapes: vec![input.shape.clone(), shape.clone()],
                });
            }
            Ok(TensorDescriptor::new(input.element_type, shape.clone()))
        }
        Op::Sum { axes, .. } => {
            let input = &inputs[0];
            if let Some(&bad) = axes.iter().find(|&&a| a >= input.shape.rank()) {
                return Err(invalid(
                    tag,
                    format!(
                        "reduction axis {bad} out of range for shape {}",
                        input.shape
                    ),
                ));
            }
            Ok(TensorDescriptor::new(
                input.element_type,
                input.shape.without_axes(axes),
            ))
        }
        Op::Conv2D { strides, padding } => {
            let out = conv_output_shape(tag, inputs, *strides, *padding)?;
            Ok(TensorDescriptor::new(inputs[0].element_type, out))
        }
        Op::ConvertLayout { order } => {
            if !is_permutation(order, inputs[0].shape.rank()) {
                return Err(invalid(
                    tag,
                    format!(
                        "layout order {:?} is not a permutation of rank {}",
                        order,
                        inputs[0].shape.rank()
                    ),
                ));
            }
            Ok(inputs[0].clone())
        }
        Op::ConvBackpropData {
            data_shape,
            padding,
        } => {
            // inputs: filter [K,C,R,S], output delta [N,K,Ho,Wo]
            let filter = &inputs[0];
            let delta = &inputs[1];
            if data_shape.rank() != 4 {
                return Err(invalid(
                    tag,
                    format!("data shape {data_shape} is not rank 4"),
                ));
            }
            let data = TensorDescriptor::new(filter.element_type, data_shape.clone());
            let expected = conv_output_shape(
                tag,
                &[data.clone(), filter.clone()],
                Strides::default(),
                *padding,
            )?;
            if expected != delta.shape {
                return Err(shape_mismatch(tag, inputs));
            }
            Ok(data)
        }
        Op::ConvBackpropFilter {
            filter_shape,
            padding,
        } => {
            // inputs: data [N,C,H,W], output delta [N,K,Ho,Wo]
            let data = &inputs[0];
            let delta = &inputs[1];
            if filter_shape.rank() != 4 {
                return Err(invalid(
                    tag,
                    format!("filter shape {filter_shape} is not rank 4"),
                ));
            }
            let filter = TensorDescriptor::new(data.element_type, filter_shape.clone());
            let expected = conv_output_shape(
                tag,
                &[data.clone(), filter.clone()],
                Strides::default(),
                *padding,
            )?;
            if expected != delta.shape {
                return Err(shape_mismatch(tag, inputs));
            }
            Ok(filter)
        }
    }
}

fn conv_output_shape(
    tag: OpTag,
    inputs: &[TensorDescriptor],
    strides: Strides,
    padding: Padding,
) -> Result<Shape, IrError> {
    let (x, f) = (&inputs[0].shape, &inputs[1].shape);
    if x.rank() != 4 || f.rank() != 4 || x.0[1] != f.0[1] {
        return Err(shape_mismatch(tag, inputs));
    }
    if strides.height == 0 || strides.width == 0 {
        return Err(invalid(tag, "strides must be at least 1"));
    }
    let padded_h = x.0[2] + padding.top + padding.bottom;
    let padded_w = x.0[3] + padding.left + padding.right;
    if f.0[2] > padded_h || f.0[3] > padded_w {
        return Err(invalid(
            tag,
            format!("filter {f} larger than padded input {padded_h}x{padded_w}"),
        ));
    }
    Ok(Shape::new([
        x.0[0],
        f.0[0],
        (padded_h - f.0[2]) / strides.height + 1,
        (padded_w - f.0[3]) / strides.width + 1,
    ]))
}
