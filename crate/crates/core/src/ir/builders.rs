use super::function::{Function, NodeId};
use super::op::{Op, OpTag};
use super::IrError;

/// Appends a numerically stable softmax over `axis` and returns the final
/// `Divide` node.
///
/// The expansion is `e = exp(x - bcast(max(x, axis)))`, `e / bcast(sum(e, axis))`.
pub fn build_softmax(f: &mut Function, input: NodeId, axis: usize) -> Result<NodeId, IrError> {
    let desc = f
        .node(input)
        .ok_or(IrError::UnknownNode(input))?
        .descriptor()
        .clone();
    if axis >= desc.shape.rank() {
        return Err(IrError::InvalidAttribute {
            op: OpTag::Sum,
            reason: format!("softmax axis {axis} out of range for shape {}", desc.shape),
        });
    }
    let shape = desc.shape.clone();
    let max = f.add_node(Op::max_reduce([axis]), [input])?;
    let max_b = f.add_node(Op::broadcast(shape.clone(), [axis]), [max])?;
    let shifted = f.add_node(Op::Subtract, [input, max_b])?;
    let exp = f.add_node(Op::Exp, [shifted])?;
    let total = f.add_node(Op::sum([axis]), [exp])?;
    let total_b = f.add_node(Op::broadcast(shape, [axis]), [total])?;
    f.add_node(Op::Divide, [exp, total_b])
}
