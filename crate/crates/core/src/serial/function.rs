use std::collections::BTreeSet;

use serde_json::{Map, Value};

use crate::ir::{
    infer_output, Diagnostic, Function, MaxOperand, Node, NodeId, Op, OpTag, Output, Padding,
    ReductionKind, Shape, Strides, TensorDescriptor,
};

use super::number::{format_data, parse_data};
use super::tensor::{check_keys, element_type, field, usize_list};
use super::{schema, ParseError};

fn list(v: impl IntoIterator<Item = usize>) -> String {
    let items: Vec<String> = v.into_iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn padding_list(p: &Padding) -> String {
    list([p.top, p.bottom, p.left, p.right])
}

fn string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Attribute pairs in key order.
fn attrs(op: &Op) -> Vec<(&'static str, String)> {
    match op {
        Op::Parameter(d) => vec![
            ("element_type", string(d.element_type.name())),
            ("shape", list(d.shape.dims().iter().copied())),
        ],
        Op::Constant { descriptor, value } => vec![
            ("data", format_data(value)),
            ("element_type", string(descriptor.element_type.name())),
            ("shape", list(descriptor.shape.dims().iter().copied())),
        ],
        Op::Broadcast { shape, axes } => vec![
            ("axes", list(axes.iter().copied())),
            ("shape", list(shape.dims().iter().copied())),
        ],
        Op::Reshape { input_order, shape } => vec![
            ("input_order", list(input_order.iter().copied())),
            ("shape", list(shape.dims().iter().copied())),
        ],
        Op::Sum { axes, kind } => vec![
            ("axes", list(axes.iter().copied())),
            ("reduction", string(kind.name())),
        ],
        Op::Conv2D { strides, padding } => vec![
            ("padding", padding_list(padding)),
            ("strides", list([strides.height, strides.width])),
        ],
        Op::ConvertLayout { order } => vec![("order", list(order.iter().copied()))],
        Op::ConvBackpropData {
            data_shape,
            padding,
        } => vec![
            ("data_shape", list(data_shape.dims().iter().copied())),
            ("padding", padding_list(padding)),
        ],
        Op::ConvBackpropFilter {
            filter_shape,
            padding,
        } => vec![
            ("filter_shape", list(filter_shape.dims().iter().copied())),
            ("padding", padding_list(padding)),
        ],
        Op::MaximumBackprop { operand } => vec![(
            "to",
            string(match operand {
                MaxOperand::First => "first",
                MaxOperand::Second => "second",
            }),
        )],
        _ => Vec::new(),
    }
}

fn output(o: &Output) -> String {
    format!("[{}, {}]", o.node, o.port)
}

/// The canonical document: nodes in id order, one per line, with keys in a
/// fixed order and attribute keys sorted.
pub fn print_function(f: &Function) -> String {
    let mut out = String::from("{\n");
    out.push_str(&format!("  \"name\": {},\n", string(f.name())));
    let nodes: Vec<String> = f
        .nodes()
        .map(|n| {
            let attrs: Vec<String> = attrs(&n.op)
                .into_iter()
                .map(|(k, v)| format!("\"{k}\": {v}"))
                .collect();
            let inputs: Vec<String> = n.inputs.iter().map(output).collect();
            format!(
                "    {{\"id\": {}, \"op\": \"{}\", \"attrs\": {{{}}}, \"inputs\": [{}]}}",
                n.id,
                n.op.tag(),
                attrs.join(", "),
                inputs.join(", ")
            )
        })
        .collect();
    if nodes.is_empty() {
        out.push_str("  \"nodes\": [],\n");
    } else {
        out.push_str(&format!("  \"nodes\": [\n{}\n  ],\n", nodes.join(",\n")));
    }
    out.push_str(&format!(
        "  \"parameters\": {},\n",
        list(f.parameters().iter().map(|p| p.0 as usize))
    ));
    let results: Vec<String> = f.results().iter().map(output).collect();
    out.push_str(&format!("  \"results\": [{}]\n}}\n", results.join(", ")));
    out
}

struct Attrs<'a> {
    map: &'a Map<String, Value>,
    op: OpTag,
}

impl Attrs<'_> {
    fn allow(&self, keys: &[&str]) -> Result<(), ParseError> {
        check_keys(self.map, keys, &format!("{} attrs", self.op))
    }

    fn get(&self, key: &str) -> Result<&Value, ParseError> {
        field(self.map, key, &format!("{} attrs", self.op))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>, ParseError> {
        usize_list(self.get(key)?, key)
    }

    fn shape(&self, key: &str) -> Result<Shape, ParseError> {
        self.list(key).map(Shape::new)
    }

    fn descriptor(&self) -> Result<TensorDescriptor, ParseError> {
        Ok(TensorDescriptor::new(
            element_type(self.get("element_type")?)?,
            self.shape("shape")?,
        ))
    }

    fn padding(&self, required: bool) -> Result<Padding, ParseError> {
        if !required && !self.map.contains_key("padding") {
            return Ok(Padding::default());
        }
        match self.list("padding")?.as_slice() {
            &[top, bottom, left, right] => Ok(Padding {
                top,
                bottom,
                left,
                right,
            }),
            other => Err(schema(format!(
                "{}: padding needs [top, bottom, left, right], got {other:?}",
                self.op
            ))),
        }
    }
}

fn parse_op(tag: OpTag, map: &Map<String, Value>) -> Result<Op, ParseError> {
    let a = Attrs { map, op: tag };
    Ok(match tag {
        OpTag::Parameter => {
            a.allow(&["element_type", "shape"])?;
            Op::Parameter(a.descriptor()?)
        }
        OpTag::Constant => {
            a.allow(&["data", "element_type", "shape"])?;
            let descriptor = a.descriptor()?;
            let value = parse_data(descriptor.element_type, a.get("data")?)?;
            Op::Constant { descriptor, value }
        }
        OpTag::Broadcast => {
            a.allow(&["axes", "shape"])?;
            Op::Broadcast {
                shape: a.shape("shape")?,
                axes: a.list("axes")?.into_iter().collect(),
            }
        }
        OpTag::Reshape => {
            a.allow(&["input_order", "shape"])?;
            Op::Reshape {
                input_order: a.list("input_order")?,
                shape: a.shape("shape")?,
            }
        }
        OpTag::Sum => {
            a.allow(&["axes", "reduction"])?;
            let kind = match map.get("reduction").map(|v| v.as_str()) {
                None | Some(Some("sum")) => ReductionKind::Sum,
                Some(Some("max")) => ReductionKind::Max,
                _ => return Err(schema("Sum: `reduction` must be \"sum\" or \"max\"")),
            };
            Op::Sum {
                axes: a.list("axes")?.into_iter().collect(),
                kind,
            }
        }
        OpTag::Conv2D => {
            a.allow(&["padding", "strides"])?;
            let strides = if map.contains_key("strides") {
                match a.list("strides")?.as_slice() {
                    &[height, width] => Strides { height, width },
                    other => {
                        return Err(schema(format!(
                            "Conv2D: strides needs [height, width], got {other:?}"
                        )))
                    }
                }
            } else {
                Strides::default()
            };
            Op::Conv2D {
                strides,
                padding: a.padding(false)?,
            }
        }
        OpTag::ConvertLayout => {
            a.allow(&["order"])?;
            Op::ConvertLayout {
                order: a.list("order")?,
            }
        }
        OpTag::ConvBackpropData => {
            a.allow(&["data_shape", "padding"])?;
            Op::ConvBackpropData {
                data_shape: a.shape("data_shape")?,
                padding: a.padding(true)?,
            }
        }
        OpTag::ConvBackpropFilter => {
            a.allow(&["filter_shape", "padding"])?;
            Op::ConvBackpropFilter {
                filter_shape: a.shape("filter_shape")?,
                padding: a.padding(true)?,
            }
        }
        OpTag::MaximumBackprop => {
            a.allow(&["to"])?;
            let operand = match a.get("to")?.as_str() {
                Some("first") => MaxOperand::First,
                Some("second") => MaxOperand::Second,
                _ => {
                    return Err(schema(
                        "MaximumBackprop: `to` must be \"first\" or \"second\"",
                    ))
                }
            };
            Op::MaximumBackprop { operand }
        }
        OpTag::Add => Op::Add,
        OpTag::Subtract => Op::Subtract,
        OpTag::Multiply => Op::Multiply,
        OpTag::Divide => Op::Divide,
        OpTag::Negate => Op::Negate,
        OpTag::Exp => Op::Exp,
        OpTag::Log => Op::Log,
        OpTag::Tanh => Op::Tanh,
        OpTag::Sigmoid => Op::Sigmoid,
        OpTag::Relu => Op::Relu,
        OpTag::Maximum => Op::Maximum,
        OpTag::Dot => Op::Dot,
        OpTag::ReluBackprop => Op::ReluBackprop,
    })
    .and_then(|op| match &op {
        Op::Parameter(_)
        | Op::Constant { .. }
        | Op::Broadcast { .. }
        | Op::Reshape { .. }
        | Op::Sum { .. }
        | Op::Conv2D { .. }
        | Op::ConvertLayout { .. }
        | Op::ConvBackpropData { .. }
        | Op::ConvBackpropFilter { .. }
        | Op::MaximumBackprop { .. } => Ok(op),
        _ => {
            a.allow(&[])?;
            Ok(op)
        }
    })
}

fn node_id(v: &Value, what: &str) -> Result<NodeId, ParseError> {
    v.as_u64()
        .filter(|&n| n >= 1)
        .and_then(|n| u32::try_from(n).ok())
        .map(NodeId)
        .ok_or_else(|| schema(format!("{what} must be a positive integer id")))
}

fn output_ref(v: &Value, what: &str) -> Result<Output, ParseError> {
    match v.as_array().map(Vec::as_slice) {
        Some([id, port]) => {
            let port = port
                .as_u64()
                .and_then(|p| u32::try_from(p).ok())
                .ok_or_else(|| schema(format!("{what}: port must be a non-negative integer")))?;
            Ok(Output::new(node_id(id, what)?, port))
        }
        _ => Err(schema(format!("{what} must be an [id, port] pair"))),
    }
}

fn array<'a>(
    map: &'a Map<String, Value>,
    key: &str,
    what: &str,
) -> Result<&'a Vec<Value>, ParseError> {
    field(map, key, what)?
        .as_array()
        .ok_or_else(|| schema(format!("`{key}` in {what} must be an array")))
}

fn parse_node(v: &Value) -> Result<Node, ParseError> {
    let map = v
        .as_object()
        .ok_or_else(|| schema("each node must be an object"))?;
    check_keys(map, &["id", "op", "attrs", "inputs"], "node")?;
    let id = node_id(field(map, "id", "node")?, "node id")?;
    let name = field(map, "op", "node")?
        .as_str()
        .ok_or_else(|| schema(format!("node {id}: `op` must be a string")))?;
    let tag: OpTag = name
        .parse()
        .map_err(|_| ParseError::UnknownOp(name.to_string()))?;
    let empty = Map::new();
    let attrs = match map.get("attrs") {
        None => &empty,
        Some(a) => a
            .as_object()
            .ok_or_else(|| schema(format!("node {id}: `attrs` must be an object")))?,
    };
    let op = parse_op(tag, attrs).map_err(|e| match e {
        ParseError::Schema(m) => schema(format!("node {id}: {m}")),
        other => other,
    })?;
    let inputs = match map.get("inputs") {
        None => Vec::new(),
        Some(_) => array(map, "inputs", "node")?
            .iter()
            .map(|i| output_ref(i, &format!("node {id} input")))
            .collect::<Result<_, _>>()?,
    };
    Ok(Node {
        id,
        op,
        inputs,
        outputs: Vec::new(),
    })
}

/// Parses and validates a function document, re-inferring every descriptor.
pub fn parse_function(text: &str) -> Result<Function, ParseError> {
    let doc: Value = serde_json::from_str(text)?;
    let map = doc
        .as_object()
        .ok_or_else(|| schema("a function document must be an object"))?;
    check_keys(
        map,
        &["name", "nodes", "parameters", "results"],
        "function document",
    )?;
    let name = match map.get("name") {
        None => "",
        Some(v) => v
            .as_str()
            .ok_or_else(|| schema("`name` must be a string"))?,
    };
    let nodes: Vec<Node> = array(map, "nodes", "function document")?
        .iter()
        .map(parse_node)
        .collect::<Result<_, _>>()?;
    let mut ids = BTreeSet::new();
    for n in &nodes {
        if !ids.insert(n.id) {
            return Err(schema(format!("duplicate node id {}", n.id)));
        }
    }
    let parameters: Vec<NodeId> = array(map, "parameters", "function document")?
        .iter()
        .map(|v| node_id(v, "parameter"))
        .collect::<Result<_, _>>()?;
    let results: Vec<Output> = array(map, "results", "function document")?
        .iter()
        .map(|v| output_ref(v, "result"))
        .collect::<Result<_, _>>()?;

    let mut diagnostics = Vec::new();
    for n in &nodes {
        for &input in &n.inputs {
            if !ids.contains(&input.node) || input.port != 0 {
                diagnostics.push(Diagnostic::UnknownInput { node: n.id, input });
            }
        }
    }
    if !diagnostics.is_empty() {
        return Err(ParseError::Validation(diagnostics));
    }
    let mut f = Function::from_parts(name, nodes, parameters, results);
    let order = match f.topological_order() {
        Ok(order) => order,
        Err(crate::ir::IrError::CycleDetected(nodes)) => {
            return Err(ParseError::Validation(vec![Diagnostic::CycleDetected {
                nodes,
            }]))
        }
        Err(e) => return Err(schema(e.to_string())),
    };
    for id in order {
        let node = f.node(id).unwrap();
        let descs: Option<Vec<TensorDescriptor>> = node
            .inputs
            .iter()
            .map(|i| f.descriptor(*i).cloned())
            .collect();
        // an upstream failure is already reported
        let Some(descs) = descs else { continue };
        match infer_output(&node.op, &descs) {
            Ok(d) => f.node_mut(id).unwrap().outputs = vec![d],
            Err(error) => diagnostics.push(Diagnostic::InferenceFailed { node: id, error }),
        }
    }
    if !diagnostics.is_empty() {
        return Err(ParseError::Validation(diagnostics));
    }
    let diagnostics = f.validate();
    if !diagnostics.is_empty() {
        return Err(ParseError::Validation(diagnostics));
    }
    Ok(f)
}
