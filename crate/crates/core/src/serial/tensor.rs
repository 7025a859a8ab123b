use serde_json::{Map, Value};

use crate::interp::TensorValue;
use crate::ir::{ElementType, TensorDescriptor};
use crate::layout::Layout;

use super::number::{format_data, parse_data};
use super::{schema, ParseError};

fn list(v: &[usize]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// One-line tensor document with data in buffer order.
pub fn print_tensor(t: &TensorValue) -> String {
    format!(
        "{{\"element_type\": \"{}\", \"shape\": {}, \"order\": {}, \"data\": {}}}\n",
        t.element_type(),
        list(t.shape().dims()),
        list(t.layout().order()),
        format_data(t.buffer())
    )
}

pub(crate) fn usize_list(v: &Value, what: &str) -> Result<Vec<usize>, ParseError> {
    v.as_array()
        .ok_or_else(|| {
            schema(format!(
                "`{what}` must be an array of non-negative integers"
            ))
        })?
        .iter()
        .map(|x| {
            x.as_u64()
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| {
                    schema(format!(
                        "`{what}` must be an array of non-negative integers"
                    ))
                })
        })
        .collect()
}

pub(crate) fn element_type(v: &Value) -> Result<ElementType, ParseError> {
    v.as_str()
        .ok_or_else(|| schema("`element_type` must be a string"))?
        .parse()
        .map_err(|e: String| schema(e))
}

pub(crate) fn check_keys(
    map: &Map<String, Value>,
    allowed: &[&str],
    what: &str,
) -> Result<(), ParseError> {
    match map.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(format!("unexpected key `{k}` in {what}"))),
        None => Ok(()),
    }
}

pub(crate) fn field<'a>(
    map: &'a Map<String, Value>,
    key: &str,
    what: &str,
) -> Result<&'a Value, ParseError> {
    map.get(key)
        .ok_or_else(|| schema(format!("{what} is missing `{key}`")))
}

pub fn parse_tensor(text: &str) -> Result<TensorValue, ParseError> {
    let doc: Value = serde_json::from_str(text)?;
    let map = doc
        .as_object()
        .ok_or_else(|| schema("a tensor document must be an object"))?;
    check_keys(
        map,
        &["element_type", "shape", "order", "data"],
        "tensor document",
    )?;
    let et = element_type(field(map, "element_type", "tensor document")?)?;
    let shape = usize_list(field(map, "shape", "tensor document")?, "shape")?;
    let order = match map.get("order") {
        Some(v) => usize_list(v, "order")?,
        None => (0..shape.len()).collect(),
    };
    let layout = Layout::new(order.clone())
        .filter(|l| l.rank() == shape.len())
        .ok_or_else(|| {
            schema(format!(
                "order {order:?} is not a permutation of the {} axes",
                shape.len()
            ))
        })?;
    let data = parse_data(et, field(map, "data", "tensor document")?)?;
    TensorValue::new(TensorDescriptor::new(et, shape), layout, data)
        .map_err(|e| schema(e.to_string()))
}
