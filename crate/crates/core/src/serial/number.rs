//! Element formatting that survives a round trip bit for bit.

use serde_json::Value;

use crate::ir::{Buffer, ElementType};

use super::{schema, ParseError};

fn float_text(v: f64, finite: impl FnOnce() -> String) -> String {
    if v.is_nan() {
        "\"NaN\"".into()
    } else if v == f64::INFINITY {
        "\"Inf\"".into()
    } else if v == f64::NEG_INFINITY {
        "\"-Inf\"".into()
    } else {
        finite()
    }
}

/// Comma-separated elements, shortest round-trip decimal for floats.
pub(crate) fn format_data(buffer: &Buffer) -> String {
    let items: Vec<String> = match buffer {
        Buffer::F32(v) => v
            .iter()
            .map(|&x| float_text(x as f64, || format!("{x:?}")))
            .collect(),
        Buffer::F64(v) => v
            .iter()
            .map(|&x| float_text(x, || format!("{x:?}")))
            .collect(),
        Buffer::I64(v) => v.iter().map(|x| x.to_string()).collect(),
        Buffer::Bool(v) => v.iter().map(|x| x.to_string()).collect(),
    };
    format!("[{}]", items.join(", "))
}

fn special(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "Inf" => Some(f64::INFINITY),
        "-Inf" => Some(f64::NEG_INFINITY),
        _ => None,
    }
}

fn bad(et: ElementType, v: &Value) -> ParseError {
    schema(format!("`{v}` is not a valid {et} element"))
}

/// Reads `data` as elements of `et`. Numbers are parsed from their source
/// text, so f32 values are rounded once.
pub(crate) fn parse_data(et: ElementType, data: &Value) -> Result<Buffer, ParseError> {
    let items = data
        .as_array()
        .ok_or_else(|| schema("`data` must be an array"))?;
    Ok(match et {
        ElementType::F32 => Buffer::F32(
            items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => n.to_string().parse::<f32>().map_err(|_| bad(et, v)),
                    Value::String(s) => special(s).map(|x| x as f32).ok_or_else(|| bad(et, v)),
                    _ => Err(bad(et, v)),
                })
                .collect::<Result<_, _>>()?,
        ),
        ElementType::F64 => Buffer::F64(
            items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => n.to_string().parse::<f64>().map_err(|_| bad(et, v)),
                    Value::String(s) => special(s).ok_or_else(|| bad(et, v)),
                    _ => Err(bad(et, v)),
                })
                .collect::<Result<_, _>>()?,
        ),
        ElementType::I64 => Buffer::I64(
            items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => n.to_string().parse::<i64>().map_err(|_| bad(et, v)),
                    _ => Err(bad(et, v)),
                })
                .collect::<Result<_, _>>()?,
        ),
        ElementType::Bool => Buffer::Bool(
            items
                .iter()
                .map(|v| v.as_bool().ok_or_else(|| bad(et, v)))
                .collect::<Result<_, _>>()?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(b: &Buffer) -> Buffer {
        let v: Value = serde_json::from_str(&format_data(b)).unwrap();
        parse_data(b.element_type(), &v).unwrap()
    }

    #[test]
    fn f64_bits_survive() {
        let b = Buffer::F64(vec![
            0.1,
            -0.0,
            f64::MIN_POSITIVE,
            5e-324,
            f64::MAX,
            1.0 / 3.0,
            f64::NAN,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ]);
        let back = round_trip(&b);
        assert!(back.bit_eq(&Buffer::F64(vec![
            0.1,
            -0.0,
            f64::MIN_POSITIVE,
            5e-324,
            f64::MAX,
            1.0 / 3.0,
            f64::NAN,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ])));
        assert_eq!(format_data(&Buffer::F64(vec![-0.0, 1.0])), "[-0.0, 1.0]");
    }

    #[test]
    fn f32_is_rounded_once() {
        let b = Buffer::F32(vec![0.1, 16777217.0, f32::MIN_POSITIVE, 1e-45]);
        assert!(round_trip(&b).bit_eq(&b));
    }

    #[test]
    fn integers_and_bools() {
        let b = Buffer::I64(vec![i64::MIN, -1, 0, i64::MAX]);
        assert_eq!(round_trip(&b), b);
        let b = Buffer::Bool(vec![true, false]);
        assert_eq!(round_trip(&b), b);
        let v: Value = serde_json::from_str("[1.5]").unwrap();
        assert!(parse_data(ElementType::I64, &v).is_err());
    }
}
