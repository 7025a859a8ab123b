use crate::interp::{compile, CompileOptions, TensorValue};
use crate::ir::{Buffer, Function, NodeId};

use super::{differentiate, AutodiffError};

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCheck {
    pub parameter: NodeId,
    /// Row-major.
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub parameters: Vec<ParameterCheck>,
}

impl GradientReport {
    pub fn max_relative_error(&self) -> f64 {
        self.parameters
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn with_element(buffer: &Buffer, index: usize, value: f64) -> Buffer {
    let mut out = buffer.clone();
    match &mut out {
        Buffer::F32(v) => v[index] = value as f32,
        Buffer::F64(v) => v[index] = value,
        Buffer::I64(v) => v[index] = value as i64,
        Buffer::Bool(v) => v[index] = value != 0.0,
    }
    out
}

/// Compares the gradient graph of `f` against central differences at
/// `point`, one value per parameter of `f`. Each element `x` is perturbed by
/// `h * max(1, |x|)`. The result of `f` must be a scalar; the seed is 1.
pub fn check_gradient(
    f: &Function,
    wrt: &[NodeId],
    point: &[TensorValue],
    h: f64,
) -> Result<GradientReport, AutodiffError> {
    let result = f
        .result_descriptors()
        .first()
        .cloned()
        .ok_or(AutodiffError::MultipleResults(0))?;
    if result.shape.rank() != 0 {
        return Err(AutodiffError::NonScalarResult(result.shape));
    }
    let grad = differentiate(f, wrt)?;
    let options = CompileOptions::unoptimized();
    let forward = compile(f, &options)?;
    let backward = compile(&grad, &options)?;

    let point: Vec<TensorValue> = point
        .iter()
        .map(|t| TensorValue::from_row_major(t.descriptor().clone(), t.to_row_major()))
        .collect::<Result<_, _>>()?;
    let mut inputs = point.clone();
    inputs.push(TensorValue::from_row_major(
        result.clone(),
        Buffer::filled(result.element_type, 1, 1.0),
    )?);
    let analytic = backward.call(&inputs)?;

    let eval = |args: &[TensorValue]| -> Result<f64, AutodiffError> {
        Ok(forward.call(args)?[0].buffer().get_f64(0))
    };

    let mut parameters = Vec::with_capacity(wrt.len());
    for (k, &p) in wrt.iter().enumerate() {
        let index = f
            .parameters()
            .iter()
            .position(|q| *q == p)
            .ok_or(AutodiffError::NotAParameter(p))?;
        let base = point[index].buffer().clone();
        let mut numeric = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let x = base.get_f64(i);
            let step = h * x.abs().max(1.0);
            let mut args = point.clone();
            let descriptor = point[index].descriptor().clone();
            args[index] =
                TensorValue::from_row_major(descriptor.clone(), with_element(&base, i, x + step))?;
            let plus = eval(&args)?;
            args[index] =
                TensorValue::from_row_major(descriptor, with_element(&base, i, x - step))?;
            let minus = eval(&args)?;
            numeric.push((plus - minus) / (2.0 * step));
        }
        let analytic = analytic[k].to_row_major().to_f64_vec();
        let max_relative_error = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        parameters.push(ParameterCheck {
            parameter: p,
            analytic,
            numeric,
            max_relative_error,
        });
    }
    Ok(GradientReport { parameters })
}
