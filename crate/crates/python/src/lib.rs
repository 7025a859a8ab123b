//! Python module `graphforge_py`: functions, tensors, compilation and the
//! graph passes.

use graphforge::autodiff::{check_gradient, differentiate};
use graphforge::interp::{compile, CompileOptions, TensorValue};
use graphforge::ir::{Buffer, ElementType, Function, Node, NodeId, OpTag, Shape, TensorDescriptor};
use graphforge::passes::{
    partition, run_pipeline, ConvLayout, LayoutPreferences, LiveInterval, Pass,
};
use graphforge::serial::{export_dot, parse_function, parse_tensor, print_function, print_tensor};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn element_type(name: &str) -> PyResult<ElementType> {
    name.parse().map_err(value_error)
}

/// A tensor value with a logical shape and row-major data.
#[pyclass(name = "Tensor", module = "graphforge_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: TensorValue,
}

#[pymethods]
impl PyTensor {
    #[new]
    #[pyo3(signature = (shape, data, element_type = "f64"))]
    fn new(shape: Vec<usize>, data: Vec<f64>, element_type: &str) -> PyResult<Self> {
        let et = self::element_type(element_type)?;
        let descriptor = TensorDescriptor::new(et, Shape::new(shape));
        if data.len() != descriptor.element_count() {
            return Err(value_error(format!(
                "{} values for shape {}",
                data.len(),
                descriptor.shape
            )));
        }
        let buffer = match et {
            ElementType::F32 => Buffer::F32(data.iter().map(|&v| v as f32).collect()),
            ElementType::F64 => Buffer::F64(data),
            ElementType::I64 => Buffer::I64(data.iter().map(|&v| v as i64).collect()),
            ElementType::Bool => Buffer::Bool(data.iter().map(|&v| v != 0.0).collect()),
        };
        let inner = TensorValue::from_row_major(descriptor, buffer).map_err(value_error)?;
        Ok(PyTensor { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = parse_tensor(text).map_err(value_error)?;
        Ok(PyTensor { inner })
    }

    fn to_json(&self) -> String {
        print_tensor(&self.inner)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().dims().to_vec()
    }

    #[getter]
    fn element_type(&self) -> &'static str {
        self.inner.element_type().name()
    }

    /// Row-major values as floats.
    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.to_row_major().to_f64_vec()
    }

    fn __repr__(&self) -> String {
        format!("Tensor({}, {:?})", self.inner.descriptor(), self.data())
    }
}

/// A validated dataflow function.
#[pyclass(name = "Function", module = "graphforge_py", frozen)]
struct PyFunction {
    inner: Function,
}

fn parameter_ids(f: &Function, wrt: Option<Vec<usize>>) -> PyResult<Vec<NodeId>> {
    let params = f.parameters();
    match wrt {
        None => Ok(params.to_vec()),
        Some(indices) => indices
            .into_iter()
            .map(|k| {
                params
                    .get(k)
                    .copied()
                    .ok_or_else(|| value_error(format!("no parameter {k}")))
            })
            .collect(),
    }
}

#[pymethods]
impl PyFunction {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let inner = parse_function(text).map_err(value_error)?;
        Ok(PyFunction { inner })
    }

    /// The canonical document text.
    fn to_json(&self) -> String {
        print_function(&self.inner)
    }

    fn to_dot(&self) -> String {
        export_dot(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        self.inner
            .parameter_descriptors()
            .iter()
            .map(|d| d.shape.dims().to_vec())
            .collect()
    }

    #[getter]
    fn result_shapes(&self) -> Vec<Vec<usize>> {
        self.inner
            .result_descriptors()
            .iter()
            .map(|d| d.shape.dims().to_vec())
            .collect()
    }

    #[pyo3(signature = (passes = "simplify,cse,fold", conv_layout = "identity"))]
    fn optimize(&self, passes: &str, conv_layout: &str) -> PyResult<PyFunction> {
        let passes = Pass::parse_list(passes).map_err(value_error)?;
        let conv: ConvLayout = conv_layout.parse().map_err(value_error)?;
        let inner = run_pipeline(&self.inner, &passes, &LayoutPreferences::for_conv(conv))
            .map_err(runtime_error)?;
        Ok(PyFunction { inner })
    }

    /// Gradient function; `wrt` lists parameter indices (default: all).
    #[pyo3(signature = (wrt = None))]
    fn grad(&self, wrt: Option<Vec<usize>>) -> PyResult<PyFunction> {
        let wrt = parameter_ids(&self.inner, wrt)?;
        let inner = differentiate(&self.inner, &wrt).map_err(value_error)?;
        Ok(PyFunction { inner })
    }

    #[pyo3(signature = (inputs, optimize = true, conv_layout = "identity"))]
    fn run(
        &self,
        inputs: Vec<PyTensor>,
        optimize: bool,
        conv_layout: &str,
    ) -> PyResult<Vec<PyTensor>> {
        let options = CompileOptions {
            optimize,
            conv_layout: conv_layout.parse().map_err(value_error)?,
            parameter_layouts: inputs.iter().map(|t| t.inner.layout().clone()).collect(),
        };
        let exe = compile(&self.inner, &options).map_err(value_error)?;
        let inputs: Vec<TensorValue> = inputs.into_iter().map(|t| t.inner).collect();
        let out = exe.call(&inputs).map_err(runtime_error)?;
        Ok(out.into_iter().map(|inner| PyTensor { inner }).collect())
    }

    /// `(tensor, start, end, offset)` rows of the compiled memory plan, with
    /// `end` and `offset` set to None for end-of-program and off-arena
    /// tensors, plus the arena size in bytes.
    #[allow(clippy::type_complexity)]
    #[pyo3(signature = (optimize = true))]
    fn plan(
        &self,
        optimize: bool,
    ) -> PyResult<(Vec<(u32, usize, Option<usize>, Option<usize>)>, usize)> {
        let options = CompileOptions {
            optimize,
            ..CompileOptions::default()
        };
        let exe = compile(&self.inner, &options).map_err(value_error)?;
        let plan = exe.plan();
        let rows = plan
            .intervals
            .iter()
            .map(|iv| {
                let end = (iv.end != LiveInterval::END_OF_PROGRAM).then_some(iv.end);
                (iv.tensor.node.0, iv.start, end, plan.offset_of(iv.tensor))
            })
            .collect();
        Ok((rows, plan.arena_size))
    }

    /// Groups as `(tag, node ids)` in execution order. `supported` lists op
    /// names the main backend handles (default: all).
    #[pyo3(signature = (supported = None))]
    fn partition(&self, supported: Option<Vec<String>>) -> PyResult<Vec<(String, Vec<u32>)>> {
        let allowed: Option<Vec<OpTag>> = supported
            .map(|names| {
                names
                    .iter()
                    .map(|n| n.parse::<OpTag>().map_err(value_error))
                    .collect::<PyResult<_>>()
            })
            .transpose()?;
        let p = partition(&self.inner, |n: &Node| {
            allowed.as_ref().is_none_or(|a| a.contains(&n.op.tag()))
        });
        Ok(p.groups
            .iter()
            .map(|g| {
                (
                    g.tag.name().to_string(),
                    g.nodes.iter().map(|n| n.0).collect(),
                )
            })
            .collect())
    }

    /// Largest relative error between the gradient function and central
    /// differences at `point`. The function must have one scalar result.
    #[pyo3(signature = (point, h = 1e-6))]
    fn check_gradient(&self, point: Vec<PyTensor>, h: f64) -> PyResult<f64> {
        let point: Vec<TensorValue> = point.into_iter().map(|t| t.inner).collect();
        let wrt = self.inner.parameters().to_vec();
        let report = check_gradient(&self.inner, &wrt, &point, h).map_err(value_error)?;
        Ok(report.max_relative_error())
    }

    fn __repr__(&self) -> String {
        format!(
            "Function({:?}, {} nodes)",
            self.inner.name(),
            self.inner.node_count()
        )
    }
}

#[pymodule]
fn graphforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyFunction>()?;
    Ok(())
}
