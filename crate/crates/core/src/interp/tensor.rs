use std::fmt;

use crate::ir::{Buffer, ElementType, Shape, TensorDescriptor};
use crate::layout::Layout;

use super::ExecError;

/// A concrete tensor. `buffer` holds the elements in physical order under
/// `layout`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorValue {
    descriptor: TensorDescriptor,
    layout: Layout,
    buffer: Buffer,
}

/// A zero-filled tensor.
pub fn create_tensor(
    element_type: ElementType,
    shape: impl Into<Shape>,
    layout: Layout,
) -> Result<TensorValue, ExecError> {
    let descriptor = TensorDescriptor::new(element_type, shape);
    let buffer = Buffer::zeros(element_type, descriptor.element_count());
    TensorValue::new(descriptor, layout, buffer)
}

impl TensorValue {
    /// Wraps a buffer already in physical order.
    pub fn new(
        descriptor: TensorDescriptor,
        layout: Layout,
        buffer: Buffer,
    ) -> Result<TensorValue, ExecError> {
        if layout.rank() != descriptor.shape.rank() {
            return Err(ExecError::RankMismatch {
                shape: descriptor.shape,
                layout: layout.rank(),
            });
        }
        if buffer.element_type() != descriptor.element_type
            || buffer.len() != descriptor.element_count()
        {
            return Err(ExecError::BufferMismatch {
                element_type: descriptor.element_type,
                expected: descriptor.element_count(),
                found: buffer.len(),
            });
        }
        Ok(TensorValue {
            descriptor,
            layout,
            buffer,
        })
    }

    pub fn from_row_major(descriptor: TensorDescriptor, buffer: Buffer) -> Result<Self, ExecError> {
        let layout = Layout::identity(descriptor.shape.rank());
        TensorValue::new(descriptor, layout, buffer)
    }

    /// Lays out row-major `values` under `layout`.
    pub fn from_logical(
        descriptor: TensorDescriptor,
        layout: Layout,
        values: Buffer,
    ) -> Result<Self, ExecError> {
        let row_major = TensorValue::from_row_major(descriptor, values)?;
        row_major.with_layout(layout)
    }

    pub fn f64(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self, ExecError> {
        TensorValue::from_row_major(
            TensorDescriptor::new(ElementType::F64, shape),
            Buffer::F64(data),
        )
    }

    pub fn f32(shape: impl Into<Shape>, data: Vec<f32>) -> Result<Self, ExecError> {
        TensorValue::from_row_major(
            TensorDescriptor::new(ElementType::F32, shape),
            Buffer::F32(data),
        )
    }

    pub fn descriptor(&self) -> &TensorDescriptor {
        &self.descriptor
    }

    pub fn shape(&self) -> &Shape {
        &self.descriptor.shape
    }

    pub fn element_type(&self) -> ElementType {
        self.descriptor.element_type
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    pub fn into_buffer(self) -> Buffer {
        self.buffer
    }

    /// Buffer position of a logical multi-index.
    pub fn position(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.descriptor.shape.rank(), "index rank");
        let strides = self.layout.strides(&self.descriptor.shape);
        index.iter().zip(strides).map(|(i, s)| i * s).sum()
    }

    /// Element at a logical multi-index, widened to f64.
    pub fn get(&self, index: &[usize]) -> f64 {
        self.buffer.get_f64(self.position(index))
    }

    /// Elements in logical row-major order.
    pub fn to_row_major(&self) -> Buffer {
        if self.layout.is_identity() {
            self.buffer.clone()
        } else {
            self.buffer
                .gather(&self.layout.positions(&self.descriptor.shape))
        }
    }

    /// The same logical tensor stored under another layout.
    pub fn with_layout(&self, layout: Layout) -> Result<TensorValue, ExecError> {
        if layout == self.layout {
            return Ok(self.clone());
        }
        let values = self.to_row_major();
        let buffer = if layout.is_identity() {
            values
        } else {
            values.scatter(&layout.positions(&self.descriptor.shape))
        };
        TensorValue::new(self.descriptor.clone(), layout, buffer)
    }

    /// Same descriptor and bitwise-equal logical values.
    pub fn same_values(&self, other: &TensorValue) -> bool {
        self.descriptor == other.descriptor && self.to_row_major().bit_eq(&other.to_row_major())
    }
}

impl fmt::Display for TensorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor)?;
        if !self.layout.is_identity() {
            write!(f, " order {}", self.layout)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tensors() {
        let t = create_tensor(ElementType::F64, [2, 2], Layout::identity(2)).unwrap();
        assert_eq!(t.buffer(), &Buffer::F64(vec![0.0; 4]));
        let s = create_tensor(ElementType::F64, Shape::scalar(), Layout::identity(0)).unwrap();
        assert_eq!(s.buffer(), &Buffer::F64(vec![0.0]));
        let e = create_tensor(ElementType::F32, [0, 3], Layout::identity(2)).unwrap();
        assert!(e.buffer().is_empty());
    }

    #[test]
    fn rank_mismatch() {
        let err = create_tensor(ElementType::F64, [2, 2], Layout::identity(3)).unwrap_err();
        assert!(matches!(err, ExecError::RankMismatch { layout: 3, .. }));
    }

    #[test]
    fn transposed_storage() {
        let t = TensorValue::f64([2, 3], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let p = t.with_layout(Layout::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(p.buffer(), &Buffer::F64(vec![0., 3., 1., 4., 2., 5.]));
        assert_eq!(p.get(&[1, 2]), 5.0);
        assert_eq!(p.position(&[1, 0]), 1);
        assert!(p.same_values(&t));
        assert_eq!(p.with_layout(Layout::identity(2)).unwrap(), t);
    }
}
