use std::hash::{Hash, Hasher};

use super::types::ElementType;

/// Flat, typed element storage.
///
/// Equality and hashing compare floats by bit pattern, except that every NaN
/// compares equal to every other NaN. Two constants are interchangeable iff
/// their buffers are equal under this relation.
#[derive(Debug, Clone)]
pub enum Buffer {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
    Bool(Vec<bool>),
}

impl Buffer {
    pub fn zeros(element_type: ElementType, len: usize) -> Buffer {
        match element_type {
            ElementType::F32 => Buffer::F32(vec![0.0; len]),
            ElementType::F64 => Buffer::F64(vec![0.0; len]),
            ElementType::I64 => Buffer::I64(vec![0; len]),
            ElementType::Bool => Buffer::Bool(vec![false; len]),
        }
    }

    /// A buffer of `len` copies of `value`, converted to the element type.
    pub fn filled(element_type: ElementType, len: usize, value: f64) -> Buffer {
        match element_type {
            ElementType::F32 => Buffer::F32(vec![value as f32; len]),
            ElementType::F64 => Buffer::F64(vec![value; len]),
            ElementType::I64 => Buffer::I64(vec![value as i64; len]),
            ElementType::Bool => Buffer::Bool(vec![value != 0.0; len]),
        }
    }

    pub fn element_type(&self) -> ElementType {
        match self {
            Buffer::F32(_) => ElementType::F32,
            Buffer::F64(_) => ElementType::F64,
            Buffer::I64(_) => ElementType::I64,
            Buffer::Bool(_) => ElementType::Bool,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::F32(v) => v.len(),
            Buffer::F64(v) => v.len(),
            Buffer::I64(v) => v.len(),
            Buffer::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `i` widened to f64 (bool maps to 0/1).
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            Buffer::F32(v) => v[i] as f64,
            Buffer::F64(v) => v[i],
            Buffer::I64(v) => v[i] as f64,
            Buffer::Bool(v) => {
                if v[i] {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_f64(i)).collect()
    }

    /// Gathers elements by index: `out[i] = self[indices[i]]`.
    pub fn gather(&self, indices: &[usize]) -> Buffer {
        match self {
            Buffer::F32(v) => Buffer::F32(indices.iter().map(|&i| v[i]).collect()),
            Buffer::F64(v) => Buffer::F64(indices.iter().map(|&i| v[i]).collect()),
            Buffer::I64(v) => Buffer::I64(indices.iter().map(|&i| v[i]).collect()),
            Buffer::Bool(v) => Buffer::Bool(indices.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Scatters elements by index: `out[indices[i]] = self[i]`.
    pub fn scatter(&self, indices: &[usize]) -> Buffer {
        fn go<T: Copy + Default>(v: &[T], indices: &[usize]) -> Vec<T> {
            let mut out = vec![T::default(); v.len()];
            for (i, &dst) in indices.iter().enumerate() {
                out[dst] = v[i];
            }
            out
        }
        match self {
            Buffer::F32(v) => Buffer::F32(go(v, indices)),
            Buffer::F64(v) => Buffer::F64(go(v, indices)),
            Buffer::I64(v) => Buffer::I64(go(v, indices)),
            Buffer::Bool(v) => Buffer::Bool(go(v, indices)),
        }
    }

    /// Little-endian encoding, `element_type().byte_size()` bytes per element.
    pub fn write_bytes(&self, out: &mut [u8]) {
        match self {
            Buffer::F32(v) => {
                for (chunk, x) in out.chunks_exact_mut(4).zip(v) {
                    chunk.copy_from_slice(&x.to_le_bytes());
                }
            }
            Buffer::F64(v) => {
                for (chunk, x) in out.chunks_exact_mut(8).zip(v) {
                    chunk.copy_from_slice(&x.to_le_bytes());
                }
            }
            Buffer::I64(v) => {
                for (chunk, x) in out.chunks_exact_mut(8).zip(v) {
                    chunk.copy_from_slice(&x.to_le_bytes());
                }
            }
            Buffer::Bool(v) => {
                for (b, x) in out.iter_mut().zip(v) {
                    *b = *x as u8;
                }
            }
        }
    }

    pub fn read_bytes(element_type: ElementType, bytes: &[u8]) -> Buffer {
        match element_type {
            ElementType::F32 => Buffer::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            ElementType::F64 => Buffer::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            ElementType::I64 => Buffer::I64(
                bytes
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            ElementType::Bool => Buffer::Bool(bytes.iter().map(|&b| b != 0).collect()),
        }
    }

    /// Bitwise equality including NaN payloads and signed zeros.
    pub fn bit_eq(&self, other: &Buffer) -> bool {
        match (self, other) {
            (Buffer::F32(a), Buffer::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::F64(a), Buffer::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::I64(a), Buffer::I64(b)) => a == b,
            (Buffer::Bool(a), Buffer::Bool(b)) => a == b,
            _ => false,
        }
    }

    /// True if every element equals `value` numerically (so -0.0 matches 0).
    pub fn all_equal(&self, value: f64) -> bool {
        match self {
            Buffer::F32(v) => v.iter().all(|&x| x as f64 == value),
            Buffer::F64(v) => v.iter().all(|&x| x == value),
            Buffer::I64(v) => v.iter().all(|&x| x as f64 == value),
            Buffer::Bool(v) => v.iter().all(|&x| (x as u8 as f64) == value),
        }
    }
}

fn f32_key(x: f32) -> u32 {
    if x.is_nan() {
        f32::NAN.to_bits()
    } else {
        x.to_bits()
    }
}

fn f64_key(x: f64) -> u64 {
    if x.is_nan() {
        f64::NAN.to_bits()
    } else {
        x.to_bits()
    }
}

impl PartialEq for Buffer {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Buffer::F32(a), Buffer::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| f32_key(x) == f32_key(y))
            }
            (Buffer::F64(a), Buffer::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| f64_key(x) == f64_key(y))
            }
            (Buffer::I64(a), Buffer::I64(b)) => a == b,
            (Buffer::Bool(a), Buffer::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Buffer {}

impl Hash for Buffer {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.element_type().hash(state);
        match self {
            Buffer::F32(v) => v.iter().for_each(|&x| f32_key(x).hash(state)),
            Buffer::F64(v) => v.iter().for_each(|&x| f64_key(x).hash(state)),
            Buffer::I64(v) => v.hash(state),
            Buffer::Bool(v) => v.hash(state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_is_bitwise_with_nan_collapsed() {
        let a = Buffer::F64(vec![0.0, f64::NAN]);
        let b = Buffer::F64(vec![-0.0, f64::NAN]);
        assert_ne!(a, b);
        let weird_nan = f64::from_bits(f64::NAN.to_bits() | 1);
        assert_eq!(Buffer::F64(vec![f64::NAN]), Buffer::F64(vec![weird_nan]));
        assert!(!Buffer::F64(vec![f64::NAN]).bit_eq(&Buffer::F64(vec![weird_nan])));
        assert_ne!(Buffer::F32(vec![]), Buffer::F64(vec![]));
    }

    #[test]
    fn byte_round_trip() {
        let b = Buffer::F32(vec![1.5, -0.0, f32::INFINITY]);
        let mut bytes = vec![0u8; 12];
        b.write_bytes(&mut bytes);
        assert!(Buffer::read_bytes(ElementType::F32, &bytes).bit_eq(&b));
        let b = Buffer::Bool(vec![true, false]);
        let mut bytes = vec![0u8; 2];
        b.write_bytes(&mut bytes);
        assert_eq!(Buffer::read_bytes(ElementType::Bool, &bytes), b);
    }

    #[test]
    fn gather_then_scatter_is_identity() {
        let b = Buffer::I64(vec![10, 20, 30]);
        let idx = [2, 0, 1];
        assert_eq!(b.gather(&idx).scatter(&idx), b);
    }
}
