//! Dense row-major tensor values.
//!
//! A [`Tensor`] is an immutable shaped array of scalars. Graph nodes, model
//! parameters and extracted results all use this one representation. Data is
//! reference-counted so cloning a tensor never copies the payload.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::Result;

/// Immutable dense tensor: a shape plus row-major data.
#[derive(Debug, Clone)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(CoreError::InvalidArg {
                op: "tensor",
                msg: alloc::format!(
                    "shape {:?} wants {} elements, data has {}",
                    shape,
                    numel(&shape),
                    data.len()
                ),
            });
        }
        Ok(Tensor { shape, data: Arc::new(data) })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor { shape, data: Arc::new(alloc::vec![T::zero(); n]) }
    }

    /// Tensor filled with one value.
    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let n = numel(&shape);
        Tensor { shape, data: Arc::new(alloc::vec![value; n]) }
    }

    /// 1-D tensor from a slice.
    pub fn from_slice(data: &[T]) -> Self {
        Tensor { shape: alloc::vec![data.len()], data: Arc::new(data.to_vec()) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Shared handle to the payload.
    pub fn arc(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    pub(crate) fn from_arc(shape: Vec<usize>, data: Arc<Vec<T>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor { shape, data }
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Number of elements implied by a shape. The empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = alloc::vec![0usize; shape.len()];
    let mut acc = 1usize;
    for (i, &d) in shape.iter().enumerate().rev() {
        s[i] = acc;
        acc *= d;
    }
    s
}
