//! Flat f32 tensors and the reverse-mode differentiation tape.
//!
//! Sequence data uses the layout `[batch, channels, time]`, row-major, so a
//! single channel of a single batch element is a contiguous run of `time`
//! values. Scalars have an empty shape.

mod graph;
mod kernels;
mod optim;

#[cfg(test)]
mod tests;

pub use graph::{Gradients, Graph, NodeId, PadMode};
pub use optim::{Adam, AdamConfig, ParamId, ParamStore, Polyak};

use crate::error::{Error, Result};

/// N-dimensional array of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                msg: format!("shape {:?} wants {} values, got {}", shape, n, data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a rank-0 tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Expects `[batch, channels, time]` and returns the three extents.
    pub fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[b, c, t] => Ok((b, c, t)),
            other => Err(Error::Shape {
                op,
                msg: format!("expected [batch, channels, time], got {:?}", other),
            }),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
