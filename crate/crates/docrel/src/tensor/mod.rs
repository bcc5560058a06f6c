//! Dense f64 tensors plus a recording tape for reverse-mode differentiation.
//!
//! Every differentiable operation in this crate is built from the
//! primitives here, from the BiLSTM encoder through the graph attention
//! layers to the bilinear classifier and its losses, so any scalar loss
//! can be checked against central finite differences with [`grad_check`].

mod check;
mod init;
mod params;
mod tape;

pub use check::{grad_check, randomize_uniform, GradCheckReport};
pub use init::Initializer;
pub use params::{Bindings, ParamSet};
pub use tape::{NodeId, Tape};

use thiserror::Error;

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} values, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch: cannot multiply {lhs:?} by {rhs:?}")]
    MatMul { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("expected {expected}, got shape {got:?}")]
    Rank {
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} requires at least one input")]
    Empty { op: &'static str },
    #[error("softmax mask keeps no entries")]
    AllMasked,
    #[error("slice {start}..{end} out of range for length {len}")]
    Slice {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("backward seed must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("row {row} has non-positive sum {sum} in renorm_rows")]
    NonPositiveRow { row: usize, sum: f64 },
}

/// Dense row-major tensor of 64-bit floats.
///
/// Rank 0 is a scalar (a single value), rank 1 a vector, rank 2 a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a scalar (or any one-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.len(),
            1,
            "item() called on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    /// (rows, cols) of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(
            self.rank(),
            2,
            "dims2() on tensor of shape {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1])
    }

    pub fn at2(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.dims2();
        self.data[row * cols + col]
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
