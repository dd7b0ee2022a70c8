//! Tensor arithmetic and reverse-mode automatic differentiation.

mod graph;
mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use tensor::{sigmoid, Tensor};

use thiserror::Error;

/// Errors raised by tensor and graph operations.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape {shape:?} does not hold {len} elements")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a matrix, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("column slice [{start}, {start}+{len}) out of range for {cols} columns")]
    SliceOutOfRange {
        start: usize,
        len: usize,
        cols: usize,
    },
    #[error("row {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
}
