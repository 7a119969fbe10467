//! Dense matrices, CSR adjacency and a reverse-mode differentiation tape.

mod matrix;
mod segments;
mod sparse;
mod tape;

pub use matrix::Matrix;
pub use segments::Segments;
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: index {index} out of bounds for size {bound}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: duplicate index {index}")]
    DuplicateIndex { op: &'static str, index: usize },
    #[error("log of non-positive value {value}")]
    NonPositiveLog { value: f64 },
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("segment {segment} is empty")]
    EmptySegment { segment: usize },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("data of length {len} cannot fill a {rows}x{cols} matrix")]
    BadData { rows: usize, cols: usize, len: usize },
}
