//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records primitives in evaluation order; [`Tape::backward`]
//! walks it once in reverse. Parameters live outside the tape as [`Tensor`]s
//! and are bound as leaves for each forward pass.

mod matrix;
mod tape;
mod tensor;

pub use matrix::Matrix;
pub use tape::{cosine, Gradients, Tape, Var};
pub use tensor::{sgd_step, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{rows}x{cols} matrix cannot hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("parameter {index} has no gradient")]
    MissingGradient { index: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

#[cfg(test)]
mod tests;
