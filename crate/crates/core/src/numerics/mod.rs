//! Tensors, the gradient tape, Fourier kernels, the symmetric eigensolver,
//! Adam, and the checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod dft;
pub mod eigen;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use dft::{dft_time_axis, idft_time_axis, DftPlan};
pub use eigen::{symmetric_eigendecomposition, EigenConfig, SymmetricEigen};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ComplexTensor, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: unsupported rank for shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("shape {shape:?} needs a different element count than {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss is not recorded on this tape")]
    NotOnTape,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix is not square: {0:?}")]
    NotSquare(Vec<usize>),
    #[error("matrix is not symmetric at ({row}, {col}): |difference| = {diff:e}")]
    Asymmetric { row: usize, col: usize, diff: f64 },
    #[error("matrix dimension {n} exceeds the eigensolver cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NumericsError {
    pub fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Self::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

/// A named collection of learnable tensors.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));
}
