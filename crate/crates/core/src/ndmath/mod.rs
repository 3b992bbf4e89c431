//! Dense tensors, reverse-mode autodiff, MLPs, Adam and spectral norms.

mod adam;
pub mod checkpoint;
mod nn;
pub mod spectral;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use nn::{Activation, Linear, Mlp, MlpBinding, MlpSpec, Module, Param, SpectralState};
pub use spectral::{apply_spectral_constraint, power_iteration, spectral_norm, SpectralEstimate};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::logsumexp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NdError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape {shape:?} does not hold {len} values")]
    BadData { shape: Vec<usize>, len: usize },

    #[error("rank {} tensors are not supported (shape {shape:?})", shape.len())]
    Rank { shape: Vec<usize> },

    #[error("loss must be scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
