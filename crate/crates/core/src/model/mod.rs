//! Shared domain types and the Gaussian-kernel algebra.

mod dataset;
mod draws;
mod kernel;
mod prior;

pub use dataset::Dataset;
pub use draws::{Draw, KernelInputSpec, PosteriorDraws, TrainingData};
pub use kernel::{cross_kernel, gaussian_kernel, kernel_matrix, KernelSchema, KernelState};
pub use prior::PriorConfig;
