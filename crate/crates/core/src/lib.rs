//! Jointly smooth functions across several aligned views of the same samples.
//!
//! Each view is turned into a kernel matrix whose leading eigenvectors span
//! the functions that are smooth on that view. Functions that are smooth on
//! every view at once are read off the SVD of the concatenated eigenbases,
//! scored, thresholded, and extended to unseen samples with Nyström.

pub mod bench;
pub mod data;
pub mod embed;
pub mod error;
pub mod extension;
pub mod io;
pub mod jsf;
pub mod kdtree;
pub mod kernels;
mod lanczos;
pub mod metrics;
pub mod preprocess;
pub mod sparse;
pub mod spectral;
pub mod synthetic;

pub use data::Dataset;
pub use error::{Error, ErrorClass, Result};
pub use kernels::{KernelMatrix, KernelParams, KernelSpec};
pub use spectral::{EigenMethod, EigenOptions, SpectralBasis};
