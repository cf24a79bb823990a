//! Representational similarity indexes for comparing neural network layers.
//!
//! Modules:
//! - [`reprdata`]: activation matrices, centering, orthonormal bases, spectra, file I/O
//! - [`kernels`]: linear and RBF Gram matrices and Gram centering
//! - [`cka`]: HSIC and centered kernel alignment
//! - [`ccafam`]: CCA and relatives (SVCCA, PWCCA, regression, canonical ridge, Procrustes)
//! - [`analysis`]: layer-by-layer similarity grids, correspondence accuracy, spectra
//! - [`synthgen`]: seeded generators of related representations
//! - [`index`]: named index + parameters, as used by grids and the CLI

pub mod analysis;
pub mod ccafam;
pub mod cka;
pub mod error;
pub mod index;
pub mod kernels;
pub mod reprdata;
pub mod synthgen;

mod linalg;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use cka::SimilarityScore;
pub use index::SimilarityIndex;
pub use reprdata::{center_columns, ActivationMatrix};
