//! Shuffled block-wise (Shfl-BW) sparsity toolkit.
//!
//! - [`formats`]: dense, mask, vector-wise, shuffled block-wise and
//!   block-wise matrices, pattern validators and the SMX1 container.
//! - [`pruning`]: magnitude pruning for every pattern, including the
//!   K-Means row-grouping search for shuffled block-wise masks.
//! - [`spmm`]: tiled SpMM / implicit-GEMM convolution executor and the
//!   metadata-prefetch pipeline simulator.
//! - [`analysis`]: flexibility and operation-intensity models.
//! - [`cli`]: the `shflbw` command-line front end.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod formats;
pub mod pruning;
pub mod spmm;

pub use error::{Error, Result};
