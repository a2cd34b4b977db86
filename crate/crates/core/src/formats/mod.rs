//! Sparse matrix representations, pattern validators and the SMX1 container.

mod container;
mod dense;
mod sparse;
mod stitch;
mod validate;

pub use container::{from_bytes, read_container, to_bytes, write_container, Kind, Matrix};
pub use dense::{DenseMatrix, SparsityMask};
pub use sparse::{
    compress_blockwise, compress_shflbw, compress_vectorwise, decompress, BlockWiseMatrix,
    ShflBWMatrix, ToDense, VectorGroup, VectorWiseMatrix,
};
pub use stitch::{stitch_to_blockwise, StitchedMatrix, StitchedTile};
pub use validate::{
    validate_pattern, Counterexample, Pattern, PatternKind, ValidationReport,
};

pub(crate) use sparse::check_group_size;
pub(crate) use validate::check_balanced_params;
