//! Tile-level reference executor for shuffled block-wise SpMM.
//!
//! For every group of `V` compressed rows and every `T_N`-wide slice of the
//! output, the executor walks the group's stored columns in chunks of `T_K`:
//! the rows of `B` named by the chunk are gathered into a staging tile
//! (stitching), multiplied against the group's `V x T_K` value tile, and
//! accumulated. The finished `V x T_N` accumulator is then written to the
//! original output rows recorded in the row-index array.
//!
//! Every accumulator entry receives its products one at a time in ascending
//! column order, so results are bit-identical across tile shapes and thread
//! counts, and equal to a naive `k`-ascending dense product.

mod conv;
mod pipeline;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{DenseMatrix, ShflBWMatrix};

pub use conv::{conv2d, conv2d_direct, ConvGeometry, Tensor4};
pub use pipeline::{
    pipeline_simulate, Counters, Event, Hazard, HazardKind, IterationOrder, IterationRecord,
    ScheduleTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub tm: usize,
    pub tn: usize,
    pub tk: usize,
    /// Accumulator budget in elements; bounds `tm * tn`.
    pub regfile_size: usize,
    /// Number of staging buffers in the software pipeline.
    pub pipe_stage: usize,
    /// Steps of metadata fetched per bulk load.
    pub meta_prefetch_stage: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tm: 64,
            tn: 64,
            tk: 16,
            regfile_size: 4096,
            pipe_stage: 2,
            meta_prefetch_stage: 4,
        }
    }
}

impl TileConfig {
    pub fn with_tiles(tm: usize, tn: usize, tk: usize) -> Self {
        Self {
            tm,
            tn,
            tk,
            regfile_size: (tm * tn).max(1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tm == 0 || self.tn == 0 || self.tk == 0 {
            return Err(Error::params("tile sizes must be at least 1"));
        }
        if self.tm * self.tn > self.regfile_size {
            return Err(Error::params(format!(
                "T_M*T_N = {} exceeds the register file budget {}",
                self.tm * self.tn,
                self.regfile_size
            )));
        }
        if self.pipe_stage < 2 {
            return Err(Error::params("pipe stage must be at least 2"));
        }
        if self.meta_prefetch_stage == 0 {
            return Err(Error::params("metadata prefetch stage must be at least 1"));
        }
        Ok(())
    }
}

/// Row-addressable right-hand operand. Implemented by dense matrices and by
/// the on-the-fly unfolded view of a convolution input.
pub(crate) trait RowSource: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// Copies `B[k][cols]` into `out`.
    fn load_row(&self, k: usize, cols: Range<usize>, out: &mut [f32]);
}

impl RowSource for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }

    fn load_row(&self, k: usize, cols: Range<usize>, out: &mut [f32]) {
        out.copy_from_slice(&self.row(k)[cols]);
    }
}

fn stitch_from<S: RowSource + ?Sized>(
    group_cols: &[usize],
    chunk: Range<usize>,
    b: &S,
    slice: Range<usize>,
) -> DenseMatrix {
    let width = slice.len();
    let mut staging = DenseMatrix::zeros(chunk.len(), width);
    for (t, i) in chunk.enumerate() {
        if let Some(&k) = group_cols.get(i) {
            b.load_row(k, slice.clone(), staging.row_mut(t));
        }
    }
    staging
}

/// Gathers the rows of `b` named by `group_cols[chunk]`, restricted to the
/// column range `slice`, into a contiguous `chunk.len() x slice.len()` tile.
/// Positions past the end of `group_cols` are left zero.
pub fn stitch_tile(
    group_cols: &[usize],
    chunk: Range<usize>,
    b: &DenseMatrix,
    slice: Range<usize>,
) -> Result<DenseMatrix> {
    if slice.end > b.cols() || slice.start > slice.end {
        return Err(Error::shape(format!(
            "column slice {slice:?} outside {} columns",
            b.cols()
        )));
    }
    if let Some(&k) = group_cols[chunk.start.min(group_cols.len())..chunk.end.min(group_cols.len())]
        .iter()
        .find(|&&k| k >= b.rows())
    {
        return Err(Error::shape(format!("column index {k} outside {} rows", b.rows())));
    }
    Ok(stitch_from(group_cols, chunk, b, slice))
}

/// `acc += a_tile * b_tile`, adding products to each accumulator entry in
/// ascending inner index.
pub fn tile_mma(acc: &mut DenseMatrix, a_tile: &DenseMatrix, b_tile: &DenseMatrix) -> Result<()> {
    if a_tile.cols() != b_tile.rows()
        || acc.rows() != a_tile.rows()
        || acc.cols() != b_tile.cols()
    {
        return Err(Error::shape(format!(
            "acc {}x{} += {}x{} * {}x{}",
            acc.rows(),
            acc.cols(),
            a_tile.rows(),
            a_tile.cols(),
            b_tile.rows(),
            b_tile.cols()
        )));
    }
    mma_unchecked(acc, a_tile, b_tile);
    Ok(())
}

fn mma_unchecked(acc: &mut DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) {
    for t in 0..a.cols() {
        let b_row = b.row(t);
        for r in 0..a.rows() {
            let x = a.get(r, t);
            for (c, &y) in acc.row_mut(r).iter_mut().zip(b_row) {
                *c += x * y;
            }
        }
    }
}

/// Value tile of group `g` for stored columns `chunk`, zero-padded to `tk`.
fn value_tile(a: &ShflBWMatrix, g: usize, chunk: Range<usize>, tk: usize) -> DenseMatrix {
    let v = a.vector_size();
    let group = &a.core().groups()[g];
    let mut tile = DenseMatrix::zeros(v, tk);
    for (t, i) in chunk.enumerate() {
        for (r, &x) in group.vector(v, i).iter().enumerate() {
            tile.set(r, t, x);
        }
    }
    tile
}

pub(crate) fn execute<S: RowSource + ?Sized>(
    a: &ShflBWMatrix,
    b: &S,
    cfg: &TileConfig,
) -> Result<DenseMatrix> {
    cfg.validate()?;
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "sparse operand has {} columns, dense operand has {} rows",
            a.cols(),
            b.rows()
        )));
    }
    let (v, n) = (a.vector_size(), b.cols());
    let groups = a.core().groups();
    let work: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..n).step_by(cfg.tn).map(move |j| (g, j)))
        .collect();

    let tiles: Vec<(usize, usize, DenseMatrix)> = work
        .into_par_iter()
        .map(|(g, j0)| {
            let slice = j0..(j0 + cfg.tn).min(n);
            let cols = &groups[g].columns;
            let mut acc = DenseMatrix::zeros(v, slice.len());
            for k0 in (0..cols.len()).step_by(cfg.tk) {
                let chunk = k0..k0 + cfg.tk;
                let staging = stitch_from(cols, chunk.clone(), b, slice.clone());
                let values = value_tile(a, g, k0..(k0 + cfg.tk).min(cols.len()), cfg.tk);
                mma_unchecked(&mut acc, &values, &staging);
            }
            (g, j0, acc)
        })
        .collect();

    // reordered write-back
    let mut out = DenseMatrix::zeros(a.rows(), n);
    for (g, j0, acc) in tiles {
        for (r, &dst) in a.group_rows(g).iter().enumerate() {
            out.row_mut(dst)[j0..j0 + acc.cols()].copy_from_slice(acc.row(r));
        }
    }
    Ok(out)
}

/// `C = decompress(A) * B` through the tiled stitch / MMA / write-back path.
pub fn spmm_execute(a: &ShflBWMatrix, b: &DenseMatrix, cfg: &TileConfig) -> Result<DenseMatrix> {
    execute(a, b, cfg)
}

/// Naive triple-loop product with `k` ascending.
pub fn spmm_dense_oracle(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "{}x{} * {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0f32;
            for k in 0..a.cols() {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// `||x - reference||_F / ||reference||_F`, or the absolute norm of the
/// difference when the reference is zero.
pub fn relative_frobenius_error(x: &[f32], reference: &[f32]) -> f64 {
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(reference) {
        diff += (a as f64 - b as f64).powi(2);
        norm += (b as f64).powi(2);
    }
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{compress_shflbw, SparsityMask, ToDense, VectorGroup, VectorWiseMatrix};

    fn b4() -> DenseMatrix {
        DenseMatrix::new(4, 3, (0..12).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn identity_times_b() {
        let eye = compress_shflbw(&DenseMatrix::identity(2), &SparsityMask::ones(2, 2), 2).unwrap();
        let b = DenseMatrix::from_rows(&[[5.0f32, 6.0], [7.0, 8.0]]).unwrap();
        let c = spmm_execute(&eye, &b, &TileConfig::default()).unwrap();
        assert!(c.bit_eq(&b));
    }

    #[test]
    fn swapped_row_indices_swap_output_rows() {
        let core = VectorWiseMatrix::new(
            2,
            2,
            2,
            vec![VectorGroup {
                columns: vec![0, 1],
                values: vec![1.0, 0.0, 0.0, 1.0],
            }],
        )
        .unwrap();
        let a = ShflBWMatrix::new(core, vec![1, 0]).unwrap();
        let b = DenseMatrix::from_rows(&[[5.0f32, 6.0], [7.0, 8.0]]).unwrap();
        let c = spmm_execute(&a, &b, &TileConfig::with_tiles(2, 1, 1)).unwrap();
        assert_eq!(c, DenseMatrix::from_rows(&[[7.0f32, 8.0], [5.0, 6.0]]).unwrap());
    }

    #[test]
    fn mismatched_inner_dimension() {
        let eye = compress_shflbw(&DenseMatrix::identity(2), &SparsityMask::ones(2, 2), 2).unwrap();
        assert!(matches!(
            spmm_execute(&eye, &b4(), &TileConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(spmm_dense_oracle(&DenseMatrix::identity(2), &b4()).is_err());
    }

    #[test]
    fn stitch_gathers_named_rows() {
        let b = b4();
        let s = stitch_tile(&[1, 3], 0..2, &b, 0..3).unwrap();
        assert_eq!(s.row(0), b.row(1));
        assert_eq!(s.row(1), b.row(3));
        let contiguous = stitch_tile(&[0, 1], 0..2, &b, 1..3).unwrap();
        assert_eq!(contiguous.row(0), &b.row(0)[1..3]);
        assert_eq!(contiguous.row(1), &b.row(1)[1..3]);
    }

    #[test]
    fn stitch_pads_past_end() {
        let b = b4();
        let s = stitch_tile(&[2], 0..3, &b, 0..3).unwrap();
        assert_eq!(s.row(0), b.row(2));
        assert_eq!(s.row(1), &[0.0; 3]);
        assert_eq!(s.row(2), &[0.0; 3]);
        assert!(stitch_tile(&[4], 0..1, &b, 0..3).is_err());
        assert!(stitch_tile(&[0], 0..1, &b, 0..4).is_err());
    }

    #[test]
    fn tile_mma_cases() {
        let a = DenseMatrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        let mut acc = DenseMatrix::zeros(2, 2);
        tile_mma(&mut acc, &DenseMatrix::identity(2), &a).unwrap();
        assert_eq!(acc, a);

        let mut acc = a.clone();
        tile_mma(&mut acc, &a, &DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(acc, a);

        let mut acc = DenseMatrix::zeros(2, 2);
        tile_mma(&mut acc, &a, &DenseMatrix::identity(2)).unwrap();
        assert_eq!(acc, a);

        assert!(tile_mma(&mut acc, &a, &DenseMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn oracle_cases() {
        let b = b4();
        assert_eq!(spmm_dense_oracle(&DenseMatrix::identity(4), &b).unwrap(), b);
        assert_eq!(
            spmm_dense_oracle(&DenseMatrix::zeros(2, 4), &b).unwrap(),
            DenseMatrix::zeros(2, 3)
        );
    }

    #[test]
    fn matches_oracle_on_shuffled_example() {
        let d = DenseMatrix::new(4, 4, (0..16).map(|i| (i as f32) * 0.37 - 2.0).collect()).unwrap();
        let m = SparsityMask::from_strs(&["1100", "0011", "1100", "0011"]).unwrap();
        let a = compress_shflbw(&d, &m, 2).unwrap();
        let b = b4();
        let want = spmm_dense_oracle(&a.to_dense(), &b).unwrap();
        for cfg in [
            TileConfig::with_tiles(1, 1, 1),
            TileConfig::with_tiles(2, 2, 3),
            TileConfig::default(),
        ] {
            assert!(spmm_execute(&a, &b, &cfg).unwrap().bit_eq(&want));
        }
    }

    #[test]
    fn tile_config_validation() {
        assert!(TileConfig::default().validate().is_ok());
        let wide = TileConfig { tm: 128, ..TileConfig::default() };
        assert!(wide.validate().is_err());
        let shallow = TileConfig { pipe_stage: 1, ..TileConfig::default() };
        assert!(shallow.validate().is_err());
        let flat = TileConfig { tk: 0, ..TileConfig::default() };
        assert!(flat.validate().is_err());
    }

    #[test]
    fn relative_error() {
        assert_eq!(relative_frobenius_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_frobenius_error(&[3.0, 4.0], &[0.0, 0.0]) - 5.0).abs() < 1e-12);
    }
}
