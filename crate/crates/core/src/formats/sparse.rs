use std::collections::HashMap;

use super::dense::{DenseMatrix, SparsityMask};
use crate::error::{Error, Result};

/// Reconstruction of a dense matrix from a compressed representation.
pub trait ToDense {
    fn shape(&self) -> (usize, usize);
    fn to_dense(&self) -> DenseMatrix;
    /// Structural support: every stored position, including stored zeros.
    fn support(&self) -> SparsityMask;
}

/// Dense reconstruction with zeros at pruned positions.
pub fn decompress<T: ToDense + ?Sized>(sparse: &T) -> DenseMatrix {
    sparse.to_dense()
}

/// One group of `V` rows sharing a column support.
///
/// `values` is column-major within the group: the entry for row `r` of the
/// group and the `t`-th stored column lives at `values[t * V + r]`, so each
/// stored `V x 1` vector is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGroup {
    pub columns: Vec<usize>,
    pub values: Vec<f32>,
}

impl VectorGroup {
    #[inline]
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// The `V x 1` vector stored for the `t`-th column of this group.
    #[inline]
    pub fn vector(&self, v: usize, t: usize) -> &[f32] {
        &self.values[t * v..(t + 1) * v]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorWiseMatrix {
    rows: usize,
    cols: usize,
    v: usize,
    groups: Vec<VectorGroup>,
}

impl VectorWiseMatrix {
    pub fn new(rows: usize, cols: usize, v: usize, groups: Vec<VectorGroup>) -> Result<Self> {
        check_group_size(rows, v)?;
        if groups.len() != rows / v {
            return Err(Error::shape(format!(
                "{} groups for {rows} rows at V={v}",
                groups.len()
            )));
        }
        for (g, group) in groups.iter().enumerate() {
            if group.values.len() != v * group.columns.len() {
                return Err(Error::shape(format!(
                    "group {g}: {} values for {} columns",
                    group.values.len(),
                    group.columns.len()
                )));
            }
            if group.columns.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidValue(format!(
                    "group {g}: column indices not strictly increasing"
                )));
            }
            if group.columns.last().is_some_and(|&c| c >= cols) {
                return Err(Error::InvalidValue(format!(
                    "group {g}: column index out of range for {cols} columns"
                )));
            }
            if group.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidValue(format!("group {g}: non-finite value")));
            }
        }
        Ok(Self {
            rows,
            cols,
            v,
            groups,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn vector_size(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    #[inline]
    pub fn groups(&self) -> &[VectorGroup] {
        &self.groups
    }

    pub fn nnz(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum()
    }
}

impl ToDense for VectorWiseMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (g, group) in self.groups.iter().enumerate() {
            for (t, &c) in group.columns.iter().enumerate() {
                for (r, &x) in group.vector(self.v, t).iter().enumerate() {
                    out.set(g * self.v + r, c, x);
                }
            }
        }
        out
    }

    fn support(&self) -> SparsityMask {
        let mut out = SparsityMask::zeros(self.rows, self.cols);
        for (g, group) in self.groups.iter().enumerate() {
            for &c in &group.columns {
                for r in 0..self.v {
                    out.set(g * self.v + r, c, true);
                }
            }
        }
        out
    }
}

/// Shuffled block-wise matrix: a vector-wise core over permuted rows plus the
/// original position of every compressed row.
#[derive(Debug, Clone, PartialEq)]
pub struct ShflBWMatrix {
    core: VectorWiseMatrix,
    row_indices: Vec<usize>,
}

impl ShflBWMatrix {
    pub fn new(core: VectorWiseMatrix, row_indices: Vec<usize>) -> Result<Self> {
        if row_indices.len() != core.rows {
            return Err(Error::shape(format!(
                "{} row indices for {} rows",
                row_indices.len(),
                core.rows
            )));
        }
        if !is_permutation(&row_indices) {
            return Err(Error::InvalidValue(
                "row indices are not a permutation".into(),
            ));
        }
        Ok(Self { core, row_indices })
    }

    /// Wraps a vector-wise matrix with the identity row order.
    pub fn from_vector_wise(core: VectorWiseMatrix) -> Self {
        let row_indices = (0..core.rows).collect();
        Self { core, row_indices }
    }

    #[inline]
    pub fn core(&self) -> &VectorWiseMatrix {
        &self.core
    }

    #[inline]
    pub fn row_indices(&self) -> &[usize] {
        &self.row_indices
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.core.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.core.cols
    }

    #[inline]
    pub fn vector_size(&self) -> usize {
        self.core.v
    }

    /// Original row positions of group `g`.
    #[inline]
    pub fn group_rows(&self, g: usize) -> &[usize] {
        let v = self.core.v;
        &self.row_indices[g * v..(g + 1) * v]
    }

    /// Same nonzeros under a different row-index array.
    pub fn with_row_indices(&self, row_indices: Vec<usize>) -> Result<Self> {
        Self::new(self.core.clone(), row_indices)
    }
}

impl ToDense for ShflBWMatrix {
    fn shape(&self) -> (usize, usize) {
        self.core.shape()
    }

    fn to_dense(&self) -> DenseMatrix {
        let compressed = self.core.to_dense();
        let mut out = DenseMatrix::zeros(self.core.rows, self.core.cols);
        for (r, &orig) in self.row_indices.iter().enumerate() {
            out.row_mut(orig).copy_from_slice(compressed.row(r));
        }
        out
    }

    fn support(&self) -> SparsityMask {
        self.core.support().scatter_rows(&self.row_indices)
    }
}

/// Block-wise matrix made of dense `V x V` tiles on an aligned grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWiseMatrix {
    rows: usize,
    cols: usize,
    v: usize,
    coords: Vec<(usize, usize)>,
    /// One row-major `V x V` tile per coordinate.
    tiles: Vec<f32>,
}

impl BlockWiseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        v: usize,
        coords: Vec<(usize, usize)>,
        tiles: Vec<f32>,
    ) -> Result<Self> {
        check_group_size(rows, v)?;
        if !cols.is_multiple_of(v) {
            return Err(Error::params(format!(
                "block size {v} does not divide {cols} columns"
            )));
        }
        if tiles.len() != coords.len() * v * v {
            return Err(Error::shape(format!(
                "{} tile values for {} blocks of {v}x{v}",
                tiles.len(),
                coords.len()
            )));
        }
        if coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidValue(
                "block coordinates not unique and sorted".into(),
            ));
        }
        if coords
            .iter()
            .any(|&(br, bc)| br >= rows / v || bc >= cols / v)
        {
            return Err(Error::InvalidValue("block coordinate out of range".into()));
        }
        if tiles.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidValue("non-finite tile value".into()));
        }
        Ok(Self {
            rows,
            cols,
            v,
            coords,
            tiles,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    #[inline]
    pub fn tiles(&self) -> &[f32] {
        &self.tiles
    }

    #[inline]
    pub fn tile(&self, i: usize) -> &[f32] {
        let n = self.v * self.v;
        &self.tiles[i * n..(i + 1) * n]
    }
}

impl ToDense for BlockWiseMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn to_dense(&self) -> DenseMatrix {
        let v = self.v;
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (i, &(br, bc)) in self.coords.iter().enumerate() {
            let tile = self.tile(i);
            for r in 0..v {
                for c in 0..v {
                    out.set(br * v + r, bc * v + c, tile[r * v + c]);
                }
            }
        }
        out
    }

    fn support(&self) -> SparsityMask {
        let v = self.v;
        let mut out = SparsityMask::zeros(self.rows, self.cols);
        for &(br, bc) in &self.coords {
            for r in 0..v {
                for c in 0..v {
                    out.set(br * v + r, bc * v + c, true);
                }
            }
        }
        out
    }
}

pub(crate) fn check_group_size(rows: usize, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::params("group size V must be at least 1"));
    }
    if !rows.is_multiple_of(v) {
        return Err(Error::params(format!(
            "group size V={v} does not divide {rows} rows"
        )));
    }
    Ok(())
}

pub(crate) fn is_permutation(order: &[usize]) -> bool {
    let mut seen = vec![false; order.len()];
    for &i in order {
        if i >= order.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

fn check_same_shape(dense: &DenseMatrix, mask: &SparsityMask) -> Result<()> {
    if dense.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "matrix is {}x{}, mask is {}x{}",
            dense.rows(),
            dense.cols(),
            mask.rows(),
            mask.cols()
        )));
    }
    Ok(())
}

/// Packs a mask whose consecutive `V`-row groups share a support.
pub fn compress_vectorwise(
    dense: &DenseMatrix,
    mask: &SparsityMask,
    v: usize,
) -> Result<VectorWiseMatrix> {
    check_same_shape(dense, mask)?;
    check_group_size(mask.rows(), v)?;
    let mut groups = Vec::with_capacity(mask.rows() / v);
    for g in 0..mask.rows() / v {
        let lead = g * v;
        for r in lead + 1..lead + v {
            if mask.row(r) != mask.row(lead) {
                return Err(Error::NonConformantMask(format!(
                    "row {r} differs from row {lead} in vector group {g}"
                )));
            }
        }
        let columns = mask.row_support(lead);
        let mut values = Vec::with_capacity(columns.len() * v);
        for &c in &columns {
            values.extend((lead..lead + v).map(|r| dense.get(r, c)));
        }
        groups.push(VectorGroup { columns, values });
    }
    Ok(VectorWiseMatrix {
        rows: mask.rows(),
        cols: mask.cols(),
        v,
        groups,
    })
}

/// Offline compression into the vector-wise core plus original row indices.
///
/// Rows with identical supports are chunked into groups of `V` in ascending
/// row order; groups are then ordered by their smallest original row.
pub fn compress_shflbw(
    dense: &DenseMatrix,
    mask: &SparsityMask,
    v: usize,
) -> Result<ShflBWMatrix> {
    check_same_shape(dense, mask)?;
    check_group_size(mask.rows(), v)?;

    let mut class_of: HashMap<&[bool], usize> = HashMap::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for r in 0..mask.rows() {
        let next = classes.len();
        let id = *class_of.entry(mask.row(r)).or_insert(next);
        if id == next {
            classes.push(Vec::new());
        }
        classes[id].push(r);
    }
    if let Some(bad) = classes.iter().find(|rows| rows.len() % v != 0) {
        return Err(Error::NonConformantMask(format!(
            "support of row {} is shared by {} rows, not a multiple of V={v}",
            bad[0],
            bad.len()
        )));
    }

    let mut groups: Vec<&[usize]> = classes.iter().flat_map(|rows| rows.chunks(v)).collect();
    groups.sort_by_key(|g| g[0]);
    let row_indices: Vec<usize> = groups.concat();

    let core = compress_vectorwise(
        &dense.gather_rows(&row_indices),
        &mask.gather_rows(&row_indices),
        v,
    )?;
    Ok(ShflBWMatrix { core, row_indices })
}

/// Packs a mask made of aligned, fully kept `V x V` blocks.
pub fn compress_blockwise(
    dense: &DenseMatrix,
    mask: &SparsityMask,
    v: usize,
) -> Result<BlockWiseMatrix> {
    check_same_shape(dense, mask)?;
    check_group_size(mask.rows(), v)?;
    if !mask.cols().is_multiple_of(v) {
        return Err(Error::params(format!(
            "block size {v} does not divide {} columns",
            mask.cols()
        )));
    }
    let mut coords = Vec::new();
    let mut tiles = Vec::new();
    for br in 0..mask.rows() / v {
        for bc in 0..mask.cols() / v {
            let corner = mask.get(br * v, bc * v);
            let uniform = (0..v).all(|r| (0..v).all(|c| mask.get(br * v + r, bc * v + c) == corner));
            if !uniform {
                return Err(Error::NonConformantMask(format!(
                    "block ({br}, {bc}) is partially kept"
                )));
            }
            if corner {
                coords.push((br, bc));
                for r in 0..v {
                    tiles.extend_from_slice(&dense.row(br * v + r)[bc * v..(bc + 1) * v]);
                }
            }
        }
    }
    Ok(BlockWiseMatrix {
        rows: mask.rows(),
        cols: mask.cols(),
        v,
        coords,
        tiles,
    })
}
