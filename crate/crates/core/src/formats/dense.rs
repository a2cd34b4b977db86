use crate::error::{Error, Result};

/// Row-major 2-D matrix of 32-bit floats.
///
/// This is the reference representation every sparse format decompresses to,
/// and the operand type for the dense side of SpMM.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite value at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    /// Constructor for internal callers that already guarantee the invariants.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.values[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Element-wise product with a mask. Pruned positions become `+0.0`,
    /// kept positions keep their exact bit pattern.
    pub fn masked(&self, mask: &SparsityMask) -> Result<Self> {
        if self.shape() != mask.shape() {
            return Err(Error::shape(format!(
                "matrix is {}x{}, mask is {}x{}",
                self.rows, self.cols, mask.rows, mask.cols
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&mask.bits)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect();
        Ok(Self::from_parts(self.rows, self.cols, values))
    }

    /// Returns a copy whose row `i` is row `order[i]` of `self`.
    pub fn gather_rows(&self, order: &[usize]) -> Self {
        let mut out = Vec::with_capacity(order.len() * self.cols);
        for &r in order {
            out.extend_from_slice(self.row(r));
        }
        Self::from_parts(order.len(), self.cols, out)
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Binary keep/prune matrix; `true` marks a kept weight.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparsityMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl SparsityMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} bits for a {rows}x{cols} mask",
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    /// Parses rows written as `"1100"`-style strings. Any character other
    /// than `'0'` counts as kept.
    pub fn from_strs(rows: &[&str]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            bits.extend(r.bytes().map(|b| b != b'0'));
        }
        Self::new(rows.len(), cols, bits)
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, keep: bool) {
        self.bits[row * self.cols + col] = keep;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[bool] {
        &self.bits[row * self.cols..(row + 1) * self.cols]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            0.0
        } else {
            self.popcount() as f64 / total as f64
        }
    }

    /// Sorted column indices kept in `row`.
    pub fn row_support(&self, row: usize) -> Vec<usize> {
        self.row(row)
            .iter()
            .enumerate()
            .filter_map(|(c, &b)| b.then_some(c))
            .collect()
    }

    /// Returns a copy whose row `i` is row `order[i]` of `self`.
    pub fn gather_rows(&self, order: &[usize]) -> Self {
        let mut bits = Vec::with_capacity(order.len() * self.cols);
        for &r in order {
            bits.extend_from_slice(self.row(r));
        }
        Self {
            rows: order.len(),
            cols: self.cols,
            bits,
        }
    }

    /// Inverse of [`gather_rows`](Self::gather_rows): row `i` of `self` is
    /// written to row `order[i]` of the result.
    pub fn scatter_rows(&self, order: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for (i, &dst) in order.iter().enumerate() {
            out.bits[dst * self.cols..(dst + 1) * self.cols].copy_from_slice(self.row(i));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0; 3]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f32::NAN]),
            Err(Error::InvalidValue(_))
        ));
        assert!(matches!(
            SparsityMask::new(2, 2, vec![true; 5]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn masked_zeroes_pruned_entries_with_positive_zero() {
        let d = DenseMatrix::from_rows(&[[-1.0f32, -2.0], [3.0, -0.0]]).unwrap();
        let m = SparsityMask::from_strs(&["10", "01"]).unwrap();
        let out = d.masked(&m).unwrap();
        assert_eq!(out.values()[1].to_bits(), 0.0f32.to_bits());
        assert_eq!(out.values()[2].to_bits(), 0.0f32.to_bits());
        assert_eq!(out.values()[3].to_bits(), (-0.0f32).to_bits());
        assert_eq!(out.get(0, 0), -1.0);
    }

    #[test]
    fn density_and_support() {
        let m = SparsityMask::from_strs(&["1100", "0011"]).unwrap();
        assert_eq!(m.popcount(), 4);
        assert_eq!(m.density(), 0.5);
        assert_eq!(m.row_support(1), vec![2, 3]);
        assert_eq!(SparsityMask::zeros(0, 0).density(), 0.0);
    }

    #[test]
    fn gather_then_scatter_is_identity() {
        let m = SparsityMask::from_strs(&["100", "010", "001"]).unwrap();
        let order = [2, 0, 1];
        let g = m.gather_rows(&order);
        assert_eq!(g.row_support(0), vec![2]);
        assert_eq!(g.scatter_rows(&order), m);
    }
}
