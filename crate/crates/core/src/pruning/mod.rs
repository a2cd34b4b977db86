//! Magnitude pruning into every supported sparsity pattern, including the
//! two-step shuffled block-wise search (row grouping, then vector-wise pruning
//! of the shuffled matrix).

mod kmeans;
mod shflbw;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{check_balanced_params, check_group_size, DenseMatrix, SparsityMask};

pub use kmeans::kmeans_row_grouping;
pub use shflbw::{prune_shflbw, PruneResult};

/// Non-negative, finite per-weight importance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f32>,
}

impl ImportanceMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} scores for a {rows}x{cols} matrix",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidValue(
                "importance scores must be finite and non-negative".into(),
            ));
        }
        Ok(Self { rows, cols, scores })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let d = DenseMatrix::from_rows(rows)?;
        Self::new(d.rows(), d.cols(), d.into_values())
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
    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.scores[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f32] {
        &self.scores[row * self.cols..(row + 1) * self.cols]
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().map(|&s| s as f64).sum()
    }
}

/// Knobs of the shuffled block-wise search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Target non-zero ratio.
    pub alpha: f64,
    /// Ratio of the unstructured keep ratio used for grouping to `alpha`.
    pub beta_factor: f64,
    pub v: usize,
    pub kmeans_max_iters: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl PruneConfig {
    pub fn new(alpha: f64, v: usize) -> Self {
        Self {
            alpha,
            beta_factor: 2.0,
            v,
            kmeans_max_iters: 50,
            seed: 0,
            restarts: 4,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Keep ratio of the unstructured pre-pruning step, clamped to 1.
    pub fn beta(&self) -> f64 {
        (self.beta_factor * self.alpha).min(1.0)
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::params(format!(
                "alpha={} must lie in (0, 1]",
                self.alpha
            )));
        }
        if !(self.beta_factor.is_finite() && self.beta_factor > 0.0) {
            return Err(Error::params(format!(
                "beta factor={} must be positive",
                self.beta_factor
            )));
        }
        if self.restarts == 0 {
            return Err(Error::params("at least one k-means restart is required"));
        }
        check_group_size(rows, self.v)
    }
}

/// Magnitude importance: `|w|`.
pub fn importance_scores(weights: &DenseMatrix) -> ImportanceMatrix {
    ImportanceMatrix {
        rows: weights.rows(),
        cols: weights.cols(),
        scores: weights.values().iter().map(|w| w.abs()).collect(),
    }
}

/// Sum of scores at kept positions, accumulated in f64 in row-major order.
pub fn kept_score(scores: &ImportanceMatrix, mask: &SparsityMask) -> Result<f64> {
    if scores.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "scores are {}x{}, mask is {}x{}",
            scores.rows,
            scores.cols,
            mask.rows(),
            mask.cols()
        )));
    }
    Ok(scores
        .scores
        .iter()
        .zip(mask.bits())
        .filter(|(_, &keep)| keep)
        .map(|(&s, _)| s as f64)
        .sum())
}

pub(crate) fn check_ratio(ratio: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::params(format!("{what}={ratio} must lie in [0, 1]")));
    }
    Ok(())
}

/// `round(ratio * n)`, half away from zero, clamped to `n`.
pub(crate) fn budget(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// Indices of the `k` largest values; ties keep the smaller index.
pub(crate) fn top_k<T>(values: &[T], k: usize, cmp: impl Fn(&T, &T) -> Ordering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| cmp(&values[b], &values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Keeps the `round(keep_ratio * M * K)` highest scores.
pub fn prune_unstructured(scores: &ImportanceMatrix, keep_ratio: f64) -> Result<SparsityMask> {
    check_ratio(keep_ratio, "keep ratio")?;
    let k = budget(keep_ratio, scores.scores.len());
    let mut mask = SparsityMask::zeros(scores.rows, scores.cols);
    for i in top_k(&scores.scores, k, f32::total_cmp) {
        mask.set(i / scores.cols, i % scores.cols, true);
    }
    Ok(mask)
}

/// Vector-wise pruning of the rows taken in `order`: consecutive chunks of
/// `v` entries of `order` form the groups. The mask is in original row order.
pub(crate) fn vectorwise_mask_for_order(
    scores: &ImportanceMatrix,
    order: &[usize],
    v: usize,
    alpha: f64,
) -> SparsityMask {
    let cols = scores.cols;
    let keep = budget(alpha, cols);
    let mut mask = SparsityMask::zeros(scores.rows, cols);
    let mut sums = vec![0.0f64; cols];
    for group in order.chunks(v) {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &r in group {
            for (s, &x) in sums.iter_mut().zip(scores.row(r)) {
                *s += x as f64;
            }
        }
        for c in top_k(&sums, keep, f64::total_cmp) {
            for &r in group {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

/// Keeps the top `round(alpha * K)` column vectors of every `V`-row group.
pub fn prune_vectorwise(scores: &ImportanceMatrix, v: usize, alpha: f64) -> Result<SparsityMask> {
    check_ratio(alpha, "alpha")?;
    check_group_size(scores.rows, v)?;
    let order: Vec<usize> = (0..scores.rows).collect();
    Ok(vectorwise_mask_for_order(scores, &order, v, alpha))
}

/// Keeps the `round(alpha * blocks)` aligned `V x V` blocks with the highest
/// score sums, ranked globally.
pub fn prune_blockwise(scores: &ImportanceMatrix, v: usize, alpha: f64) -> Result<SparsityMask> {
    check_ratio(alpha, "alpha")?;
    check_group_size(scores.rows, v)?;
    if !scores.cols.is_multiple_of(v) {
        return Err(Error::params(format!(
            "block size {v} does not divide {} columns",
            scores.cols
        )));
    }
    let (brows, bcols) = (scores.rows / v, scores.cols / v);
    let mut sums = vec![0.0f64; brows * bcols];
    for r in 0..scores.rows {
        for (c, &x) in scores.row(r).iter().enumerate() {
            sums[(r / v) * bcols + c / v] += x as f64;
        }
    }
    let mut mask = SparsityMask::zeros(scores.rows, scores.cols);
    for b in top_k(&sums, budget(alpha, sums.len()), f64::total_cmp) {
        let (br, bc) = (b / bcols, b % bcols);
        for r in br * v..(br + 1) * v {
            for c in bc * v..(bc + 1) * v {
                mask.set(r, c, true);
            }
        }
    }
    Ok(mask)
}

/// Keeps the `n` highest scores of every aligned window of `m` row elements.
pub fn prune_balanced(scores: &ImportanceMatrix, n: usize, m: usize) -> Result<SparsityMask> {
    check_balanced_params(scores.cols, n, m)?;
    let mut mask = SparsityMask::zeros(scores.rows, scores.cols);
    for r in 0..scores.rows {
        for (w, window) in scores.row(r).chunks(m).enumerate() {
            for c in top_k(window, n, f32::total_cmp) {
                mask.set(r, w * m + c, true);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{validate_pattern, Pattern};

    fn im<const N: usize>(rows: &[[f32; N]]) -> ImportanceMatrix {
        ImportanceMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn importance_is_absolute_value() {
        let w = DenseMatrix::from_rows(&[[-3.0f32, 2.0]]).unwrap();
        assert_eq!(importance_scores(&w).scores(), &[3.0, 2.0]);
        assert_eq!(
            importance_scores(&DenseMatrix::zeros(2, 2)).scores(),
            &[0.0; 4]
        );
        let one = DenseMatrix::from_rows(&[[1.5f32]]).unwrap();
        assert_eq!(importance_scores(&one).scores(), &[1.5]);
    }

    #[test]
    fn importance_rejects_negative() {
        assert!(ImportanceMatrix::new(1, 1, vec![-1.0]).is_err());
        assert!(ImportanceMatrix::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn unstructured_top_two() {
        let s = im(&[[4.0, 1.0], [3.0, 2.0]]);
        let m = prune_unstructured(&s, 0.5).unwrap();
        assert_eq!(m, SparsityMask::from_strs(&["10", "10"]).unwrap());
        assert_eq!(prune_unstructured(&s, 1.0).unwrap(), SparsityMask::ones(2, 2));
    }

    #[test]
    fn unstructured_ties_keep_lower_index() {
        let s = im(&[[1.0, 1.0], [1.0, 1.0]]);
        let m = prune_unstructured(&s, 0.5).unwrap();
        assert_eq!(m, SparsityMask::from_strs(&["11", "00"]).unwrap());
        assert!(prune_unstructured(&s, 1.5).is_err());
    }

    #[test]
    fn vectorwise_uses_group_column_sums() {
        let s = im(&[[3.0, 1.0, 2.0, 0.0], [2.0, 0.0, 2.0, 2.0]]);
        let m = prune_vectorwise(&s, 2, 0.5).unwrap();
        assert_eq!(m, SparsityMask::from_strs(&["1010", "1010"]).unwrap());
        assert_eq!(prune_vectorwise(&s, 2, 1.0).unwrap(), SparsityMask::ones(2, 4));
        let flat = im(&[[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(
            prune_vectorwise(&flat, 2, 0.5).unwrap(),
            SparsityMask::from_strs(&["10", "10"]).unwrap()
        );
        assert!(matches!(prune_vectorwise(&s, 3, 0.5), Err(Error::BadParams(_))));
    }

    #[test]
    fn blockwise_keeps_heaviest_block() {
        let s = im(&[
            [1.0, 1.0, 9.0, 9.0],
            [1.0, 1.0, 9.0, 9.0],
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0],
        ]);
        let m = prune_blockwise(&s, 2, 0.25).unwrap();
        assert_eq!(
            m,
            SparsityMask::from_strs(&["0011", "0011", "0000", "0000"]).unwrap()
        );
        assert_eq!(prune_blockwise(&s, 2, 1.0).unwrap(), SparsityMask::ones(4, 4));
        assert_eq!(prune_blockwise(&s, 2, 0.0).unwrap(), SparsityMask::zeros(4, 4));
        assert!(prune_blockwise(&im(&[[1.0, 1.0, 1.0]; 2]), 2, 0.5).is_err());
    }

    #[test]
    fn balanced_two_in_four() {
        let m = prune_balanced(&im(&[[4.0, 1.0, 3.0, 2.0]]), 2, 4).unwrap();
        assert_eq!(m, SparsityMask::from_strs(&["1010"]).unwrap());
        let all = prune_balanced(&im(&[[4.0, 1.0, 3.0, 2.0]]), 4, 4).unwrap();
        assert_eq!(all, SparsityMask::ones(1, 4));
        let tie = prune_balanced(&im(&[[1.0; 4]]), 2, 4).unwrap();
        assert_eq!(tie, SparsityMask::from_strs(&["1100"]).unwrap());
        assert!(prune_balanced(&im(&[[1.0; 4]]), 2, 3).is_err());
        assert!(prune_balanced(&im(&[[1.0; 4]]), 3, 2).is_err());
        assert!(validate_pattern(&m, Pattern::Balanced { n: 2, m: 4 }).unwrap().passed);
    }

    #[test]
    fn kept_score_sums_kept_entries() {
        let s = im(&[[3.0, 1.0], [2.0, 4.0]]);
        assert_eq!(kept_score(&s, &SparsityMask::ones(2, 2)).unwrap(), 10.0);
        assert_eq!(kept_score(&s, &SparsityMask::zeros(2, 2)).unwrap(), 0.0);
        let diag = SparsityMask::from_strs(&["10", "01"]).unwrap();
        assert_eq!(kept_score(&s, &diag).unwrap(), 7.0);
        assert!(matches!(
            kept_score(&s, &SparsityMask::ones(1, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn beta_is_clamped() {
        assert_eq!(PruneConfig::new(0.25, 2).beta(), 0.5);
        assert_eq!(PruneConfig::new(0.75, 2).beta(), 1.0);
        assert!(PruneConfig::new(0.0, 2).validate(4).is_err());
        assert!(PruneConfig::new(0.5, 3).validate(4).is_err());
    }
}
