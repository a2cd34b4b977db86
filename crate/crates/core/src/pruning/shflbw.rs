use super::kmeans::{best_candidate, grouping_candidates};
use super::{kept_score, prune_unstructured, vectorwise_mask_for_order, ImportanceMatrix, PruneConfig};
use crate::error::Result;
use crate::formats::SparsityMask;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    /// Mask in the original row order.
    pub mask: SparsityMask,
    /// Row order used for grouping: rows `permutation[g*V..(g+1)*V]` form
    /// group `g`. Identity for non-shuffled patterns.
    pub permutation: Vec<usize>,
    pub kept_score: f64,
    pub beta: f64,
}

/// Shuffled block-wise pruning.
///
/// 1. unstructured pruning at `beta` gives a binary mask;
/// 2. balanced K-Means groups its rows into clusters of `V`;
/// 3. rows are shuffled so each cluster is contiguous;
/// 4. vector-wise pruning at `alpha` runs on the shuffled scores;
/// 5. the mask is shuffled back into the original row order.
///
/// The identity order is scored alongside the K-Means restarts and wins ties,
/// so the result never keeps less than plain vector-wise pruning.
pub fn prune_shflbw(scores: &ImportanceMatrix, cfg: &PruneConfig) -> Result<PruneResult> {
    cfg.validate(scores.rows())?;
    let beta = cfg.beta();
    let coarse = prune_unstructured(scores, beta)?;

    let mut candidates = vec![(0..scores.rows()).collect::<Vec<_>>()];
    candidates.extend(grouping_candidates(&coarse, cfg));

    let masks: Vec<SparsityMask> = candidates
        .iter()
        .map(|order| vectorwise_mask_for_order(scores, order, cfg.v, cfg.alpha))
        .collect();
    let scored = masks
        .iter()
        .map(|m| kept_score(scores, m))
        .collect::<Result<Vec<_>>>()?;
    let best = best_candidate(&scored);

    Ok(PruneResult {
        mask: masks.into_iter().nth(best).expect("at least one candidate"),
        permutation: candidates.swap_remove(best),
        kept_score: scored[best],
        beta,
    })
}
