//! Balanced K-Means over binary mask rows: every cluster holds exactly `V`
//! rows.
//!
//! Seeding is farthest-point from a random first row. Assignment visits rows
//! by descending margin (distance to the second-nearest centroid minus
//! distance to the nearest) and places each one in its nearest centroid that
//! still has room.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{kept_score, vectorwise_mask_for_order, ImportanceMatrix, PruneConfig};
use crate::error::Result;
use crate::formats::{check_group_size, SparsityMask};

fn sq_dist(row: &[bool], centroid: &[f64]) -> f64 {
    row.iter()
        .zip(centroid)
        .map(|(&b, &c)| {
            let d = if b { 1.0 } else { 0.0 } - c;
            d * d
        })
        .sum()
}

fn farthest_point_seeds(mask: &SparsityMask, clusters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let rows = mask.rows();
    let to_centroid = |r: usize| -> Vec<f64> {
        mask.row(r).iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    };
    let first = rng.gen_range(0..rows);
    let mut centroids = vec![to_centroid(first)];
    let mut nearest: Vec<f64> = (0..rows)
        .map(|r| sq_dist(mask.row(r), &centroids[0]))
        .collect();
    while centroids.len() < clusters {
        let mut pick = 0;
        for r in 1..rows {
            if nearest[r] > nearest[pick] {
                pick = r;
            }
        }
        let c = to_centroid(pick);
        for (r, n) in nearest.iter_mut().enumerate() {
            *n = n.min(sq_dist(mask.row(r), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Capacity-constrained assignment of every row to a cluster.
fn assign(mask: &SparsityMask, centroids: &[Vec<f64>], capacity: usize) -> Vec<usize> {
    let rows = mask.rows();
    let dists: Vec<Vec<f64>> = (0..rows)
        .map(|r| centroids.iter().map(|c| sq_dist(mask.row(r), c)).collect())
        .collect();
    let margin = |d: &[f64]| -> f64 {
        let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
        for &x in d {
            if x < best {
                second = best;
                best = x;
            } else if x < second {
                second = x;
            }
        }
        if second.is_finite() {
            second - best
        } else {
            0.0
        }
    };
    let margins: Vec<f64> = dists.iter().map(|d| margin(d)).collect();
    let mut visit: Vec<usize> = (0..rows).collect();
    visit.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(a.cmp(&b)));

    let mut load = vec![0usize; centroids.len()];
    let mut assignment = vec![0usize; rows];
    for r in visit {
        let mut pick = None;
        for (c, &d) in dists[r].iter().enumerate() {
            if load[c] < capacity && pick.is_none_or(|p: usize| d < dists[r][p]) {
                pick = Some(c);
            }
        }
        let c = pick.expect("total capacity equals row count");
        load[c] += 1;
        assignment[r] = c;
    }
    assignment
}

fn update(mask: &SparsityMask, assignment: &[usize], centroids: &mut [Vec<f64>]) {
    let mut counts = vec![0usize; centroids.len()];
    for c in centroids.iter_mut() {
        c.iter_mut().for_each(|x| *x = 0.0);
    }
    for (r, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (x, &b) in centroids[c].iter_mut().zip(mask.row(r)) {
            if b {
                *x += 1.0;
            }
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|x| *x /= n as f64);
    }
}

/// Row order listing clusters one after another: clusters are ordered by
/// their smallest row, rows ascending inside a cluster.
fn order_from_assignment(assignment: &[usize], clusters: usize) -> Vec<usize> {
    let mut members = vec![Vec::new(); clusters];
    for (r, &c) in assignment.iter().enumerate() {
        members[c].push(r);
    }
    members.sort_by_key(|m| m[0]);
    members.concat()
}

fn run_restart(mask: &SparsityMask, v: usize, max_iters: usize, seed: u64, restart: u64) -> Vec<usize> {
    let clusters = mask.rows() / v;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let mut centroids = farthest_point_seeds(mask, clusters, &mut rng);
    let mut assignment = assign(mask, &centroids, v);
    for _ in 1..max_iters.max(1) {
        update(mask, &assignment, &mut centroids);
        let next = assign(mask, &centroids, v);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    order_from_assignment(&assignment, clusters)
}

/// One candidate row order per restart, in restart order.
pub(crate) fn grouping_candidates(mask: &SparsityMask, cfg: &PruneConfig) -> Vec<Vec<usize>> {
    if mask.rows() == 0 {
        return vec![Vec::new(); cfg.restarts];
    }
    (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|i| run_restart(mask, cfg.v, cfg.kmeans_max_iters, cfg.seed, i))
        .collect()
}

/// Index of the highest-scoring candidate; ties go to the earliest one.
pub(crate) fn best_candidate(scored: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scored.iter().enumerate().skip(1) {
        if s > scored[best] {
            best = i;
        }
    }
    best
}

/// Groups mask rows into balanced clusters of `v` rows.
///
/// Returns a row order whose consecutive chunks of `v` are the groups. Among
/// `cfg.restarts` runs, the order whose vector-wise pruning (at `cfg.alpha`,
/// using the mask bits as scores) keeps the most entries wins.
pub fn kmeans_row_grouping(mask: &SparsityMask, v: usize, cfg: &PruneConfig) -> Result<Vec<usize>> {
    check_group_size(mask.rows(), v)?;
    let cfg = PruneConfig { v, ..cfg.clone() };
    cfg.validate(mask.rows())?;
    let bits = ImportanceMatrix {
        rows: mask.rows(),
        cols: mask.cols(),
        scores: mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    let candidates = grouping_candidates(mask, &cfg);
    let scored: Vec<f64> = candidates
        .iter()
        .map(|order| {
            let m = vectorwise_mask_for_order(&bits, order, v, cfg.alpha);
            kept_score(&bits, &m).expect("shapes agree")
        })
        .collect();
    Ok(candidates.into_iter().nth(best_candidate(&scored)).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn groups(order: &[usize], v: usize) -> Vec<Vec<usize>> {
        let mut g: Vec<Vec<usize>> = order
            .chunks(v)
            .map(|c| {
                let mut c = c.to_vec();
                c.sort();
                c
            })
            .collect();
        g.sort();
        g
    }

    #[test]
    fn identical_rows_are_paired() {
        let mask = SparsityMask::from_strs(&["1100", "0011", "1100", "0011"]).unwrap();
        let order = kmeans_row_grouping(&mask, 2, &PruneConfig::new(0.5, 2)).unwrap();
        assert_eq!(groups(&order, 2), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn single_group_when_v_equals_rows() {
        let mask = SparsityMask::from_strs(&["10", "01", "11"]).unwrap();
        let order = kmeans_row_grouping(&mask, 3, &PruneConfig::new(0.5, 3)).unwrap();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn three_pure_pairs_for_every_seed() {
        let mask = SparsityMask::from_strs(&[
            "110000", "001100", "000011", "001100", "110000", "000011",
        ])
        .unwrap();
        for seed in 0..8 {
            let cfg = PruneConfig::new(0.34, 2).with_seed(seed);
            let order = kmeans_row_grouping(&mask, 2, &cfg).unwrap();
            assert_eq!(
                groups(&order, 2),
                vec![vec![0, 4], vec![1, 3], vec![2, 5]],
                "seed {seed}"
            );
        }
    }

    #[test]
    fn bad_group_size() {
        let mask = SparsityMask::ones(3, 2);
        assert!(matches!(
            kmeans_row_grouping(&mask, 2, &PruneConfig::new(0.5, 2)),
            Err(Error::BadParams(_))
        ));
    }

    #[test]
    fn clusters_are_balanced() {
        let mask = SparsityMask::from_strs(&[
            "1111", "1111", "1111", "1111", "1110", "0001", "0001", "0000",
        ])
        .unwrap();
        let assignment = run_restart(&mask, 4, 50, 7, 0);
        assert_eq!(assignment.len(), 8);
        let mut sorted = assignment.clone();
        sorted.sort();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
    }
}
