//! Rank-level fusion: aggregates per-model gallery rankings by median rank.

use crate::error::{Error, Result};
use crate::Scalar;

/// Fuses one query's per-model gallery distances into a single gallery
/// ordering. Each model ranks the gallery by its own distances (ties to the
/// lower gallery index); an item's aggregate is the lower median of its
/// per-model ranks, and items order by aggregate, then mean rank, then
/// gallery index. Returns a permutation of `0..n`, best match first.
pub fn majority_vote_ranking<F: Scalar>(model_distances: &[Vec<F>]) -> Result<Vec<usize>> {
    if model_distances.is_empty() {
        return Err(Error::validation("majority vote needs at least one model"));
    }
    let n = model_distances[0].len();
    if n == 0 {
        return Err(Error::validation("majority vote over an empty gallery"));
    }
    for (mi, d) in model_distances.iter().enumerate() {
        if d.len() != n {
            return Err(Error::validation(format!(
                "model {mi} ranks {} gallery items, model 0 ranks {n}",
                d.len()
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "model {mi} produced a non-finite distance"
            )));
        }
    }

    let m = model_distances.len();
    let mut ranks = vec![0usize; m * n];
    let mut order: Vec<usize> = (0..n).collect();
    for (mi, d) in model_distances.iter().enumerate() {
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite").then(a.cmp(&b)));
        for (pos, &g) in order.iter().enumerate() {
            ranks[mi * n + g] = pos;
        }
        order.sort_unstable();
    }

    let mut aggregate: Vec<(usize, usize, usize)> = (0..n)
        .map(|g| {
            let mut rs: Vec<usize> = (0..m).map(|mi| ranks[mi * n + g]).collect();
            rs.sort_unstable();
            let median = rs[(m - 1) / 2];
            let rank_sum: usize = rs.iter().sum();
            (median, rank_sum, g)
        })
        .collect();
    aggregate.sort_unstable();
    Ok(aggregate.into_iter().map(|(_, _, g)| g).collect())
}
