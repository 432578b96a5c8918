//! Nearest-neighbor retrieval: ranked gallery orderings, first-match ranks,
//! and rank-k accuracy.

use ndarray::{Array2, ArrayView1};

use crate::ensemble::majority_vote_ranking;
use crate::error::{Error, Result};
use crate::Scalar;

/// Squared Euclidean distances from one query row to every gallery row.
/// Squared distances order identically to true distances and are cheaper.
pub fn distance_row<F: Scalar>(query: ArrayView1<F>, gallery: &Array2<F>) -> Vec<F> {
    gallery
        .rows()
        .into_iter()
        .map(|g| {
            query
                .iter()
                .zip(g.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum()
        })
        .collect()
}

fn check_embeddings<F: Scalar>(query: &Array2<F>, gallery: &Array2<F>) -> Result<()> {
    if query.nrows() == 0 {
        return Err(Error::validation("no query embeddings"));
    }
    if gallery.nrows() == 0 {
        return Err(Error::validation("no gallery embeddings"));
    }
    if query.ncols() != gallery.ncols() {
        return Err(Error::validation(format!(
            "query embeddings have {} dims, gallery {}",
            query.ncols(),
            gallery.ncols()
        )));
    }
    if query.iter().any(|v| !v.is_finite()) || gallery.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite embedding value"));
    }
    Ok(())
}

fn check_labels(
    n_query: usize,
    n_gallery: usize,
    query_ids: &[String],
    gallery_ids: &[String],
) -> Result<()> {
    if query_ids.len() != n_query || gallery_ids.len() != n_gallery {
        return Err(Error::validation(format!(
            "{n_query}×{n_gallery} embeddings labeled with {}×{} subject ids",
            query_ids.len(),
            gallery_ids.len()
        )));
    }
    for q in query_ids {
        if !gallery_ids.contains(q) {
            return Err(Error::validation(format!(
                "query subject {q} has no gallery image"
            )));
        }
    }
    Ok(())
}

/// Full ranked retrieval: for every query, gallery indices sorted ascending
/// by Euclidean distance, distance ties broken by ascending gallery index.
pub fn rank_queries<F: Scalar>(
    query: &Array2<F>,
    gallery: &Array2<F>,
) -> Result<Vec<Vec<usize>>> {
    check_embeddings(query, gallery)?;
    Ok(query
        .rows()
        .into_iter()
        .map(|q| {
            let d = distance_row(q, gallery);
            let mut order: Vec<usize> = (0..gallery.nrows()).collect();
            order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite").then(a.cmp(&b)));
            order
        })
        .collect())
}

/// 1-based rank of the first same-subject gallery item per query, under the
/// (distance, gallery index) ordering. Computed without a full sort: the
/// best correct item is found directly and the items strictly ahead of it
/// are counted.
pub fn first_match_ranks<F: Scalar>(
    query: &Array2<F>,
    gallery: &Array2<F>,
    query_ids: &[String],
    gallery_ids: &[String],
) -> Result<Vec<usize>> {
    check_embeddings(query, gallery)?;
    check_labels(query.nrows(), gallery.nrows(), query_ids, gallery_ids)?;

    let mut ranks = Vec::with_capacity(query.nrows());
    for (qi, q) in query.rows().into_iter().enumerate() {
        let d = distance_row(q, gallery);
        let best = (0..gallery.nrows())
            .filter(|&g| gallery_ids[g] == query_ids[qi])
            .min_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite").then(a.cmp(&b)))
            .expect("checked: every query subject has a gallery image");
        let ahead = (0..gallery.nrows())
            .filter(|&g| {
                d[g] < d[best] || (d[g] == d[best] && g < best)
            })
            .count();
        ranks.push(ahead + 1);
    }
    Ok(ranks)
}

/// Same first-match ranks, but under the majority-vote fused ordering of
/// per-model distances instead of a single embedding space.
pub fn vote_first_match_ranks<F: Scalar>(
    per_model_query: &[Array2<F>],
    per_model_gallery: &[Array2<F>],
    query_ids: &[String],
    gallery_ids: &[String],
) -> Result<Vec<usize>> {
    if per_model_query.is_empty() || per_model_query.len() != per_model_gallery.len() {
        return Err(Error::validation(
            "majority vote needs aligned per-model query and gallery embeddings",
        ));
    }
    let n_query = per_model_query[0].nrows();
    let n_gallery = per_model_gallery[0].nrows();
    for (q, g) in per_model_query.iter().zip(per_model_gallery) {
        check_embeddings(q, g)?;
        if q.nrows() != n_query || g.nrows() != n_gallery {
            return Err(Error::validation("sub-models disagree on split sizes"));
        }
    }
    check_labels(n_query, n_gallery, query_ids, gallery_ids)?;

    let mut ranks = Vec::with_capacity(n_query);
    for qi in 0..n_query {
        let distances: Vec<Vec<F>> = per_model_query
            .iter()
            .zip(per_model_gallery)
            .map(|(q, g)| distance_row(q.row(qi), g))
            .collect();
        let order = majority_vote_ranking(&distances)?;
        let position = order
            .iter()
            .position(|&g| gallery_ids[g] == query_ids[qi])
            .expect("checked: every query subject has a gallery image");
        ranks.push(position + 1);
    }
    Ok(ranks)
}

/// Fraction of queries whose first same-subject match sits at rank ≤ k, for
/// every k in 1..=max_k — the cumulative match characteristic.
pub fn cmc_curve(first_match: &[usize], max_k: usize) -> Result<Vec<f64>> {
    if first_match.is_empty() {
        return Err(Error::validation("no query ranks to accumulate"));
    }
    if max_k == 0 {
        return Err(Error::validation("rank-k needs k ≥ 1"));
    }
    let n = first_match.len() as f64;
    Ok((1..=max_k)
        .map(|k| first_match.iter().filter(|&&r| r <= k).count() as f64 / n)
        .collect())
}

/// Fraction of queries whose k nearest gallery items (Euclidean, distance
/// ties by gallery index) contain at least one same-subject item.
pub fn rank_k_accuracy<F: Scalar>(
    query: &Array2<F>,
    gallery: &Array2<F>,
    query_ids: &[String],
    gallery_ids: &[String],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::validation("rank-k needs k ≥ 1"));
    }
    if k > gallery.nrows() {
        return Err(Error::validation(format!(
            "k = {k} exceeds the gallery size {}",
            gallery.nrows()
        )));
    }
    let ranks = first_match_ranks(query, gallery, query_ids, gallery_ids)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::RngExt;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Independent oracle: sort the full distance matrix per query and scan
    /// the top k for a matching subject.
    fn oracle_rank_k(
        query: &Array2<f64>,
        gallery: &Array2<f64>,
        query_ids: &[String],
        gallery_ids: &[String],
        k: usize,
    ) -> f64 {
        let mut hits = 0usize;
        for (qi, q) in query.rows().into_iter().enumerate() {
            let mut pairs: Vec<(f64, usize)> = gallery
                .rows()
                .into_iter()
                .enumerate()
                .map(|(g, row)| {
                    let d = q
                        .iter()
                        .zip(row.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    (d, g)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            if pairs[..k].iter().any(|&(_, g)| gallery_ids[g] == query_ids[qi]) {
                hits += 1;
            }
        }
        hits as f64 / query.nrows() as f64
    }

    #[test]
    fn exact_copies_give_rank_one() {
        let query = array![[0.0, 0.0], [5.0, 5.0]];
        let gallery = array![[0.0, 0.0], [5.0, 5.0], [9.0, -3.0]];
        let acc = rank_k_accuracy(
            &query,
            &gallery,
            &ids(&["a", "b"]),
            &ids(&["a", "b", "c"]),
            1,
        )
        .unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn exhaustive_k_is_always_perfect() {
        let query = array![[0.0], [1.0]];
        let gallery = array![[9.0], [8.0], [7.0]];
        let acc = rank_k_accuracy(
            &query,
            &gallery,
            &ids(&["a", "b"]),
            &ids(&["c", "a", "b"]),
            3,
        )
        .unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn hand_built_ranks_one_and_three() {
        // Query a matches immediately; query b's match hides behind two
        // closer wrong-subject items.
        let query = array![[0.0], [10.0]];
        let gallery = array![[0.1], [10.1], [10.2], [10.3]];
        let q_ids = ids(&["a", "b"]);
        let g_ids = ids(&["a", "x", "y", "b"]);
        let ranks = first_match_ranks(&query, &gallery, &q_ids, &g_ids).unwrap();
        assert_eq!(ranks, vec![1, 3]);
        assert_eq!(
            rank_k_accuracy(&query, &gallery, &q_ids, &g_ids, 1).unwrap(),
            0.5
        );
        assert_eq!(
            rank_k_accuracy(&query, &gallery, &q_ids, &g_ids, 3).unwrap(),
            1.0
        );
        assert_eq!(cmc_curve(&ranks, 4).unwrap(), vec![0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn distance_ties_resolve_to_the_lower_gallery_index() {
        let query = array![[0.0]];
        let gallery = array![[1.0], [-1.0], [1.0]];
        let order = &rank_queries(&query, &gallery).unwrap()[0];
        assert_eq!(order, &vec![0, 1, 2]);

        // The correct item loses an exact tie to a lower-index distractor.
        let ranks =
            first_match_ranks(&query, &gallery, &ids(&["a"]), &ids(&["x", "y", "a"])).unwrap();
        assert_eq!(ranks, vec![3]);
    }

    #[test]
    fn rejects_bad_k_missing_subject_and_shape_mismatch() {
        let query = array![[0.0]];
        let gallery = array![[1.0], [2.0]];
        let q = ids(&["a"]);
        let g = ids(&["a", "b"]);
        assert!(rank_k_accuracy(&query, &gallery, &q, &g, 0).is_err());
        assert!(rank_k_accuracy(&query, &gallery, &q, &g, 3).is_err());
        assert!(rank_k_accuracy(&query, &gallery, &ids(&["zz"]), &g, 1).is_err());
        let wide = array![[0.0, 0.0]];
        assert!(rank_k_accuracy(&wide, &gallery, &q, &g, 1).is_err());
    }

    #[test]
    fn matches_full_sort_oracle_on_random_instances() {
        let mut rng = crate::seeding::rng(1, 91, 0, 0);
        for _ in 0..60 {
            let nq = rng.random_range(1..8);
            let ng = rng.random_range(2..12);
            let dims = rng.random_range(1..4);
            // Query subjects must all appear in the gallery, so the subject
            // pool never exceeds the gallery size.
            let n_subjects = 3.min(ng);
            let gallery = Array2::from_shape_fn((ng, dims), |_| rng.random_range(-5.0..5.0));
            let g_ids: Vec<String> =
                (0..ng).map(|i| format!("s{}", i % n_subjects)).collect();
            let query = Array2::from_shape_fn((nq, dims), |_| rng.random_range(-5.0..5.0));
            let q_ids: Vec<String> =
                (0..nq).map(|i| format!("s{}", i % n_subjects)).collect();
            for k in 1..=ng {
                let fast = rank_k_accuracy(&query, &gallery, &q_ids, &g_ids, k).unwrap();
                let slow = oracle_rank_k(&query, &gallery, &q_ids, &g_ids, k);
                assert_eq!(fast, slow, "k={k} nq={nq} ng={ng}");
            }
        }
    }

    #[test]
    fn gallery_permutation_preserves_accuracy() {
        let mut rng = crate::seeding::rng(2, 91, 0, 0);
        let gallery = Array2::from_shape_fn((9, 3), |_| rng.random_range(-5.0..5.0));
        let g_ids: Vec<String> = (0..9).map(|i| format!("s{}", i % 3)).collect();
        let query = Array2::from_shape_fn((4, 3), |_| rng.random_range(-5.0..5.0));
        let q_ids: Vec<String> = (0..4).map(|i| format!("s{}", i % 3)).collect();

        let perm = [4usize, 0, 7, 2, 8, 1, 5, 3, 6];
        let mut shuffled = Array2::zeros((9, 3));
        let mut shuffled_ids = vec![String::new(); 9];
        for (to, &from) in perm.iter().enumerate() {
            shuffled.row_mut(to).assign(&gallery.row(from));
            shuffled_ids[to] = g_ids[from].clone();
        }
        for k in 1..=9 {
            assert_eq!(
                rank_k_accuracy(&query, &gallery, &q_ids, &g_ids, k).unwrap(),
                rank_k_accuracy(&query, &shuffled, &q_ids, &shuffled_ids, k).unwrap()
            );
        }
    }

    #[test]
    fn embedding_scaling_preserves_rankings() {
        let mut rng = crate::seeding::rng(3, 91, 0, 0);
        let gallery = Array2::from_shape_fn((7, 4), |_| rng.random_range(-2.0..2.0));
        let query = Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
        let orders = rank_queries(&query, &gallery).unwrap();
        let scaled_orders =
            rank_queries(&query.mapv(|v| v * 7.5), &gallery.mapv(|v| v * 7.5)).unwrap();
        assert_eq!(orders, scaled_orders);
    }

    #[test]
    fn vote_ranks_agree_with_single_model_retrieval() {
        let mut rng = crate::seeding::rng(4, 91, 0, 0);
        let gallery = Array2::from_shape_fn((8, 3), |_| rng.random_range(-3.0..3.0));
        let query = Array2::from_shape_fn((3, 3), |_| rng.random_range(-3.0..3.0));
        let g_ids: Vec<String> = (0..8).map(|i| format!("s{}", i % 3)).collect();
        let q_ids: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();

        let single = first_match_ranks(&query, &gallery, &q_ids, &g_ids).unwrap();
        let voted = vote_first_match_ranks(
            &[query.clone()],
            &[gallery.clone()],
            &q_ids,
            &g_ids,
        )
        .unwrap();
        assert_eq!(single, voted);

        // Unanimous models change nothing either.
        let voted3 = vote_first_match_ranks(
            &[query.clone(), query.clone(), query],
            &[gallery.clone(), gallery.clone(), gallery],
            &q_ids,
            &g_ids,
        )
        .unwrap();
        assert_eq!(single, voted3);
    }
}
