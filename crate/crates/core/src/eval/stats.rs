//! Cross-fold uncertainty statistics and the triplet-agreement correlation
//! between two embedding functions.

use ndarray::Array2;
use rand::RngExt;

use crate::error::{Error, Result};
use crate::seeding::{self, streams};
use crate::Scalar;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample (divide-by-n−1) standard deviation; cross-fold aggregation always
/// has ≥ 2 rotations. Population std is used only inside feature extraction
/// and z-scoring.
pub fn sample_std(values: &[f64]) -> f64 {
    debug_assert!(values.len() >= 2, "sample std needs ≥ 2 values");
    let mu = mean(values);
    let ss = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Cross-fold sample standard deviation divided by the cross-fold mean.
pub fn relative_uncertainty(per_fold: &[f64]) -> Result<f64> {
    if per_fold.len() < 2 {
        return Err(Error::validation(format!(
            "relative uncertainty needs ≥ 2 folds, got {}",
            per_fold.len()
        )));
    }
    let mu = mean(per_fold);
    if mu <= 0.0 {
        return Err(Error::validation(format!(
            "relative uncertainty undefined at mean accuracy {mu}"
        )));
    }
    Ok(sample_std(per_fold) / mu)
}

/// Agreement between two embedding functions over random sample triplets,
/// scaled to [−1, 1].
///
/// Each trial draws distinct (A, B, C) uniformly and succeeds when both
/// embeddings order the pair distances (A,B) vs (A,C) the same strict way;
/// the trial counter increments every trial, successful or not, and the
/// result is `2·success/trials − 1`. Exact distance ties satisfy neither
/// strict order and count as disagreement.
pub fn triplet_correlation<F: Scalar>(
    embs_f: &Array2<F>,
    embs_g: &Array2<F>,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let n = embs_f.nrows();
    if n < 3 {
        return Err(Error::validation(format!(
            "triplet correlation needs ≥ 3 samples, got {n}"
        )));
    }
    if embs_g.nrows() != n {
        return Err(Error::validation(format!(
            "embedding matrices cover {n} vs {} samples",
            embs_g.nrows()
        )));
    }
    if trials == 0 {
        return Err(Error::validation("triplet correlation needs ≥ 1 trial"));
    }

    // Squared pair distances: monotone in the Euclidean distance, so strict
    // order comparisons are unaffected.
    let sq = |e: &Array2<F>, i: usize, j: usize| -> f64 {
        e.row(i)
            .iter()
            .zip(e.row(j).iter())
            .map(|(&a, &b)| {
                let d = (a - b).widen();
                d * d
            })
            .sum()
    };

    let mut rng = seeding::rng(seed, streams::CORRELATION, 0, 0);
    let mut success = 0usize;
    for _ in 0..trials {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.random_range(0..n - 2);
        let (lo, hi) = (a.min(b), a.max(b));
        if c >= lo {
            c += 1;
        }
        if c >= hi {
            c += 1;
        }

        let f_ab = sq(embs_f, a, b);
        let f_ac = sq(embs_f, a, c);
        let g_ab = sq(embs_g, a, b);
        let g_ac = sq(embs_g, a, c);
        if (f_ab < f_ac && g_ab < g_ac) || (f_ab > f_ac && g_ab > g_ac) {
            success += 1;
        }
    }
    Ok(2.0 * success as f64 / trials as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_folds_have_zero_uncertainty() {
        assert_eq!(relative_uncertainty(&[0.9, 0.9, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn two_point_uncertainty_matches_hand_value() {
        // std of (0.8, 1.0) = √(2·0.01) ≈ 0.141421; mean 0.9.
        let r = relative_uncertainty(&[0.8, 1.0]).unwrap();
        assert!((r - 0.141_421_356 / 0.9).abs() < 1e-8, "got {r}");
    }

    #[test]
    fn single_fold_and_zero_mean_are_rejected() {
        assert!(relative_uncertainty(&[0.5]).is_err());
        assert!(relative_uncertainty(&[0.0, 0.0]).is_err());
    }

    fn gaussian(n: usize, dims: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeding::rng(seed, 90, 0, 0);
        Array2::from_shape_fn((n, dims), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identical_embeddings_correlate_perfectly() {
        let f = gaussian(20, 5, 1);
        assert_eq!(triplet_correlation(&f, &f, 2000, 3).unwrap(), 1.0);
    }

    #[test]
    fn independent_embeddings_correlate_near_zero() {
        let f = gaussian(60, 8, 2);
        let g = gaussian(60, 8, 3);
        let corr = triplet_correlation(&f, &g, 20_000, 4).unwrap();
        // 4σ binomial bound at 2·√(0.25/trials) per unit of correlation.
        assert!(corr.abs() < 4.0 / (20_000f64).sqrt() * 2.0, "corr {corr}");
    }

    #[test]
    fn correlation_is_symmetric_under_a_shared_seed() {
        let f = gaussian(40, 6, 5);
        let g = gaussian(40, 6, 6);
        let fg = triplet_correlation(&f, &g, 10_000, 7).unwrap();
        let gf = triplet_correlation(&g, &f, 10_000, 7).unwrap();
        assert_eq!(fg, gf);
    }

    #[test]
    fn monte_carlo_matches_exhaustive_triple_enumeration() {
        // Exact agreement rate by enumerating every ordered distinct triple;
        // the uniform sampler must estimate it within Monte-Carlo error.
        let f = gaussian(9, 2, 15);
        let g = gaussian(9, 2, 16);
        let sq = |e: &Array2<f64>, i: usize, j: usize| {
            (&e.row(i) - &e.row(j)).mapv(|d| d * d).sum()
        };
        let n = f.nrows();
        let (mut agree, mut total) = (0usize, 0usize);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if a == b || a == c || b == c {
                        continue;
                    }
                    total += 1;
                    let (f_ab, f_ac) = (sq(&f, a, b), sq(&f, a, c));
                    let (g_ab, g_ac) = (sq(&g, a, b), sq(&g, a, c));
                    if (f_ab < f_ac && g_ab < g_ac) || (f_ab > f_ac && g_ab > g_ac) {
                        agree += 1;
                    }
                }
            }
        }
        let exact = 2.0 * agree as f64 / total as f64 - 1.0;
        let estimated = triplet_correlation(&f, &g, 40_000, 17).unwrap();
        assert!(
            (estimated - exact).abs() < 0.03,
            "estimate {estimated} vs exact {exact}"
        );
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let f = gaussian(2, 3, 9);
        assert!(triplet_correlation(&f, &f, 10, 0).is_err());
        let g = gaussian(5, 3, 10);
        let h = gaussian(6, 3, 11);
        assert!(triplet_correlation(&g, &h, 10, 0).is_err());
        assert!(triplet_correlation(&g, &g, 0, 0).is_err());
    }

    #[test]
    fn trial_determinism_per_seed() {
        let f = gaussian(30, 4, 12);
        let g = gaussian(30, 4, 13);
        let a = triplet_correlation(&f, &g, 5_000, 14).unwrap();
        let b = triplet_correlation(&f, &g, 5_000, 14).unwrap();
        assert_eq!(a, b);
    }
}
