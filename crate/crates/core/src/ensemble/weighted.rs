//! Per-model fusion weights: gradient-fitted on triplet loss, or found by
//! derivative-free search on a held-in Rank-1 objective.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::train::{sample_triplets_by_subject, OptState};
use crate::neural::TrainConfig;
use crate::seeding::{self, streams};
use crate::Scalar;

/// Default evaluation budget for the accuracy-driven weight search.
pub const DEFAULT_ACCURACY_BUDGET: usize = 200;

/// Log-uniform range random weight candidates are drawn from.
pub const ACCURACY_SEARCH_RANGE: (f64, f64) = (1e-2, 1e1);

/// Multiplicative factors tried per coordinate while refining the incumbent.
const REFINE_FACTORS: [f64; 4] = [0.5, 0.8, 1.25, 2.0];

/// One non-negative scale per sub-model, applied to that model's z-scored
/// embedding before concatenation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn ones(n_models: usize) -> Self {
        WeightVector {
            weights: vec![1.0; n_models],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights must be finite, non-negative, and not all zero.
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::validation("weight vector is empty"));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation(format!(
                "weights must be finite and ≥ 0, got {:?}",
                self.weights
            )));
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(Error::validation("all fusion weights are zero"));
        }
        Ok(())
    }
}

pub(crate) fn check_aligned<F: Scalar>(z_models: &[Array2<F>], subjects: &[String]) -> Result<()> {
    if z_models.is_empty() {
        return Err(Error::validation("no sub-model embeddings to weight"));
    }
    let n = subjects.len();
    for (m, z) in z_models.iter().enumerate() {
        if z.nrows() != n {
            return Err(Error::validation(format!(
                "sub-model {m} has {} rows, {n} subject labels given",
                z.nrows()
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::validation(format!("sub-model {m} has zero dims")));
        }
    }
    Ok(())
}

fn sq_dist<F: Scalar>(a: ArrayView1<F>, b: ArrayView1<F>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = (x - y).widen();
            d * d
        })
        .sum()
}

/// Result of the gradient-based weight fit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTripletFit {
    pub weights: WeightVector,
    /// Mean triplet loss per epoch.
    pub loss_log: Vec<f64>,
}

/// Fits one scale per sub-model by gradient descent on the mean triplet
/// loss of the weighted concatenation `concat_m(α_m · z_m(x))`. Weights
/// start at all-ones and are clamped to ≥ 0 after every step. Inputs must
/// already be z-scored.
///
/// With fused distance `d(x,y) = √(Σ_m α_m² ‖z_m(x)−z_m(y)‖²)` the active
/// triplets contribute `∂L/∂α_m = α_m (S_ab,m / d_ab − S_ac,m / d_ac)` where
/// `S_·,m` is the pair's squared distance inside model m's block.
pub fn fit_weighted_triplet<F: Scalar>(
    z_models: &[Array2<F>],
    subjects: &[String],
    cfg: &TrainConfig,
) -> Result<WeightedTripletFit> {
    cfg.validate()?;
    check_aligned(z_models, subjects)?;
    let m = z_models.len();
    let mut alpha = vec![1.0f64; m];
    let mut opt: OptState<f64> = OptState::new(cfg.optimizer, m);
    let n_batches = subjects.len().div_ceil(cfg.batch_size);
    let mut rng = seeding::rng(cfg.seed, streams::TRIPLET_SAMPLING, 1, 0);
    let mut loss_log = Vec::with_capacity(cfg.epochs);

    let mut s_ab = vec![0.0f64; m];
    let mut s_ac = vec![0.0f64; m];
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for batch_idx in 0..n_batches {
            let batch = sample_triplets_by_subject(
                subjects.iter().map(String::as_str),
                cfg.batch_size,
                &mut rng,
            )?;
            let inv_n = 1.0 / batch.len() as f64;
            let mut grads = vec![0.0f64; m];
            let mut loss = 0.0;
            for t in 0..batch.len() {
                let (a, b, c) = (batch.anchors[t], batch.positives[t], batch.negatives[t]);
                let mut d2_ab = 0.0;
                let mut d2_ac = 0.0;
                for (mi, z) in z_models.iter().enumerate() {
                    s_ab[mi] = sq_dist(z.row(a), z.row(b));
                    s_ac[mi] = sq_dist(z.row(a), z.row(c));
                    d2_ab += alpha[mi] * alpha[mi] * s_ab[mi];
                    d2_ac += alpha[mi] * alpha[mi] * s_ac[mi];
                }
                let d_ab = d2_ab.sqrt();
                let d_ac = d2_ac.sqrt();
                let raw = d_ab - d_ac + cfg.margin;
                if raw <= 0.0 {
                    continue;
                }
                loss += raw;
                // Subgradient 0 at a zero distance, as in embedding training.
                for mi in 0..m {
                    let mut g = 0.0;
                    if d_ab > 0.0 {
                        g += s_ab[mi] / d_ab;
                    }
                    if d_ac > 0.0 {
                        g -= s_ac[mi] / d_ac;
                    }
                    grads[mi] += alpha[mi] * g;
                }
            }
            loss *= inv_n;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: format!("non-finite weighted triplet loss {loss}"),
                });
            }
            for g in &mut grads {
                *g *= inv_n;
            }
            opt.step(&mut alpha, &grads, cfg.learning_rate);
            for a in &mut alpha {
                if !a.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        batch: batch_idx,
                        message: "weight update produced a non-finite value".into(),
                    });
                }
                *a = a.max(0.0);
            }
            epoch_loss += loss;
        }
        loss_log.push(epoch_loss / n_batches as f64);
    }
    let weights = WeightVector { weights: alpha };
    weights.validate()?;
    Ok(WeightedTripletFit { weights, loss_log })
}

/// Result of the derivative-free accuracy search.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAccuracyFit {
    pub weights: WeightVector,
    /// Rank-1 accuracy of the returned weights on the carved split.
    pub objective: f64,
    /// Rank-1 accuracy of all-ones weights on the same split.
    pub baseline_objective: f64,
    pub evaluations: usize,
}

struct SearchSplit<'a> {
    d_mats: Vec<Array2<f64>>,
    query_subjects: Vec<&'a str>,
    gallery_subjects: Vec<&'a str>,
}

impl SearchSplit<'_> {
    /// Rank-1 accuracy of weighted fused distances; gallery ties go to the
    /// lower index.
    fn rank1(&self, alpha: &[f64]) -> f64 {
        let a2: Vec<f64> = alpha.iter().map(|a| a * a).collect();
        let mut correct = 0usize;
        for qi in 0..self.query_subjects.len() {
            let mut best = f64::INFINITY;
            let mut best_gi = 0usize;
            for gi in 0..self.gallery_subjects.len() {
                let mut d = 0.0;
                for (mi, dm) in self.d_mats.iter().enumerate() {
                    d += a2[mi] * dm[(qi, gi)];
                }
                if d < best {
                    best = d;
                    best_gi = gi;
                }
            }
            if self.query_subjects[qi] == self.gallery_subjects[best_gi] {
                correct += 1;
            }
        }
        correct as f64 / self.query_subjects.len() as f64
    }
}

/// Fits one scale per sub-model by derivative-free search on a Rank-1
/// objective, measured on a split carved out of the training rows: one
/// seeded random view of every subject with ≥ 2 views becomes a query, all
/// remaining rows form the gallery.
///
/// The all-ones point is always evaluated first and seeds the incumbent.
/// 60% of the budget goes to log-uniform random candidates in
/// [`ACCURACY_SEARCH_RANGE`]^m, the rest to coordinate-wise multiplicative
/// refinement around the incumbent. Only strict improvement replaces the
/// incumbent, so objective ties resolve to the earlier evaluation.
pub fn fit_weighted_accuracy<F: Scalar>(
    z_models: &[Array2<F>],
    subjects: &[String],
    budget: usize,
    seed: u64,
) -> Result<WeightedAccuracyFit> {
    check_aligned(z_models, subjects)?;
    let m = z_models.len();
    if budget < m {
        return Err(Error::validation(format!(
            "weight search budget {budget} is below the number of sub-models ({m})"
        )));
    }

    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        by_subject.entry(s).or_default().push(i);
    }
    if by_subject.values().filter(|v| v.len() >= 2).count() < 2 {
        return Err(Error::validation(
            "accuracy-driven weight search needs at least two subjects with two or more views",
        ));
    }
    let mut split_rng = seeding::rng(seed, streams::ACCURACY_SEARCH, 1, 0);
    let mut query_rows = Vec::new();
    let mut gallery_rows = Vec::new();
    for views in by_subject.values() {
        if views.len() >= 2 {
            let q = split_rng.random_range(0..views.len());
            for (j, &row) in views.iter().enumerate() {
                if j == q {
                    query_rows.push(row);
                } else {
                    gallery_rows.push(row);
                }
            }
        } else {
            gallery_rows.extend(views.iter().copied());
        }
    }
    query_rows.sort_unstable();
    gallery_rows.sort_unstable();

    let d_mats = z_models
        .iter()
        .map(|z| {
            let mut d = Array2::zeros((query_rows.len(), gallery_rows.len()));
            for (qi, &q) in query_rows.iter().enumerate() {
                for (gi, &g) in gallery_rows.iter().enumerate() {
                    d[(qi, gi)] = sq_dist(z.row(q), z.row(g));
                }
            }
            d
        })
        .collect();
    let split = SearchSplit {
        d_mats,
        query_subjects: query_rows.iter().map(|&r| subjects[r].as_str()).collect(),
        gallery_subjects: gallery_rows.iter().map(|&r| subjects[r].as_str()).collect(),
    };

    let mut search_rng = seeding::rng(seed, streams::ACCURACY_SEARCH, 0, 0);
    let mut incumbent = vec![1.0f64; m];
    let baseline_objective = split.rank1(&incumbent);
    let mut objective = baseline_objective;
    let mut evaluations = 1usize;

    let n_random = (budget * 60 / 100).max(1);
    let (lo, hi) = ACCURACY_SEARCH_RANGE;
    let (log_lo, log_hi) = (lo.log10(), hi.log10());
    while evaluations < n_random {
        let candidate: Vec<f64> = (0..m)
            .map(|_| 10f64.powf(search_rng.random_range(log_lo..log_hi)))
            .collect();
        let obj = split.rank1(&candidate);
        evaluations += 1;
        if obj > objective {
            incumbent = candidate;
            objective = obj;
        }
    }
    'refine: loop {
        for coord in 0..m {
            for &factor in &REFINE_FACTORS {
                if evaluations >= budget {
                    break 'refine;
                }
                let mut candidate = incumbent.clone();
                candidate[coord] *= factor;
                let obj = split.rank1(&candidate);
                evaluations += 1;
                if obj > objective {
                    incumbent = candidate;
                    objective = obj;
                }
            }
        }
    }

    let weights = WeightVector { weights: incumbent };
    weights.validate()?;
    Ok(WeightedAccuracyFit {
        weights,
        objective,
        baseline_objective,
        evaluations,
    })
}
