//! Heterogeneous ensemble fusion: five transformations that combine several
//! sub-models' embeddings (or rankings) into a single re-identification
//! representation.
//!
//! All embedding-level transforms share one contract: z-score each
//! sub-model's embedding with statistics fitted on training rows, then fuse.
//! Majority vote is the odd one out — it fuses per-model gallery rankings,
//! not embeddings.

mod vote;
mod weighted;
mod zscore;

pub use vote::majority_vote_ranking;
pub use weighted::{
    fit_weighted_accuracy, fit_weighted_triplet, WeightVector, WeightedAccuracyFit,
    WeightedTripletFit, ACCURACY_SEARCH_RANGE, DEFAULT_ACCURACY_BUDGET,
};
pub use zscore::{apply_concatenation, fit_zscore, ZScoreStats, STD_FLOOR};

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::io::{read_container, write_container, Container, KIND_TRANSFORM};
use crate::neural::model::init_network;
use crate::neural::{
    train_siamese, EmbeddingModel, NetworkSpec, TrainConfig, TrainingSet,
};
use crate::Scalar;

/// Hidden width of the stacked embedding head.
pub const STACKED_HIDDEN: usize = 100;
/// Output dimensionality of the stacked embedding head.
pub const STACKED_OUTPUT: usize = 50;

/// Trains a small dense embedding (`dense(100) → relu → dense(50)`) on the
/// z-scored concatenation of all sub-model embeddings, with the same
/// triplet-loss procedure the sub-models use. Inputs must already be
/// z-scored.
pub fn fit_nn_triplet<F: Scalar>(
    z_models: &[Array2<F>],
    subjects: &[String],
    cfg: &TrainConfig,
) -> Result<EmbeddingModel<F>> {
    weighted::check_aligned(z_models, subjects)?;
    let total: usize = z_models.iter().map(|z| z.ncols()).sum();
    let rows = subjects
        .iter()
        .enumerate()
        .map(|(i, subject)| {
            let mut values = Vec::with_capacity(total);
            for z in z_models {
                values.extend(z.row(i).iter().copied());
            }
            (subject.clone(), values)
        })
        .collect();
    let set = TrainingSet::new(rows)?;
    let spec = NetworkSpec::dense(total, &[STACKED_HIDDEN], STACKED_OUTPUT);
    train_siamese(&set, &spec, cfg)
}

/// The five fusion strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Z-scored embeddings concatenated in declared sub-model order.
    Concatenation,
    /// A stacked dense embedding trained on the z-scored concatenation.
    NnTriplet,
    /// Per-model weights fitted by gradient descent on triplet loss.
    WeightedTriplet,
    /// Per-model weights found by derivative-free Rank-1 search.
    WeightedAccuracy,
    /// Median-rank aggregation of per-model gallery rankings.
    MajorityVote,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 5] = [
        EnsembleKind::Concatenation,
        EnsembleKind::NnTriplet,
        EnsembleKind::WeightedTriplet,
        EnsembleKind::WeightedAccuracy,
        EnsembleKind::MajorityVote,
    ];

    /// Stable identifier used in file names, reports, and configs.
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Concatenation => "concatenation",
            EnsembleKind::NnTriplet => "nn_triplet",
            EnsembleKind::WeightedTriplet => "weighted_triplet",
            EnsembleKind::WeightedAccuracy => "weighted_accuracy",
            EnsembleKind::MajorityVote => "majority_vote",
        }
    }

    /// Whether the transform produces fused embeddings (true) or fuses
    /// per-model rankings directly (false).
    pub fn is_embedding_level(self) -> bool {
        !matches!(self, EnsembleKind::MajorityVote)
    }
}

/// Hyperparameters of the fitted transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleFitConfig {
    /// Settings for the gradient-based fits (stacked net, triplet weights);
    /// its seed also drives the accuracy search and its carved split.
    pub train: TrainConfig,
    /// Evaluation budget of the accuracy-driven weight search.
    pub accuracy_budget: usize,
}

impl Default for EnsembleFitConfig {
    fn default() -> Self {
        EnsembleFitConfig {
            train: TrainConfig::default(),
            accuracy_budget: DEFAULT_ACCURACY_BUDGET,
        }
    }
}

/// Diagnostics from fitting a transform, surfaced in reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    /// Per-epoch mean triplet loss (stacked net and weighted-triplet fits).
    pub loss_log: Vec<f64>,
    /// Rank-1 objective of the returned weights (accuracy search only).
    pub objective: Option<f64>,
    /// Rank-1 objective of all-ones weights on the same split.
    pub baseline_objective: Option<f64>,
}

/// A fitted fusion transform, ready to apply to per-model embeddings.
#[derive(Debug, Clone)]
pub enum EnsembleTransform<F> {
    Concatenation {
        stats: ZScoreStats<F>,
    },
    NnTriplet {
        stats: ZScoreStats<F>,
        model: EmbeddingModel<F>,
    },
    WeightedTriplet {
        stats: ZScoreStats<F>,
        weights: WeightVector,
    },
    WeightedAccuracy {
        stats: ZScoreStats<F>,
        weights: WeightVector,
    },
    MajorityVote,
}

impl<F: Scalar> EnsembleTransform<F> {
    /// Fits the chosen transform on aligned training embeddings (one matrix
    /// per sub-model, rows aligned with `subjects`). Z-score statistics are
    /// fitted here and owned by the transform.
    pub fn fit(
        kind: EnsembleKind,
        train: &[Array2<F>],
        subjects: &[String],
        cfg: &EnsembleFitConfig,
    ) -> Result<(Self, FitSummary)> {
        if kind == EnsembleKind::MajorityVote {
            if train.is_empty() {
                return Err(Error::validation("no sub-model embeddings to fuse"));
            }
            return Ok((EnsembleTransform::MajorityVote, FitSummary::default()));
        }

        let stats = fit_zscore(train)?;
        weighted::check_aligned(train, subjects)?;
        let z: Vec<Array2<F>> = train
            .iter()
            .enumerate()
            .map(|(i, m)| stats.normalize_matrix(i, m))
            .collect::<Result<_>>()?;
        let mut summary = FitSummary::default();
        let transform = match kind {
            EnsembleKind::Concatenation => EnsembleTransform::Concatenation { stats },
            EnsembleKind::NnTriplet => {
                let model = fit_nn_triplet(&z, subjects, &cfg.train)?;
                summary.loss_log = model.train_log().to_vec();
                EnsembleTransform::NnTriplet { stats, model }
            }
            EnsembleKind::WeightedTriplet => {
                let fit = fit_weighted_triplet(&z, subjects, &cfg.train)?;
                summary.loss_log = fit.loss_log;
                EnsembleTransform::WeightedTriplet {
                    stats,
                    weights: fit.weights,
                }
            }
            EnsembleKind::WeightedAccuracy => {
                let fit =
                    fit_weighted_accuracy(&z, subjects, cfg.accuracy_budget, cfg.train.seed)?;
                summary.objective = Some(fit.objective);
                summary.baseline_objective = Some(fit.baseline_objective);
                EnsembleTransform::WeightedAccuracy {
                    stats,
                    weights: fit.weights,
                }
            }
            EnsembleKind::MajorityVote => unreachable!("handled above"),
        };
        Ok((transform, summary))
    }

    pub fn kind(&self) -> EnsembleKind {
        match self {
            EnsembleTransform::Concatenation { .. } => EnsembleKind::Concatenation,
            EnsembleTransform::NnTriplet { .. } => EnsembleKind::NnTriplet,
            EnsembleTransform::WeightedTriplet { .. } => EnsembleKind::WeightedTriplet,
            EnsembleTransform::WeightedAccuracy { .. } => EnsembleKind::WeightedAccuracy,
            EnsembleTransform::MajorityVote => EnsembleKind::MajorityVote,
        }
    }

    pub fn stats(&self) -> Option<&ZScoreStats<F>> {
        match self {
            EnsembleTransform::Concatenation { stats }
            | EnsembleTransform::NnTriplet { stats, .. }
            | EnsembleTransform::WeightedTriplet { stats, .. }
            | EnsembleTransform::WeightedAccuracy { stats, .. } => Some(stats),
            EnsembleTransform::MajorityVote => None,
        }
    }

    pub fn weights(&self) -> Option<&WeightVector> {
        match self {
            EnsembleTransform::WeightedTriplet { weights, .. }
            | EnsembleTransform::WeightedAccuracy { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn stacked_model(&self) -> Option<&EmbeddingModel<F>> {
        match self {
            EnsembleTransform::NnTriplet { model, .. } => Some(model),
            _ => None,
        }
    }

    /// Dimensionality of fused embeddings; `None` for majority vote.
    pub fn output_dims(&self) -> Option<usize> {
        match self {
            EnsembleTransform::Concatenation { stats }
            | EnsembleTransform::WeightedTriplet { stats, .. }
            | EnsembleTransform::WeightedAccuracy { stats, .. } => Some(stats.fused_dims()),
            EnsembleTransform::NnTriplet { model, .. } => Some(model.output_dim()),
            EnsembleTransform::MajorityVote => None,
        }
    }

    /// Fuses one sample's per-model embeddings (declared sub-model order)
    /// into a single vector.
    pub fn fuse_row(&self, per_model: &[ArrayView1<F>]) -> Result<Array1<F>> {
        match self {
            EnsembleTransform::Concatenation { stats } => apply_concatenation(stats, per_model),
            EnsembleTransform::NnTriplet { stats, model } => {
                let z = apply_concatenation(stats, per_model)?;
                model.embed(z.as_slice().expect("contiguous fused vector"))
            }
            EnsembleTransform::WeightedTriplet { stats, weights }
            | EnsembleTransform::WeightedAccuracy { stats, weights } => {
                if per_model.len() != stats.n_models() || weights.len() != stats.n_models() {
                    return Err(Error::validation(format!(
                        "got {} sub-model embeddings for {} fitted weights",
                        per_model.len(),
                        weights.len()
                    )));
                }
                let mut fused = Vec::with_capacity(stats.fused_dims());
                for (m, row) in per_model.iter().enumerate() {
                    let alpha = F::cast(weights.weights[m]);
                    fused.extend(stats.normalize_row(m, *row)?.iter().map(|&v| v * alpha));
                }
                Ok(Array1::from(fused))
            }
            EnsembleTransform::MajorityVote => Err(Error::validation(
                "majority vote fuses per-model rankings, not embeddings; \
                 use majority_vote_ranking on per-model distances",
            )),
        }
    }

    /// Fuses whole aligned embedding matrices, row by row.
    pub fn fuse_matrix(&self, models: &[Array2<F>]) -> Result<Array2<F>> {
        let dims = self.output_dims().ok_or_else(|| {
            Error::validation("majority vote has no fused embedding matrix")
        })?;
        if models.is_empty() {
            return Err(Error::validation("no sub-model embeddings to fuse"));
        }
        let n = models[0].nrows();
        if models.iter().any(|m| m.nrows() != n) {
            return Err(Error::validation("sub-model matrices disagree on rows"));
        }
        let mut out = Array2::zeros((n, dims));
        for i in 0..n {
            let views: Vec<ArrayView1<F>> = models.iter().map(|m| m.row(i)).collect();
            out.row_mut(i).assign(&self.fuse_row(&views)?);
        }
        Ok(out)
    }

    /// Writes the transform to the shared binary artifact container.
    /// Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut arrays: Vec<Vec<f64>> = Vec::new();
        let mut model_dims = Vec::new();
        if let Some(stats) = self.stats() {
            for m in 0..stats.n_models() {
                model_dims.push(stats.model_dims(m));
                arrays.push(stats.mean(m).iter().map(|v| v.widen()).collect());
                arrays.push(stats.std(m).iter().map(|v| v.widen()).collect());
            }
        }
        if let Some(weights) = self.weights() {
            arrays.push(weights.weights.clone());
        }
        let mut stacked_spec = None;
        let mut stacked_log = Vec::new();
        if let Some(model) = self.stacked_model() {
            stacked_spec = Some(model.spec().clone());
            stacked_log = model.train_log().to_vec();
            arrays.push(model.parameters().iter().map(|v| v.widen()).collect());
        }
        let meta = TransformMeta {
            kind: self.kind(),
            model_dims,
            stacked_spec,
            stacked_log,
        };
        write_container(
            path,
            &Container {
                kind: KIND_TRANSFORM,
                meta: serde_json::to_string(&meta)
                    .map_err(|e| Error::artifact(format!("metadata encoding failed: {e}")))?,
                arrays,
            },
        )
    }

    /// Reads a transform written by [`EnsembleTransform::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let container = read_container(path)?;
        if container.kind != KIND_TRANSFORM {
            return Err(Error::artifact(format!(
                "expected a transform artifact, found payload kind {}",
                container.kind
            )));
        }
        let meta: TransformMeta = serde_json::from_str(&container.meta)
            .map_err(|e| Error::artifact(format!("bad transform metadata: {e}")))?;

        let kind = meta.kind;
        let expected = match kind {
            EnsembleKind::MajorityVote => 0,
            EnsembleKind::Concatenation => 2 * meta.model_dims.len(),
            EnsembleKind::WeightedTriplet | EnsembleKind::WeightedAccuracy => {
                2 * meta.model_dims.len() + 1
            }
            EnsembleKind::NnTriplet => 2 * meta.model_dims.len() + 1,
        };
        if container.arrays.len() != expected {
            return Err(Error::artifact(format!(
                "transform {} carries {} arrays, expected {expected}",
                kind.name(),
                container.arrays.len()
            )));
        }
        if kind == EnsembleKind::MajorityVote {
            return Ok(EnsembleTransform::MajorityVote);
        }
        if meta.model_dims.is_empty() {
            return Err(Error::artifact("transform metadata lists no sub-models"));
        }

        let mut per_model = Vec::with_capacity(meta.model_dims.len());
        for (m, &dims) in meta.model_dims.iter().enumerate() {
            let mean = &container.arrays[2 * m];
            let std = &container.arrays[2 * m + 1];
            if mean.len() != dims || std.len() != dims {
                return Err(Error::artifact(format!(
                    "sub-model {m} statistics do not match its {dims} dims"
                )));
            }
            if std.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::artifact(format!(
                    "sub-model {m} carries a non-positive standard deviation"
                )));
            }
            per_model.push((
                mean.iter().map(|&v| F::cast(v)).collect::<Array1<F>>(),
                std.iter().map(|&v| F::cast(v)).collect::<Array1<F>>(),
            ));
        }
        let stats = ZScoreStats::from_parts(per_model);
        let tail = &container.arrays[2 * meta.model_dims.len()..];

        Ok(match kind {
            EnsembleKind::Concatenation => EnsembleTransform::Concatenation { stats },
            EnsembleKind::WeightedTriplet | EnsembleKind::WeightedAccuracy => {
                let weights = WeightVector {
                    weights: tail[0].clone(),
                };
                weights.validate().map_err(|e| {
                    Error::artifact(format!("stored weights are invalid: {e}"))
                })?;
                if weights.len() != stats.n_models() {
                    return Err(Error::artifact(format!(
                        "{} weights stored for {} sub-models",
                        weights.len(),
                        stats.n_models()
                    )));
                }
                if kind == EnsembleKind::WeightedTriplet {
                    EnsembleTransform::WeightedTriplet { stats, weights }
                } else {
                    EnsembleTransform::WeightedAccuracy { stats, weights }
                }
            }
            EnsembleKind::NnTriplet => {
                let spec = meta.stacked_spec.ok_or_else(|| {
                    Error::artifact("stacked transform metadata lacks its network spec")
                })?;
                let mut model: EmbeddingModel<F> = init_network(&spec, 0)?;
                let params: Vec<F> = tail[0].iter().map(|&v| F::cast(v)).collect();
                model.set_parameters(&params).map_err(|e| {
                    Error::artifact(format!("stored stacked parameters are invalid: {e}"))
                })?;
                for &loss in &meta.stacked_log {
                    model.push_epoch_loss(loss);
                }
                if model.input_len() != stats.fused_dims() {
                    return Err(Error::artifact(format!(
                        "stacked network expects {} inputs, statistics fuse to {}",
                        model.input_len(),
                        stats.fused_dims()
                    )));
                }
                EnsembleTransform::NnTriplet { stats, model }
            }
            EnsembleKind::MajorityVote => unreachable!("returned above"),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TransformMeta {
    kind: EnsembleKind,
    /// Embedding dimensionality per sub-model, declared order.
    model_dims: Vec<usize>,
    stacked_spec: Option<NetworkSpec>,
    stacked_log: Vec<f64>,
}
