//! Cross-validated experiment orchestration: trains every sub-model on each
//! fold rotation, fits the requested ensembles on training-fold embeddings,
//! and aggregates rank-k accuracy, uncertainty, and ablation analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{assign_folds, build_query_gallery, training_indices, FoldAssignment, Sample};
use crate::ensemble::{EnsembleFitConfig, EnsembleKind, EnsembleTransform, FitSummary};
use crate::error::{Error, Result};
use crate::eval::ranking::{cmc_curve, first_match_ranks, vote_first_match_ranks};
use crate::eval::report::{
    CorrelationMatrix, EvaluationReport, LeaveOneOut, MethodKind, MethodResult,
    PairwiseImprovement, PhaseTimings, SizeSweep,
};
use crate::eval::stats::{mean, sample_std, triplet_correlation};
use crate::features::{
    extract_features, import_features, FeatureMethod, FeatureSpec, FeatureVector,
};
use crate::neural::{embed_all, train_siamese, EmbeddingModel, NetworkSpec, TrainConfig,
    TrainingSet};
use crate::seeding::{derive_seed, streams};
use crate::Scalar;

/// Seed-slot layout within the weight-init stream, per rotation: sub-model
/// `m` trains on slot `m` and the main ensemble fits start at the number of
/// sub-models. Ablation refits get disjoint high ranges so no two fits in
/// one run ever share a derived seed.
const SLOT_LEAVE_ONE_OUT: u64 = 1_000;
const SLOT_PAIRWISE: u64 = 2_000;

fn default_hidden() -> Vec<usize> {
    vec![100, 100, 100]
}

fn default_embedding_dim() -> usize {
    50
}

/// One trainable sub-model: a feature extractor plus the embedding network
/// trained on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubModelSpec {
    pub name: String,
    pub feature: FeatureSpec,
    /// Hidden dense widths; each is followed by a relu. Ignored for
    /// raw-image features, which use the convolutional architecture.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Output embedding width.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub train: TrainConfig,
    /// Feature CSV joined on (subject_id, view_id) when the feature method
    /// is `imported`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import_path: Option<PathBuf>,
}

impl SubModelSpec {
    /// A sub-model with library defaults for everything but the extractor.
    pub fn new(name: impl Into<String>, method: FeatureMethod) -> Self {
        SubModelSpec {
            name: name.into(),
            feature: FeatureSpec::new(method),
            hidden: default_hidden(),
            embedding_dim: default_embedding_dim(),
            train: TrainConfig::default(),
            import_path: None,
        }
    }
}

fn default_k_folds() -> usize {
    5
}

fn default_max_rank() -> usize {
    10
}

fn default_ensembles() -> Vec<EnsembleKind> {
    EnsembleKind::ALL.to_vec()
}

fn default_correlation_trials() -> usize {
    100_000
}

/// Fold design, ensemble selection, and seeding for one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub k_folds: usize,
    /// Fold never used for evaluation; defaults to the last fold.
    pub holdout_fold: Option<usize>,
    /// Highest rank the CMC rows extend to.
    pub max_rank: usize,
    pub ensembles: Vec<EnsembleKind>,
    pub ensemble_fit: EnsembleFitConfig,
    /// Root seed; every shuffle, draw, and initialization derives from it.
    pub seed: u64,
    /// Monte-Carlo triples per pair for the correlation analysis.
    pub correlation_trials: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            k_folds: default_k_folds(),
            holdout_fold: None,
            max_rank: default_max_rank(),
            ensembles: default_ensembles(),
            ensemble_fit: EnsembleFitConfig::default(),
            seed: 0,
            correlation_trials: default_correlation_trials(),
        }
    }
}

impl ExperimentSettings {
    /// The configured holdout fold, or the last fold when unset.
    pub fn resolved_holdout(&self) -> usize {
        self.holdout_fold.unwrap_or(self.k_folds.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 3 {
            return Err(Error::validation(format!(
                "need at least 3 folds, got {}",
                self.k_folds
            )));
        }
        if self.resolved_holdout() >= self.k_folds {
            return Err(Error::validation(format!(
                "holdout fold {} out of range for {} folds",
                self.resolved_holdout(),
                self.k_folds
            )));
        }
        if self.max_rank == 0 {
            return Err(Error::validation("max_rank must be at least 1"));
        }
        let mut seen = BTreeSet::new();
        for &kind in &self.ensembles {
            if !seen.insert(kind.name()) {
                return Err(Error::validation(format!(
                    "ensemble '{}' listed twice",
                    kind.name()
                )));
            }
        }
        if self.correlation_trials == 0 {
            return Err(Error::validation("correlation_trials must be at least 1"));
        }
        self.ensemble_fit.train.validate()?;
        if self.ensemble_fit.accuracy_budget == 0 {
            return Err(Error::validation("accuracy_budget must be at least 1"));
        }
        Ok(())
    }
}

/// Everything one fold rotation produced: trained sub-models and their
/// embeddings for the train/query/gallery splits, rows aligned with the
/// subject lists.
#[derive(Debug, Clone)]
pub struct RotationEmbeddings<F> {
    pub eval_fold: usize,
    pub train_subjects: Vec<String>,
    pub query_subjects: Vec<String>,
    pub gallery_subjects: Vec<String>,
    /// Original sample indices behind the query and gallery rows.
    pub query_indices: Vec<usize>,
    pub gallery_indices: Vec<usize>,
    /// `train[m]` is sub-model m's embedding of the training rows.
    pub train: Vec<Array2<F>>,
    pub query: Vec<Array2<F>>,
    pub gallery: Vec<Array2<F>>,
    pub models: Vec<EmbeddingModel<F>>,
    /// Per sub-model: per-epoch mean triplet loss.
    pub train_loss: Vec<Vec<f64>>,
    /// Per sub-model: wall-clock training seconds.
    pub train_seconds: Vec<f64>,
    /// Wall-clock seconds spent embedding the three splits.
    pub inference_seconds: f64,
}

/// All rotations of one experiment plus the one-off feature timing.
#[derive(Debug, Clone)]
pub struct RotationSet<F> {
    pub rotations: Vec<RotationEmbeddings<F>>,
    pub feature_seconds: f64,
}

/// A cross-validated evaluation with the artifacts needed to persist it.
#[derive(Debug, Clone)]
pub struct ExperimentOutput<F> {
    pub report: EvaluationReport,
    pub rotations: Vec<RotationEmbeddings<F>>,
    /// `transforms[r][e]`: the transform of ensemble `e` (in settings
    /// order) fitted on rotation `r`.
    pub transforms: Vec<Vec<EnsembleTransform<F>>>,
}

/// One fitted-and-scored ensemble on a single rotation.
#[derive(Debug, Clone)]
pub struct EnsembleRotationOutcome<F> {
    /// Rank-1..=max_rank accuracy.
    pub accuracies: Vec<f64>,
    pub transform: EnsembleTransform<F>,
    pub summary: FitSummary,
    pub seconds: f64,
}

/// Checks a sub-model roster before any training starts: at least one entry,
/// unique printable names, positive layer widths, and coherent import paths.
/// Front-ends call this to reject bad configurations up front.
pub fn validate_sub_models(sub_models: &[SubModelSpec]) -> Result<()> {
    if sub_models.is_empty() {
        return Err(Error::validation("at least one sub-model required"));
    }
    let mut seen = BTreeSet::new();
    for sm in sub_models {
        if sm.name.is_empty() {
            return Err(Error::validation("sub-model name must not be empty"));
        }
        if sm.name.contains([',', '\n']) {
            return Err(Error::validation(format!(
                "sub-model name '{}' may not contain commas or newlines",
                sm.name
            )));
        }
        if !seen.insert(sm.name.as_str()) {
            return Err(Error::validation(format!(
                "duplicate sub-model name '{}'",
                sm.name
            )));
        }
        if sm.embedding_dim == 0 {
            return Err(Error::validation(format!(
                "sub-model '{}': embedding_dim must be at least 1",
                sm.name
            )));
        }
        if sm.hidden.iter().any(|&u| u == 0) {
            return Err(Error::validation(format!(
                "sub-model '{}': hidden layer widths must be positive",
                sm.name
            )));
        }
        sm.train.validate()?;
        match (sm.feature.method == FeatureMethod::Imported, &sm.import_path) {
            (true, None) => {
                return Err(Error::validation(format!(
                    "sub-model '{}' uses imported features but sets no import_path",
                    sm.name
                )));
            }
            (false, Some(_)) => {
                return Err(Error::validation(format!(
                    "sub-model '{}' sets import_path but its feature method is not 'imported'",
                    sm.name
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

fn model_features<F: Scalar>(
    samples: &[Sample],
    sm: &SubModelSpec,
) -> Result<Vec<FeatureVector<F>>> {
    if sm.feature.method == FeatureMethod::Imported {
        let path = sm.import_path.as_ref().expect("validated above");
        import_features::<F>(path, &sm.name)?.join(samples)
    } else {
        extract_features(samples, &sm.feature)
    }
}

/// Picks the architecture a sub-model trains: the convolutional image
/// network for raw-image features (after checking a well-defined input
/// size), a dense network everywhere else.
fn network_for(sm: &SubModelSpec, samples: &[Sample], dims: usize) -> Result<NetworkSpec> {
    if sm.feature.method == FeatureMethod::RawImage {
        let (w, h) = match sm.feature.resize {
            Some(wh) => wh,
            None => {
                let (w0, h0) = (samples[0].image.width(), samples[0].image.height());
                if samples
                    .iter()
                    .any(|s| s.image.width() != w0 || s.image.height() != h0)
                {
                    return Err(Error::validation(format!(
                        "sub-model '{}': raw-image input needs a resize target when \
                         image sizes vary",
                        sm.name
                    )));
                }
                (w0, h0)
            }
        };
        if dims != 3 * w * h {
            return Err(Error::validation(format!(
                "sub-model '{}': raw-image features have {dims} dims, expected {}",
                sm.name,
                3 * w * h
            )));
        }
        Ok(NetworkSpec::image_embedding(h, w, sm.embedding_dim))
    } else {
        Ok(NetworkSpec::dense(dims, &sm.hidden, sm.embedding_dim))
    }
}

/// Extracts features once, then trains and embeds every sub-model on each
/// fold rotation. Rotations run in parallel when a multi-threaded rayon
/// pool is installed; each rotation is internally deterministic, so results
/// do not depend on the thread count.
pub fn run_rotations<F: Scalar>(
    samples: &[Sample],
    sub_models: &[SubModelSpec],
    settings: &ExperimentSettings,
) -> Result<RotationSet<F>> {
    settings.validate()?;
    validate_sub_models(sub_models)?;
    if samples.is_empty() {
        return Err(Error::validation("dataset is empty"));
    }

    let started = Instant::now();
    let features: Vec<Vec<FeatureVector<F>>> = sub_models
        .iter()
        .map(|sm| model_features(samples, sm))
        .collect::<Result<_>>()?;
    let feature_seconds = started.elapsed().as_secs_f64();

    let mut networks = Vec::with_capacity(sub_models.len());
    for (sm, feats) in sub_models.iter().zip(&features) {
        networks.push(network_for(sm, samples, feats[0].dims())?);
    }

    let holdout = settings.resolved_holdout();
    let first_eval = (0..settings.k_folds)
        .find(|&f| f != holdout)
        .expect("k_folds >= 3 leaves a non-holdout fold");
    let base = assign_folds(samples, settings.k_folds, first_eval, holdout, settings.seed)?;

    let rotations: Vec<RotationEmbeddings<F>> = base
        .rotation_folds()
        .par_iter()
        .enumerate()
        .map(|(r, &fold)| {
            run_one_rotation(
                samples, sub_models, settings, &features, &networks, &base, r, fold,
            )
            .map_err(|e| {
                Error::validation(format!("fold rotation {r} (eval fold {fold}) failed: {e}"))
            })
        })
        .collect::<Result<_>>()?;

    Ok(RotationSet {
        rotations,
        feature_seconds,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one_rotation<F: Scalar>(
    samples: &[Sample],
    sub_models: &[SubModelSpec],
    settings: &ExperimentSettings,
    features: &[Vec<FeatureVector<F>>],
    networks: &[NetworkSpec],
    base: &FoldAssignment,
    rotation: usize,
    eval_fold: usize,
) -> Result<RotationEmbeddings<F>> {
    let assignment = base.with_eval_fold(eval_fold)?;
    let train_idx = training_indices(samples, &assignment);
    let split = build_query_gallery(
        samples,
        &assignment,
        derive_seed(settings.seed, streams::QUERY_PICK, rotation as u64, 0),
    )?;
    let subjects_of = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| samples[i].subject_id.clone()).collect()
    };

    let n = sub_models.len();
    let mut models = Vec::with_capacity(n);
    let mut train_m = Vec::with_capacity(n);
    let mut query_m = Vec::with_capacity(n);
    let mut gallery_m = Vec::with_capacity(n);
    let mut train_loss = Vec::with_capacity(n);
    let mut train_seconds = Vec::with_capacity(n);
    let mut inference_seconds = 0.0;

    for (mi, sm) in sub_models.iter().enumerate() {
        let set = TrainingSet::from_dataset(samples, &train_idx, &features[mi])?;
        let mut cfg = sm.train.clone();
        cfg.seed = derive_seed(
            settings.seed ^ sm.train.seed,
            streams::WEIGHT_INIT,
            rotation as u64,
            mi as u64,
        );
        let started = Instant::now();
        let model = train_siamese(&set, &networks[mi], &cfg)?;
        train_seconds.push(started.elapsed().as_secs_f64());

        let started = Instant::now();
        let rows_of = |idx: &[usize]| -> Vec<FeatureVector<F>> {
            idx.iter().map(|&i| features[mi][i].clone()).collect()
        };
        train_m.push(embed_all(&model, &rows_of(&train_idx))?);
        query_m.push(embed_all(&model, &rows_of(&split.query))?);
        gallery_m.push(embed_all(&model, &rows_of(&split.gallery))?);
        inference_seconds += started.elapsed().as_secs_f64();

        train_loss.push(model.train_log().to_vec());
        models.push(model);
    }

    Ok(RotationEmbeddings {
        eval_fold,
        train_subjects: subjects_of(&train_idx),
        query_subjects: subjects_of(&split.query),
        gallery_subjects: subjects_of(&split.gallery),
        query_indices: split.query,
        gallery_indices: split.gallery,
        train: train_m,
        query: query_m,
        gallery: gallery_m,
        models,
        train_loss,
        train_seconds,
        inference_seconds,
    })
}

/// Fits one ensemble on a subset of a rotation's sub-model embeddings and
/// scores it on that rotation's query/gallery split. `seed_slot`
/// distinguishes concurrent fits in the seed derivation (see the slot
/// constants above).
pub fn ensemble_rotation_cmc<F: Scalar>(
    rot: &RotationEmbeddings<F>,
    model_indices: &[usize],
    kind: EnsembleKind,
    settings: &ExperimentSettings,
    rotation: usize,
    seed_slot: u64,
) -> Result<EnsembleRotationOutcome<F>> {
    if model_indices.is_empty() {
        return Err(Error::validation("ensemble needs at least one sub-model"));
    }
    if let Some(&bad) = model_indices.iter().find(|&&m| m >= rot.train.len()) {
        return Err(Error::validation(format!(
            "sub-model index {bad} out of range: rotation has {}",
            rot.train.len()
        )));
    }
    let started = Instant::now();
    let pick = |mats: &[Array2<F>]| -> Vec<Array2<F>> {
        model_indices.iter().map(|&m| mats[m].clone()).collect()
    };
    let mut cfg = settings.ensemble_fit.clone();
    cfg.train.seed = derive_seed(
        settings.seed ^ settings.ensemble_fit.train.seed,
        streams::WEIGHT_INIT,
        rotation as u64,
        seed_slot,
    );
    let (transform, summary) =
        EnsembleTransform::fit(kind, &pick(&rot.train), &rot.train_subjects, &cfg)?;
    let ranks = if kind == EnsembleKind::MajorityVote {
        vote_first_match_ranks(
            &pick(&rot.query),
            &pick(&rot.gallery),
            &rot.query_subjects,
            &rot.gallery_subjects,
        )?
    } else {
        let fused_query = transform.fuse_matrix(&pick(&rot.query))?;
        let fused_gallery = transform.fuse_matrix(&pick(&rot.gallery))?;
        first_match_ranks(
            &fused_query,
            &fused_gallery,
            &rot.query_subjects,
            &rot.gallery_subjects,
        )?
    };
    Ok(EnsembleRotationOutcome {
        accuracies: cmc_curve(&ranks, settings.max_rank)?,
        transform,
        summary,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn submodel_cmc<F: Scalar>(
    rot: &RotationEmbeddings<F>,
    model: usize,
    max_rank: usize,
) -> Result<Vec<f64>> {
    let ranks = first_match_ranks(
        &rot.query[model],
        &rot.gallery[model],
        &rot.query_subjects,
        &rot.gallery_subjects,
    )?;
    cmc_curve(&ranks, max_rank)
}

/// Runs the full cross-validated evaluation: every sub-model and every
/// requested ensemble, scored per rotation and aggregated as mean ± sample
/// standard deviation, with per-phase wall-clock timings.
pub fn cross_validate<F: Scalar>(
    samples: &[Sample],
    sub_models: &[SubModelSpec],
    settings: &ExperimentSettings,
) -> Result<ExperimentOutput<F>> {
    let set = run_rotations::<F>(samples, sub_models, settings)?;
    let n_models = sub_models.len();
    let n_rotations = set.rotations.len();

    let mut methods = Vec::with_capacity(n_models + settings.ensembles.len());
    let mut training_s = 0.0;
    let inference_s: f64 = set.rotations.iter().map(|r| r.inference_seconds).sum();

    for (mi, sm) in sub_models.iter().enumerate() {
        let mut per_rotation = Vec::with_capacity(n_rotations);
        let mut losses = Vec::with_capacity(n_rotations);
        let mut seconds = 0.0;
        for rot in &set.rotations {
            per_rotation.push(submodel_cmc(rot, mi, settings.max_rank)?);
            losses.push(rot.train_loss[mi].clone());
            seconds += rot.train_seconds[mi];
        }
        training_s += seconds;
        let mut method = MethodResult::aggregate(sm.name.clone(), MethodKind::SubModel, per_rotation)?;
        method.train_loss = Some(losses);
        method.train_seconds = Some(seconds);
        methods.push(method);
    }

    let all: Vec<usize> = (0..n_models).collect();
    let mut transforms: Vec<Vec<EnsembleTransform<F>>> = vec![Vec::new(); n_rotations];
    let mut ensemble_fitting_s = 0.0;
    for (ei, &kind) in settings.ensembles.iter().enumerate() {
        let mut per_rotation = Vec::with_capacity(n_rotations);
        let mut weights = Vec::with_capacity(n_rotations);
        let mut losses = Vec::with_capacity(n_rotations);
        let mut seconds = 0.0;
        for (r, rot) in set.rotations.iter().enumerate() {
            let out = ensemble_rotation_cmc(rot, &all, kind, settings, r, (n_models + ei) as u64)
                .map_err(|e| {
                    Error::validation(format!(
                        "fold rotation {r} (eval fold {}) failed fitting {}: {e}",
                        rot.eval_fold,
                        kind.name()
                    ))
                })?;
            per_rotation.push(out.accuracies);
            if let Some(w) = out.transform.weights() {
                weights.push(w.weights.clone());
            }
            if !out.summary.loss_log.is_empty() {
                losses.push(out.summary.loss_log.clone());
            }
            seconds += out.seconds;
            transforms[r].push(out.transform);
        }
        ensemble_fitting_s += seconds;
        let mut method = MethodResult::aggregate(kind.name(), MethodKind::Ensemble, per_rotation)?;
        if weights.len() == n_rotations {
            method.weights = Some(weights);
        }
        if losses.len() == n_rotations {
            method.train_loss = Some(losses);
        }
        method.train_seconds = Some(seconds);
        methods.push(method);
    }

    let report = EvaluationReport {
        max_rank: settings.max_rank,
        rotations: set.rotations.iter().map(|r| r.eval_fold).collect(),
        methods,
        timings: Some(PhaseTimings {
            feature_extraction_s: set.feature_seconds,
            training_s,
            ensemble_fitting_s,
            inference_s,
        }),
        correlation: None,
        pairwise_improvement: None,
        leave_one_out: None,
        size_sweep: None,
    };
    report.validate()?;
    Ok(ExperimentOutput {
        report,
        rotations: set.rotations,
        transforms,
    })
}

/// Each rotation's evaluation rows (query then gallery) for one sub-model,
/// stacked into a single matrix.
fn stacked_eval_rows<F: Scalar>(rot: &RotationEmbeddings<F>, model: usize) -> Result<Array2<F>> {
    ndarray::concatenate(Axis(0), &[rot.query[model].view(), rot.gallery[model].view()])
        .map_err(|e| Error::validation(format!("cannot stack evaluation embeddings: {e}")))
}

/// Mean triplet correlation between every pair of sub-models, measured on
/// each rotation's evaluation rows and averaged across rotations. The
/// diagonal is computed, not assumed.
pub fn correlation_matrix<F: Scalar>(
    rots: &[RotationEmbeddings<F>],
    names: &[String],
    trials: usize,
    seed: u64,
) -> Result<CorrelationMatrix> {
    let m = names.len();
    if rots.is_empty() {
        return Err(Error::validation("correlation needs at least one rotation"));
    }
    if m == 0 || rots.iter().any(|r| r.query.len() != m || r.gallery.len() != m) {
        return Err(Error::validation(
            "correlation needs one name per sub-model in every rotation",
        ));
    }
    let mut matrix = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for (r, rot) in rots.iter().enumerate() {
                let rows_i = stacked_eval_rows(rot, i)?;
                let rows_j = stacked_eval_rows(rot, j)?;
                let pair_seed =
                    derive_seed(seed, streams::CORRELATION, (r * m + i) as u64, j as u64);
                acc += triplet_correlation(&rows_i, &rows_j, trials, pair_seed)?;
            }
            let value = acc / rots.len() as f64;
            matrix[i][j] = value;
            matrix[j][i] = value;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        matrix,
        trials,
    })
}

/// Entry (i, j): Rank-1 of the two-model ensemble minus the better of the
/// two sub-models alone. Every unordered pair must be present.
pub fn pairwise_improvement_matrix(
    single_rank1: &[f64],
    pair_rank1: &BTreeMap<(usize, usize), f64>,
) -> Result<Vec<Vec<Option<f64>>>> {
    let m = single_rank1.len();
    if m < 2 {
        return Err(Error::validation(
            "pairwise improvement needs at least two sub-models",
        ));
    }
    let mut matrix = vec![vec![None; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let pair = *pair_rank1.get(&(i, j)).ok_or_else(|| {
                Error::validation(format!(
                    "missing pair-ensemble Rank-1 for sub-models ({i}, {j})"
                ))
            })?;
            let delta = pair - single_rank1[i].max(single_rank1[j]);
            matrix[i][j] = Some(delta);
            matrix[j][i] = Some(delta);
        }
    }
    Ok(matrix)
}

fn submodel_mean_rank1<F: Scalar>(
    rots: &[RotationEmbeddings<F>],
    model: usize,
) -> Result<f64> {
    let vals = rots
        .iter()
        .map(|rot| Ok(submodel_cmc(rot, model, 1)?[0]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&vals))
}

fn ensemble_mean_rank1<F: Scalar>(
    rots: &[RotationEmbeddings<F>],
    indices: &[usize],
    kind: EnsembleKind,
    settings: &ExperimentSettings,
    seed_slot: u64,
) -> Result<f64> {
    let vals = rots
        .iter()
        .enumerate()
        .map(|(r, rot)| {
            Ok(ensemble_rotation_cmc(rot, indices, kind, settings, r, seed_slot)?.accuracies[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&vals))
}

/// Fits a two-model concatenation ensemble for every sub-model pair and
/// reports its Rank-1 gain over the better constituent.
pub fn pairwise_improvement<F: Scalar>(
    rots: &[RotationEmbeddings<F>],
    names: &[String],
    settings: &ExperimentSettings,
) -> Result<PairwiseImprovement> {
    let m = names.len();
    if m < 2 {
        return Err(Error::validation(
            "pairwise improvement needs at least two sub-models",
        ));
    }
    if rots.is_empty() || rots.iter().any(|r| r.query.len() != m) {
        return Err(Error::validation(
            "pairwise improvement needs one name per sub-model in every rotation",
        ));
    }
    let mut single = Vec::with_capacity(m);
    for i in 0..m {
        single.push(submodel_mean_rank1(rots, i)?);
    }
    let mut pairs = BTreeMap::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let slot = SLOT_PAIRWISE + (i * m + j) as u64;
            let rank1 = ensemble_mean_rank1(
                rots,
                &[i, j],
                EnsembleKind::Concatenation,
                settings,
                slot,
            )?;
            pairs.insert((i, j), rank1);
        }
    }
    let matrix = pairwise_improvement_matrix(&single, &pairs)?;
    let row_sums = matrix
        .iter()
        .map(|row| row.iter().flatten().sum())
        .collect();
    Ok(PairwiseImprovement {
        names: names.to_vec(),
        matrix,
        row_sums,
    })
}

/// `deltas[m] = full_rank1 − minus_one_rank1[m]`: positive means removing
/// sub-model `m` hurts the ensemble.
pub fn leave_one_out_ablation(full_rank1: f64, minus_one_rank1: &[f64]) -> Vec<f64> {
    minus_one_rank1.iter().map(|&r| full_rank1 - r).collect()
}

/// Refits the ensemble with each sub-model removed in turn and reports the
/// Rank-1 drop against the full ensemble.
pub fn leave_one_out<F: Scalar>(
    rots: &[RotationEmbeddings<F>],
    names: &[String],
    kind: EnsembleKind,
    settings: &ExperimentSettings,
) -> Result<LeaveOneOut> {
    let m = names.len();
    if m < 2 {
        return Err(Error::validation(
            "leave-one-out ablation needs at least two sub-models",
        ));
    }
    if rots.is_empty() || rots.iter().any(|r| r.query.len() != m) {
        return Err(Error::validation(
            "leave-one-out ablation needs one name per sub-model in every rotation",
        ));
    }
    let all: Vec<usize> = (0..m).collect();
    let full_rank1 =
        ensemble_mean_rank1(rots, &all, kind, settings, SLOT_LEAVE_ONE_OUT + m as u64)?;
    let mut minus_one_rank1 = Vec::with_capacity(m);
    for omit in 0..m {
        let subset: Vec<usize> = (0..m).filter(|&x| x != omit).collect();
        minus_one_rank1.push(ensemble_mean_rank1(
            rots,
            &subset,
            kind,
            settings,
            SLOT_LEAVE_ONE_OUT + omit as u64,
        )?);
    }
    let deltas = leave_one_out_ablation(full_rank1, &minus_one_rank1);
    Ok(LeaveOneOut {
        ensemble: kind.name().to_string(),
        names: names.to_vec(),
        full_rank1,
        minus_one_rank1,
        deltas,
    })
}

/// Retrains one sub-model at each embedding width on the same fold design
/// and reports mean ± std Rank-1 per width.
pub fn representation_size_sweep<F: Scalar>(
    samples: &[Sample],
    base: &SubModelSpec,
    sizes: &[usize],
    settings: &ExperimentSettings,
) -> Result<SizeSweep> {
    if sizes.is_empty() {
        return Err(Error::validation("size sweep needs at least one width"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::validation("embedding widths must be positive"));
    }
    let mut mean_rank1 = Vec::with_capacity(sizes.len());
    let mut std_rank1 = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut sm = base.clone();
        sm.embedding_dim = size;
        let set = run_rotations::<F>(samples, std::slice::from_ref(&sm), settings)?;
        let vals = set
            .rotations
            .iter()
            .map(|rot| Ok(submodel_cmc(rot, 0, 1)?[0]))
            .collect::<Result<Vec<f64>>>()?;
        mean_rank1.push(mean(&vals));
        std_rank1.push(if vals.len() >= 2 { sample_std(&vals) } else { 0.0 });
    }
    Ok(SizeSweep {
        method: base.name.clone(),
        sizes: sizes.to_vec(),
        mean_rank1,
        std_rank1,
    })
}
