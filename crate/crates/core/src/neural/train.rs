//! Triplet loss, triplet sampling, and siamese training.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;

use ndarray::{Array1, Array2};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::neural::model::{init_network, EmbeddingModel};
use crate::neural::NetworkSpec;
use crate::seeding::{self, streams};
use crate::Scalar;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Gradient descent flavor used for the per-batch update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e−8, bias correction.
    #[default]
    Adam,
    /// Plain stochastic gradient descent.
    Sgd,
}

/// Training hyperparameters. Every field has a default, so a config file
/// may set only the ones it cares about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Triplet margin α.
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 100,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    /// Rejects non-finite or negative hyperparameters. Zero margin and zero
    /// learning rate are permitted: both have well-defined degenerate
    /// behavior that tests rely on.
    pub fn validate(&self) -> Result<()> {
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(Error::validation(format!(
                "margin must be finite and ≥ 0, got {}",
                self.margin
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::validation(format!(
                "learning rate must be finite and ≥ 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be ≥ 1"));
        }
        Ok(())
    }
}

/// Labeled feature vectors a siamese model trains on.
#[derive(Debug, Clone)]
pub struct TrainingSet<F> {
    features: Vec<Array1<F>>,
    subjects: Vec<String>,
}

impl<F: Scalar> TrainingSet<F> {
    /// Builds a training set from `(subject_id, features)` rows. All rows
    /// must share one dimensionality.
    pub fn new(rows: Vec<(String, Vec<F>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        let dims = rows[0].1.len();
        if dims == 0 {
            return Err(Error::validation("training features are zero-length"));
        }
        let mut features = Vec::with_capacity(rows.len());
        let mut subjects = Vec::with_capacity(rows.len());
        for (i, (subject, values)) in rows.into_iter().enumerate() {
            if values.len() != dims {
                return Err(Error::validation(format!(
                    "training row {i} has {} dims, expected {dims}",
                    values.len()
                )));
            }
            features.push(Array1::from(values));
            subjects.push(subject);
        }
        Ok(TrainingSet { features, subjects })
    }

    /// Selects `indices` out of a dataset with its extracted features.
    pub fn from_dataset(
        samples: &[Sample],
        indices: &[usize],
        vectors: &[FeatureVector<F>],
    ) -> Result<Self> {
        if samples.len() != vectors.len() {
            return Err(Error::validation(format!(
                "{} samples but {} feature vectors",
                samples.len(),
                vectors.len()
            )));
        }
        TrainingSet::new(
            indices
                .iter()
                .map(|&i| (samples[i].subject_id.clone(), vectors[i].values.clone()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature(&self, i: usize) -> &Array1<F> {
        &self.features[i]
    }

    pub fn subject(&self, i: usize) -> &str {
        &self.subjects[i]
    }
}

/// One batch of (anchor, positive, negative) index triples into a
/// [`TrainingSet`]; the set's labels make the batch auditable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletBatch {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Checks the triplet label constraints against a training set:
    /// anchor/positive are distinct views of one subject, the negative
    /// belongs to another.
    pub fn audit<F: Scalar>(&self, set: &TrainingSet<F>) -> Result<()> {
        if self.positives.len() != self.anchors.len()
            || self.negatives.len() != self.anchors.len()
        {
            return Err(Error::validation("triplet index lists differ in length"));
        }
        for t in 0..self.len() {
            let (a, p, n) = (self.anchors[t], self.positives[t], self.negatives[t]);
            for &i in [a, p, n].iter() {
                if i >= set.len() {
                    return Err(Error::validation(format!(
                        "triplet {t} references row {i}, set has {}",
                        set.len()
                    )));
                }
            }
            if a == p {
                return Err(Error::validation(format!(
                    "triplet {t}: anchor and positive are the same row"
                )));
            }
            if set.subject(a) != set.subject(p) {
                return Err(Error::validation(format!(
                    "triplet {t}: anchor subject {} ≠ positive subject {}",
                    set.subject(a),
                    set.subject(p)
                )));
            }
            if set.subject(a) == set.subject(n) {
                return Err(Error::validation(format!(
                    "triplet {t}: negative shares the anchor subject {}",
                    set.subject(a)
                )));
            }
        }
        Ok(())
    }
}

/// Draws `batch_size` triplets: anchor subject uniform over subjects with
/// ≥ 2 views, anchor/positive distinct views without replacement, negative
/// a uniform view of a different uniform subject.
pub fn sample_triplets<F: Scalar>(
    set: &TrainingSet<F>,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<TripletBatch> {
    sample_triplets_by_subject((0..set.len()).map(|i| set.subject(i)), batch_size, rng)
}

/// Same draw as [`sample_triplets`], but over bare subject labels (one per
/// row); used where triplets are formed on precomputed embeddings.
pub(crate) fn sample_triplets_by_subject<'a>(
    row_subjects: impl IntoIterator<Item = &'a str>,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<TripletBatch> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, subject) in row_subjects.into_iter().enumerate() {
        by_subject.entry(subject).or_default().push(i);
    }
    if by_subject.len() < 2 {
        return Err(Error::validation(
            "triplet sampling needs at least two subjects",
        ));
    }
    let subjects: Vec<&Vec<usize>> = by_subject.values().collect();
    let anchor_eligible: Vec<usize> = (0..subjects.len())
        .filter(|&s| subjects[s].len() >= 2)
        .collect();
    if anchor_eligible.is_empty() {
        return Err(Error::validation(
            "no subject has two views; cannot form (anchor, positive) pairs",
        ));
    }

    let mut anchors = Vec::with_capacity(batch_size);
    let mut positives = Vec::with_capacity(batch_size);
    let mut negatives = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let s = anchor_eligible[rng.random_range(0..anchor_eligible.len())];
        let views = subjects[s];
        let a = rng.random_range(0..views.len());
        let mut p = rng.random_range(0..views.len() - 1);
        if p >= a {
            p += 1;
        }
        let mut other = rng.random_range(0..subjects.len() - 1);
        if other >= s {
            other += 1;
        }
        let neg_views = subjects[other];
        let n = rng.random_range(0..neg_views.len());

        anchors.push(views[a]);
        positives.push(views[p]);
        negatives.push(neg_views[n]);
    }
    Ok(TripletBatch {
        anchors,
        positives,
        negatives,
    })
}

fn euclidean<F: Scalar>(a: &Array1<F>, b: &Array1<F>) -> F {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<F>()
        .sqrt()
}

/// Triplet loss `max(0, ‖ea−eb‖₂ − ‖ea−ec‖₂ + margin)`.
pub fn triplet_loss<F: Scalar>(
    ea: &Array1<F>,
    eb: &Array1<F>,
    ec: &Array1<F>,
    margin: F,
) -> F {
    (euclidean(ea, eb) - euclidean(ea, ec) + margin).max(F::zero())
}

fn check_batch<F: Scalar>(set: &TrainingSet<F>, batch: &TripletBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::validation("empty triplet batch"));
    }
    batch.audit(set)
}

fn unique_rows(batch: &TripletBatch) -> Vec<usize> {
    let mut rows: Vec<usize> = batch
        .anchors
        .iter()
        .chain(&batch.positives)
        .chain(&batch.negatives)
        .copied()
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Mean triplet loss of a batch under the current model parameters.
pub fn triplet_batch_loss<F: Scalar>(
    model: &EmbeddingModel<F>,
    set: &TrainingSet<F>,
    batch: &TripletBatch,
    margin: F,
) -> Result<F> {
    batch_loss_impl(model, set, batch, margin, None)
}

/// Mean batch loss plus a fingerprint of every non-smooth decision made
/// while evaluating it: relu signs, pool argmax choices, and hinge
/// activity. Equal fingerprints at nearby parameter points certify the
/// loss is smooth between them; finite-difference gradient checks use this
/// to skip kink-adjacent coordinates.
pub fn triplet_batch_loss_fingerprint<F: Scalar>(
    model: &EmbeddingModel<F>,
    set: &TrainingSet<F>,
    batch: &TripletBatch,
    margin: F,
) -> Result<(F, u64)> {
    let mut hasher = DefaultHasher::new();
    let loss = batch_loss_impl(model, set, batch, margin, Some(&mut hasher))?;
    Ok((loss, hasher.finish()))
}

fn batch_loss_impl<F: Scalar>(
    model: &EmbeddingModel<F>,
    set: &TrainingSet<F>,
    batch: &TripletBatch,
    margin: F,
    mut hasher: Option<&mut DefaultHasher>,
) -> Result<F> {
    check_batch(set, batch)?;
    let rows = unique_rows(batch);
    let mut embeddings: HashMap<usize, Array1<F>> = HashMap::with_capacity(rows.len());
    for &i in &rows {
        let features = set.feature(i).as_slice().expect("contiguous features");
        let e = match &mut hasher {
            Some(h) => model.embed_recorded(features, h)?,
            None => model.embed(features)?,
        };
        embeddings.insert(i, e);
    }
    let mut total = F::zero();
    for t in 0..batch.len() {
        let ea = &embeddings[&batch.anchors[t]];
        let eb = &embeddings[&batch.positives[t]];
        let ec = &embeddings[&batch.negatives[t]];
        let raw = euclidean(ea, eb) - euclidean(ea, ec) + margin;
        if let Some(h) = &mut hasher {
            h.write_u8(u8::from(raw > F::zero()));
        }
        total = total + raw.max(F::zero());
    }
    Ok(total / F::cast(batch.len() as f64))
}

/// Mean batch loss and its gradient w.r.t. every model parameter, flat and
/// aligned with [`EmbeddingModel::parameters`]. Each unique sample is
/// embedded once through the shared weights; its output gradients from all
/// triplet roles are accumulated before the single backward pass.
pub fn triplet_batch_gradients<F: Scalar>(
    model: &EmbeddingModel<F>,
    set: &TrainingSet<F>,
    batch: &TripletBatch,
    margin: F,
) -> Result<(F, Vec<F>)> {
    check_batch(set, batch)?;
    let rows = unique_rows(batch);
    let mut pos_of: HashMap<usize, usize> = HashMap::with_capacity(rows.len());
    let mut traces = Vec::with_capacity(rows.len());
    let mut embeddings = Vec::with_capacity(rows.len());
    for (pos, &i) in rows.iter().enumerate() {
        pos_of.insert(i, pos);
        let features = set.feature(i).as_slice().expect("contiguous features");
        let (trace, e) = model.forward_trace(features)?;
        traces.push(trace);
        embeddings.push(e);
    }

    let inv_n = F::cast(1.0 / batch.len() as f64);
    let dim = model.output_dim();
    let mut out_grads: Vec<Array1<F>> = vec![Array1::zeros(dim); rows.len()];
    let mut total = F::zero();
    for t in 0..batch.len() {
        let (pa, pp, pn) = (
            pos_of[&batch.anchors[t]],
            pos_of[&batch.positives[t]],
            pos_of[&batch.negatives[t]],
        );
        let (ea, eb, ec) = (&embeddings[pa], &embeddings[pp], &embeddings[pn]);
        let d_ab = euclidean(ea, eb);
        let d_ac = euclidean(ea, ec);
        let raw = d_ab - d_ac + margin;
        if raw <= F::zero() {
            continue;
        }
        total = total + raw;
        // d‖u‖/du = u/‖u‖; at a zero distance the subgradient 0 is used.
        if d_ab > F::zero() {
            let scale = inv_n / d_ab;
            for j in 0..dim {
                let g = (ea[j] - eb[j]) * scale;
                out_grads[pa][j] += g;
                out_grads[pp][j] -= g;
            }
        }
        if d_ac > F::zero() {
            let scale = inv_n / d_ac;
            for j in 0..dim {
                let g = (ea[j] - ec[j]) * scale;
                out_grads[pa][j] -= g;
                out_grads[pn][j] += g;
            }
        }
    }

    let mut grads = vec![F::zero(); model.parameter_count()];
    for (pos, trace) in traces.iter().enumerate() {
        if out_grads[pos].iter().all(|&g| g == F::zero()) {
            continue;
        }
        let grad = std::mem::replace(&mut out_grads[pos], Array1::zeros(0));
        model.backward(trace, grad, &mut grads);
    }
    Ok((total * inv_n, grads))
}

pub(crate) enum OptState<F> {
    Sgd,
    Adam { t: u32, m: Vec<F>, v: Vec<F> },
}

impl<F: Scalar> OptState<F> {
    pub(crate) fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptState::Sgd,
            OptimizerKind::Adam => OptState::Adam {
                t: 0,
                m: vec![F::zero(); n_params],
                v: vec![F::zero(); n_params],
            },
        }
    }

    pub(crate) fn step(&mut self, params: &mut [F], grads: &[F], lr: F) {
        match self {
            OptState::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - lr * g;
                }
            }
            OptState::Adam { t, m, v } => {
                *t += 1;
                let b1 = F::cast(ADAM_BETA1);
                let b2 = F::cast(ADAM_BETA2);
                let eps = F::cast(ADAM_EPS);
                let c1 = F::cast(1.0 - ADAM_BETA1.powi(*t as i32));
                let c2 = F::cast(1.0 - ADAM_BETA2.powi(*t as i32));
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = b1 * m[i] + (F::one() - b1) * g;
                    v[i] = b2 * v[i] + (F::one() - b2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Trains a siamese embedding: `epochs` epochs of `⌈n/batch_size⌉` batches,
/// one optimizer step per batch, gradients backpropagated through the
/// shared weights of all three triplet branches. Single-threaded and
/// bit-deterministic for a fixed (seed, data, config).
pub fn train_siamese<F: Scalar>(
    set: &TrainingSet<F>,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<EmbeddingModel<F>> {
    cfg.validate()?;
    let mut model: EmbeddingModel<F> = init_network(spec, cfg.seed)?;
    if set.dims() != model.input_len() {
        return Err(Error::validation(format!(
            "training features have {} dims, network expects {}",
            set.dims(),
            model.input_len()
        )));
    }

    let margin = F::cast(cfg.margin);
    let lr = F::cast(cfg.learning_rate);
    let n_batches = set.len().div_ceil(cfg.batch_size);
    let mut rng = seeding::rng(cfg.seed, streams::TRIPLET_SAMPLING, 0, 0);
    let mut params = model.parameters();
    let mut opt = OptState::new(cfg.optimizer, params.len());

    log::debug!(
        "training {} parameters on {} samples: {} epochs x {} batches",
        params.len(),
        set.len(),
        cfg.epochs,
        n_batches
    );
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0f64;
        for batch_idx in 0..n_batches {
            let batch = sample_triplets(set, cfg.batch_size, &mut rng)?;
            let (loss, grads) = triplet_batch_gradients(&model, set, &batch, margin)?;
            let loss = loss.widen();
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: format!("non-finite batch loss {loss}"),
                });
            }
            opt.step(&mut params, &grads, lr);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: "optimizer step produced non-finite weights".into(),
                });
            }
            model.set_parameters(&params)?;
            epoch_loss += loss;
        }
        let mean = epoch_loss / n_batches as f64;
        model.push_epoch_loss(mean);
        log::debug!("epoch {epoch}: mean triplet loss {mean:.6}");
    }
    Ok(model)
}

/// Embeds every feature vector; row `i` of the result is the embedding of
/// `features[i]`. Read-only on the model and parallel across inputs.
pub fn embed_all<F: Scalar>(
    model: &EmbeddingModel<F>,
    features: &[FeatureVector<F>],
) -> Result<Array2<F>> {
    use rayon::prelude::*;
    let dim = model.output_dim();
    let rows: Vec<Array1<F>> = features
        .par_iter()
        .map(|f| model.embed(&f.values))
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&row);
    }
    Ok(out)
}
