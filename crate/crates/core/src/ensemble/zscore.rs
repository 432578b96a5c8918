//! Per-dimension z-score normalization fitted on training embeddings.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::Scalar;

/// Floor applied to every per-dimension standard deviation, so constant
/// dimensions normalize to 0 instead of dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Fitted normalization statistics: one (mean, std) pair per dimension of
/// every sub-model, in declared sub-model order.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreStats<F> {
    per_model: Vec<(Array1<F>, Array1<F>)>,
}

/// Fits per-dimension mean and population standard deviation over the
/// training rows of every sub-model matrix; stds are floored at
/// [`STD_FLOOR`]. Rows must be aligned across models.
pub fn fit_zscore<F: Scalar>(train: &[Array2<F>]) -> Result<ZScoreStats<F>> {
    if train.is_empty() {
        return Err(Error::validation("no sub-model embeddings to normalize"));
    }
    let n = train[0].nrows();
    if n < 2 {
        return Err(Error::validation(format!(
            "z-score fitting needs at least 2 training rows, got {n}"
        )));
    }
    let mut per_model = Vec::with_capacity(train.len());
    for (m, matrix) in train.iter().enumerate() {
        if matrix.nrows() != n {
            return Err(Error::validation(format!(
                "sub-model {m} has {} rows, expected {n}",
                matrix.nrows()
            )));
        }
        let inv_n = F::cast(1.0 / n as f64);
        let mean = matrix.sum_axis(Axis(0)) * inv_n;
        let floor = F::cast(STD_FLOOR);
        let std = matrix
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &mu)| {
                let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<F>() * inv_n;
                var.sqrt().max(floor)
            })
            .collect::<Array1<F>>();
        per_model.push((mean, std));
    }
    Ok(ZScoreStats { per_model })
}

impl<F: Scalar> ZScoreStats<F> {
    pub fn n_models(&self) -> usize {
        self.per_model.len()
    }

    /// Dimensionality of one sub-model's embedding.
    pub fn model_dims(&self, model: usize) -> usize {
        self.per_model[model].0.len()
    }

    /// Total dimensionality of the z-scored concatenation.
    pub fn fused_dims(&self) -> usize {
        self.per_model.iter().map(|(m, _)| m.len()).sum()
    }

    pub(crate) fn mean(&self, model: usize) -> &Array1<F> {
        &self.per_model[model].0
    }

    pub(crate) fn std(&self, model: usize) -> &Array1<F> {
        &self.per_model[model].1
    }

    pub(crate) fn from_parts(per_model: Vec<(Array1<F>, Array1<F>)>) -> Self {
        ZScoreStats { per_model }
    }

    fn check_row(&self, model: usize, row: ArrayView1<F>) -> Result<()> {
        if model >= self.n_models() {
            return Err(Error::validation(format!(
                "sub-model index {model} out of range (fitted {})",
                self.n_models()
            )));
        }
        if row.len() != self.model_dims(model) {
            return Err(Error::validation(format!(
                "sub-model {model} embedding has {} dims, stats were fitted on {}",
                row.len(),
                self.model_dims(model)
            )));
        }
        Ok(())
    }

    /// Z-scores one sub-model's embedding row.
    pub fn normalize_row(&self, model: usize, row: ArrayView1<F>) -> Result<Array1<F>> {
        self.check_row(model, row)?;
        let (mean, std) = &self.per_model[model];
        Ok(row
            .iter()
            .zip(mean.iter())
            .zip(std.iter())
            .map(|((&v, &mu), &s)| (v - mu) / s)
            .collect())
    }

    /// Z-scores a whole sub-model matrix, row-wise.
    pub fn normalize_matrix(&self, model: usize, matrix: &Array2<F>) -> Result<Array2<F>> {
        if matrix.nrows() == 0 {
            return Err(Error::validation("cannot normalize an empty matrix"));
        }
        self.check_row(model, matrix.row(0))?;
        let (mean, std) = &self.per_model[model];
        let mut out = matrix.clone();
        for mut row in out.rows_mut() {
            for ((v, &mu), &s) in row.iter_mut().zip(mean.iter()).zip(std.iter()) {
                *v = (*v - mu) / s;
            }
        }
        Ok(out)
    }
}

/// Z-scores every sub-model's embedding for one sample and concatenates
/// them in declared sub-model order.
pub fn apply_concatenation<F: Scalar>(
    stats: &ZScoreStats<F>,
    per_model: &[ArrayView1<F>],
) -> Result<Array1<F>> {
    if per_model.len() != stats.n_models() {
        return Err(Error::validation(format!(
            "got {} sub-model embeddings, stats were fitted on {}",
            per_model.len(),
            stats.n_models()
        )));
    }
    let mut fused = Vec::with_capacity(stats.fused_dims());
    for (m, row) in per_model.iter().enumerate() {
        fused.extend(stats.normalize_row(m, *row)?);
    }
    Ok(Array1::from(fused))
}
