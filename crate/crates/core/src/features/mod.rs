//! Per-image feature extraction: one fixed-length vector per sample and
//! method. All statistics are computed in `f64` and narrowed to the target
//! scalar at the end.

mod imported;
mod patches;
mod resize;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::Scalar;

pub use imported::{import_features, write_features, ImportedFeatures};
pub use patches::{extract_column_quantiles, extract_patch_features, patch_grid, PatchMode};
pub use resize::resize_image;

/// Default patch edge length in pixels.
pub const DEFAULT_PATCH: usize = 16;
/// Default patch overlap as a fraction of the patch edge.
pub const DEFAULT_OVERLAP: f64 = 0.5;
/// Default column quantile levels.
pub const DEFAULT_QUANTILES: [f64; 3] = [0.2, 0.5, 0.8];

/// Extraction method that produced a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMethod {
    /// Per-patch mean over all pixels and channels.
    Brightness,
    /// Per-patch, per-channel mean.
    AvgColor,
    /// Per-patch, per-channel population standard deviation.
    ColorVariance,
    /// Per-pixel-column quantiles over channel-flattened values.
    ColumnQuantile,
    /// Raw channel-first pixel tensor scaled to [0, 1].
    RawImage,
    /// Externally computed features joined by (subject_id, view_id).
    Imported,
}

impl FeatureMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMethod::Brightness => "brightness",
            FeatureMethod::AvgColor => "avg_color",
            FeatureMethod::ColorVariance => "color_variance",
            FeatureMethod::ColumnQuantile => "column_quantile",
            FeatureMethod::RawImage => "raw_image",
            FeatureMethod::Imported => "imported",
        }
    }
}

/// Fixed-length real vector produced by one extraction method for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<F> {
    pub values: Vec<F>,
    pub method: FeatureMethod,
}

impl<F: Scalar> FeatureVector<F> {
    pub fn new(values: Vec<F>, method: FeatureMethod) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "{} feature vector contains a non-finite entry",
                method.name()
            )));
        }
        Ok(FeatureVector { values, method })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }
}

/// Raw image tensor as a feature vector: intensities scaled to [0, 1],
/// flattened channel-first (channel outer, then rows, then columns), so a
/// spatial network can reshape it back without further bookkeeping.
pub fn extract_raw_image<F: Scalar>(sample: &Sample) -> FeatureVector<F> {
    let img = &sample.image;
    let mut values = Vec::with_capacity(3 * img.height() * img.width());
    for c in 0..3 {
        for y in 0..img.height() {
            for x in 0..img.width() {
                values.push(F::cast(img.get(y, x, c) as f64 / 255.0));
            }
        }
    }
    FeatureVector {
        values,
        method: FeatureMethod::RawImage,
    }
}

/// Everything needed to turn a sample list into one feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub method: FeatureMethod,
    /// Optional (width, height) bilinear resize applied before extraction;
    /// `None` keeps the native resolution.
    #[serde(default)]
    pub resize: Option<(usize, usize)>,
    /// Patch edge for the three patch-statistics methods.
    #[serde(default = "default_patch")]
    pub patch: usize,
    /// Patch overlap fraction in [0, 1).
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    /// Quantile levels for the column-quantile method.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

fn default_patch() -> usize {
    DEFAULT_PATCH
}

fn default_overlap() -> f64 {
    DEFAULT_OVERLAP
}

fn default_quantiles() -> Vec<f64> {
    DEFAULT_QUANTILES.to_vec()
}

impl FeatureSpec {
    pub fn new(method: FeatureMethod) -> Self {
        FeatureSpec {
            method,
            resize: None,
            patch: DEFAULT_PATCH,
            overlap: DEFAULT_OVERLAP,
            quantiles: DEFAULT_QUANTILES.to_vec(),
        }
    }

    pub fn with_resize(mut self, width: usize, height: usize) -> Self {
        self.resize = Some((width, height));
        self
    }
}

/// Extracts one feature vector per sample under a single spec.
///
/// The imported method has no extractor; join an [`ImportedFeatures`]
/// table instead.
pub fn extract_features<F: Scalar>(
    samples: &[Sample],
    spec: &FeatureSpec,
) -> Result<Vec<FeatureVector<F>>> {
    let extract_one = |sample: &Sample| -> Result<FeatureVector<F>> {
        let resized;
        let sample = match spec.resize {
            Some((w, h)) => {
                resized = resize_image(sample, w, h)?;
                &resized
            }
            None => sample,
        };
        match spec.method {
            FeatureMethod::Brightness => {
                extract_patch_features(sample, PatchMode::Brightness, spec.patch, spec.overlap)
            }
            FeatureMethod::AvgColor => {
                extract_patch_features(sample, PatchMode::AvgColor, spec.patch, spec.overlap)
            }
            FeatureMethod::ColorVariance => {
                extract_patch_features(sample, PatchMode::ColorVariance, spec.patch, spec.overlap)
            }
            FeatureMethod::ColumnQuantile => extract_column_quantiles(sample, &spec.quantiles),
            FeatureMethod::RawImage => Ok(extract_raw_image(sample)),
            FeatureMethod::Imported => Err(Error::validation(
                "imported features must be joined from a feature table, not extracted",
            )),
        }
    };

    use rayon::prelude::*;
    let vectors: Vec<Result<FeatureVector<F>>> = samples.par_iter().map(extract_one).collect();
    let vectors: Vec<FeatureVector<F>> = vectors.into_iter().collect::<Result<_>>()?;

    if let Some(first) = vectors.first() {
        for (i, v) in vectors.iter().enumerate() {
            if v.dims() != first.dims() {
                return Err(Error::validation(format!(
                    "inconsistent {} dimensionality: sample 0 has {} dims, sample {i} has {}; \
                     resize to a common size first",
                    spec.method.name(),
                    first.dims(),
                    v.dims()
                )));
            }
        }
    }
    Ok(vectors)
}
