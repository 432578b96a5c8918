//! Patch statistics and column quantiles.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::features::{FeatureMethod, FeatureVector};
use crate::Scalar;

/// Statistic computed per 16×16 (by default) patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchMode {
    /// Mean over all pixels and channels; one value per patch.
    Brightness,
    /// Per-channel mean; three values per patch.
    AvgColor,
    /// Per-channel population standard deviation; three values per patch.
    ColorVariance,
}

impl PatchMode {
    fn method(self) -> FeatureMethod {
        match self {
            PatchMode::Brightness => FeatureMethod::Brightness,
            PatchMode::AvgColor => FeatureMethod::AvgColor,
            PatchMode::ColorVariance => FeatureMethod::ColorVariance,
        }
    }
}

/// Patch grid for an axis of length `dim`: stride, rows, and columns.
/// Patches are top-left anchored; a patch overrunning the border is dropped.
pub fn patch_grid(
    width: usize,
    height: usize,
    patch: usize,
    overlap_fraction: f64,
) -> Result<(usize, usize, usize)> {
    if patch == 0 {
        return Err(Error::validation("patch size must be positive"));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::validation(format!(
            "overlap fraction must lie in [0, 1), got {overlap_fraction}"
        )));
    }
    if width < patch || height < patch {
        return Err(Error::validation(format!(
            "image {width}x{height} is smaller than one {patch}x{patch} patch"
        )));
    }
    let stride = ((patch as f64) * (1.0 - overlap_fraction)).round().max(1.0) as usize;
    let rows = (height - patch) / stride + 1;
    let cols = (width - patch) / stride + 1;
    Ok((stride, rows, cols))
}

/// Extracts one statistic per patch over a top-left-anchored overlapping
/// grid (default stride: half a patch). Values are concatenated row-major:
/// patch rows outer, patch columns inner, channels innermost.
pub fn extract_patch_features<F: Scalar>(
    sample: &Sample,
    mode: PatchMode,
    patch: usize,
    overlap_fraction: f64,
) -> Result<FeatureVector<F>> {
    let img = &sample.image;
    let (stride, rows, cols) = patch_grid(img.width(), img.height(), patch, overlap_fraction)?;
    let pixels_per_patch = (patch * patch) as f64;

    let per_patch = match mode {
        PatchMode::Brightness => 1,
        PatchMode::AvgColor | PatchMode::ColorVariance => 3,
    };
    let mut values = Vec::with_capacity(rows * cols * per_patch);
    for py in 0..rows {
        for px in 0..cols {
            let (y0, x0) = (py * stride, px * stride);
            let mut sum = [0.0f64; 3];
            let mut sum_sq = [0.0f64; 3];
            for y in y0..y0 + patch {
                for x in x0..x0 + patch {
                    for c in 0..3 {
                        let v = img.get(y, x, c) as f64;
                        sum[c] += v;
                        sum_sq[c] += v * v;
                    }
                }
            }
            match mode {
                PatchMode::Brightness => {
                    values.push(F::cast(
                        (sum[0] + sum[1] + sum[2]) / (3.0 * pixels_per_patch),
                    ));
                }
                PatchMode::AvgColor => {
                    for c in 0..3 {
                        values.push(F::cast(sum[c] / pixels_per_patch));
                    }
                }
                PatchMode::ColorVariance => {
                    for c in 0..3 {
                        let mean = sum[c] / pixels_per_patch;
                        // Population variance; max(0) guards rounding.
                        let var = (sum_sq[c] / pixels_per_patch - mean * mean).max(0.0);
                        values.push(F::cast(var.sqrt()));
                    }
                }
            }
        }
    }
    FeatureVector::new(values, mode.method())
}

/// Linear-interpolation quantile of already-sorted values: index q·(n−1),
/// fractional part interpolated between neighbors.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let t = pos - lo as f64;
    sorted[lo] + t * (sorted[hi] - sorted[lo])
}

/// Per pixel column, pools all values across rows and channels and computes
/// the requested quantiles. Output is column-major: for each column, its
/// quantiles in ascending level order; dims = width · |quantiles|.
pub fn extract_column_quantiles<F: Scalar>(
    sample: &Sample,
    quantiles: &[f64],
) -> Result<FeatureVector<F>> {
    if quantiles.is_empty() {
        return Err(Error::validation("need at least one quantile level"));
    }
    for &q in quantiles {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::validation(format!(
                "quantile level {q} outside [0, 1]"
            )));
        }
    }
    let mut levels = quantiles.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("validated finite levels"));

    let img = &sample.image;
    let mut values = Vec::with_capacity(img.width() * levels.len());
    let mut column = Vec::with_capacity(img.height() * 3);
    for x in 0..img.width() {
        column.clear();
        for y in 0..img.height() {
            for c in 0..3 {
                column.push(img.get(y, x, c) as f64);
            }
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("pixel values are finite"));
        for &q in &levels {
            values.push(F::cast(sorted_quantile(&column, q)));
        }
    }
    FeatureVector::new(values, FeatureMethod::ColumnQuantile)
}
