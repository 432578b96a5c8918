//! Dataset loading, synthesis, and subject-disjoint splitting.

mod folds;
mod manifest;
mod synthetic;

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

pub use folds::{
    assign_folds, build_query_gallery, training_indices, FoldAssignment, QueryGallerySplit,
};
pub use manifest::{load_dataset, read_manifest, write_manifest, ManifestEntry};
pub use synthetic::generate_synthetic;

/// Minimum image edge length: one 16×16 patch must fit.
pub const MIN_IMAGE_EDGE: usize = 16;

/// Row-major 8-bit RGB image. Index order is (row, column, channel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuf {
    /// Wraps raw row-major RGB bytes; `data.len()` must be `width·height·3`.
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::validation(format!(
                "image buffer holds {} bytes, expected {} for {}x{} RGB",
                data.len(),
                width * height * 3,
                width,
                height
            )));
        }
        Ok(ImageBuf {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` for every position.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        ImageBuf {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Intensity at row `y`, column `x`, channel `c`.
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * 3 + c]
    }

    /// Raw row-major RGB bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }
}

/// One RGB image with its identity labels; the unit of re-identification.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: ImageBuf,
    /// Opaque identity label; all views of one physical subject share it.
    pub subject_id: String,
    /// Per-subject image index.
    pub view_id: u32,
    /// Free-form perspective/lighting label.
    pub tag: String,
}

/// Checks dataset-level invariants: every image at least
/// [`MIN_IMAGE_EDGE`]² and every `(subject_id, view_id)` pair unique.
pub fn validate_dataset(samples: &[Sample]) -> Result<()> {
    let mut seen: HashSet<(&str, u32)> = HashSet::with_capacity(samples.len());
    for sample in samples {
        if sample.image.width() < MIN_IMAGE_EDGE || sample.image.height() < MIN_IMAGE_EDGE {
            return Err(Error::validation(format!(
                "image for ({}, {}) is {}x{}, below the {}x{} minimum",
                sample.subject_id,
                sample.view_id,
                sample.image.width(),
                sample.image.height(),
                MIN_IMAGE_EDGE,
                MIN_IMAGE_EDGE
            )));
        }
        if !seen.insert((sample.subject_id.as_str(), sample.view_id)) {
            return Err(Error::validation(format!(
                "duplicate (subject_id, view_id) pair ({}, {})",
                sample.subject_id, sample.view_id
            )));
        }
    }
    Ok(())
}

/// Groups sample indices by subject, subjects in ascending order and
/// indices in dataset order.
pub fn indices_by_subject(samples: &[Sample]) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, sample) in samples.iter().enumerate() {
        map.entry(sample.subject_id.as_str()).or_default().push(i);
    }
    map
}
