//! Seeded synthetic corpus: a desk-scale stand-in for real image datasets.
//!
//! Each subject gets a fixed pseudo-random texture; each view perturbs it
//! with an integer wrap-around translation, a per-channel brightness offset
//! (illumination-color jitter), and optional per-pixel Gaussian noise.
//! Equal seeds give bit-identical pixels.

use rand::RngExt;
use rand_distr::{Distribution, Normal};

use crate::data::{ImageBuf, Sample};
use crate::error::{Error, Result};
use crate::seeding::{self, streams};

// Texture recipe constants. Component ranges sum to [112.5, 143.5], so with
// the ±10 per-channel brightness offsets no pixel can clamp while
// noise_sigma = 0 — views of a subject then differ per channel by an exact
// constant. The spreads sit near the jitter scale on purpose: subjects
// must be distinguishable but not trivially so, otherwise every feature
// saturates and comparisons between methods become meaningless.
const BASE_MEAN: f64 = 128.0;
const BASE_SPREAD: f64 = 3.0;
const LATTICE_CELL: usize = 48;
const LATTICE_SPREAD: f64 = 2.5;
const GRAIN_MIN: f64 = 4.0;
const GRAIN_MAX: f64 = 10.0;
const BRIGHTNESS_MAX: i32 = 10;

/// Per-subject texture: a per-channel base color, plus a smooth bilinear
/// color field, plus white grain with a smoothly varying local amplitude.
/// Values are kept as f64 so view jitter is applied before quantization.
fn subject_texture(width: usize, height: usize, seed: u64, subject: u64) -> Vec<f64> {
    let mut rng = seeding::rng(seed, streams::TEXTURE, subject, 0);

    let base: [f64; 3] = std::array::from_fn(|_| {
        BASE_MEAN + rng.random_range(-BASE_SPREAD..=BASE_SPREAD)
    });

    let ny = height.div_ceil(LATTICE_CELL) + 1;
    let nx = width.div_ceil(LATTICE_CELL) + 1;
    let mut color_nodes = vec![0.0f64; 3 * ny * nx];
    for node in color_nodes.iter_mut() {
        *node = rng.random_range(-LATTICE_SPREAD..=LATTICE_SPREAD);
    }
    let mut grain_nodes = vec![0.0f64; ny * nx];
    for node in grain_nodes.iter_mut() {
        *node = rng.random_range(GRAIN_MIN..=GRAIN_MAX);
    }

    let lerp2 = |nodes: &[f64], y: usize, x: usize| {
        let fy = y as f64 / LATTICE_CELL as f64;
        let fx = x as f64 / LATTICE_CELL as f64;
        let (iy, ix) = (fy as usize, fx as usize);
        let (ty, tx) = (fy - iy as f64, fx - ix as f64);
        let n00 = nodes[iy * nx + ix];
        let n01 = nodes[iy * nx + ix + 1];
        let n10 = nodes[(iy + 1) * nx + ix];
        let n11 = nodes[(iy + 1) * nx + ix + 1];
        (1.0 - ty) * ((1.0 - tx) * n00 + tx * n01) + ty * ((1.0 - tx) * n10 + tx * n11)
    };

    let mut texture = vec![0.0f64; height * width * 3];
    for y in 0..height {
        for x in 0..width {
            let grain_amp = lerp2(&grain_nodes, y, x);
            for c in 0..3 {
                let field = lerp2(&color_nodes[c * ny * nx..(c + 1) * ny * nx], y, x);
                let grain = grain_amp * rng.random_range(-1.0..=1.0);
                texture[(y * width + x) * 3 + c] = base[c] + field + grain;
            }
        }
    }
    texture
}

/// Generates `n_subjects · views_per_subject` samples, subject-major.
///
/// Each view applies, in order: a wrap-around integer translation uniform
/// in `[-shift_max, +shift_max]²`, an integer brightness offset uniform in
/// `[-10, +10]` drawn independently per color channel, and per-pixel
/// Gaussian noise of standard deviation `noise_sigma`; the result is
/// rounded and clamped to [0, 255]. The same seed reproduces identical
/// pixel bytes.
pub fn generate_synthetic(
    n_subjects: usize,
    views_per_subject: usize,
    width: usize,
    height: usize,
    noise_sigma: f64,
    shift_max: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if n_subjects < 2 {
        return Err(Error::validation("need at least 2 subjects"));
    }
    if views_per_subject < 2 {
        return Err(Error::validation("need at least 2 views per subject"));
    }
    if width < 32 || height < 32 {
        return Err(Error::validation(format!(
            "synthetic images must be at least 32x32, got {width}x{height}"
        )));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::validation(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    let noise = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let shift = shift_max as i64;

    let mut samples = Vec::with_capacity(n_subjects * views_per_subject);
    for s in 0..n_subjects {
        let texture = subject_texture(width, height, seed, s as u64);
        let subject_id = format!("s{s:04}");

        for v in 0..views_per_subject {
            let mut rng = seeding::rng(seed, streams::VIEW_JITTER, s as u64, v as u64);
            let dy = rng.random_range(-shift..=shift);
            let dx = rng.random_range(-shift..=shift);
            let offsets: [f64; 3] = std::array::from_fn(|_| {
                rng.random_range(-BRIGHTNESS_MAX..=BRIGHTNESS_MAX) as f64
            });

            let mut data = Vec::with_capacity(height * width * 3);
            for y in 0..height {
                let sy = (y as i64 + dy).rem_euclid(height as i64) as usize;
                for x in 0..width {
                    let sx = (x as i64 + dx).rem_euclid(width as i64) as usize;
                    for c in 0..3 {
                        let mut value = texture[(sy * width + sx) * 3 + c] + offsets[c];
                        if let Some(n) = &noise {
                            value += n.sample(&mut rng);
                        }
                        data.push(value.round().clamp(0.0, 255.0) as u8);
                    }
                }
            }
            samples.push(Sample {
                image: ImageBuf::from_raw(width, height, data)?,
                subject_id: subject_id.clone(),
                view_id: v as u32,
                tag: format!(
                    "dx{dx}_dy{dy}_b{:+.0}{:+.0}{:+.0}",
                    offsets[0], offsets[1], offsets[2]
                ),
            });
        }
    }
    Ok(samples)
}
