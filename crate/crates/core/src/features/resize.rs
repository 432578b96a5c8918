//! Bilinear image resizing to a fixed target, aspect ratio not preserved.

use crate::data::{ImageBuf, Sample, MIN_IMAGE_EDGE};
use crate::error::{Error, Result};

/// Precomputed 1-D interpolation: source neighbors and the right weight.
fn axis_lerp(target: usize, source: usize) -> Vec<(usize, usize, f64)> {
    let scale = source as f64 / target as f64;
    (0..target)
        .map(|t| {
            // Half-pixel convention: align pixel centers of both grids.
            let s = ((t as f64 + 0.5) * scale - 0.5).clamp(0.0, (source - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(source - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Per-channel bilinear resampling; pixel centers of source and target
/// grids are aligned, and values are rounded half away from zero, then
/// clamped to [0, 255]. Resampling to the source size is the identity.
pub fn resize_buffer(src: &ImageBuf, target_w: usize, target_h: usize) -> Result<ImageBuf> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::validation("resize target must be positive"));
    }
    let xs = axis_lerp(target_w, src.width());
    let ys = axis_lerp(target_h, src.height());

    let mut data = Vec::with_capacity(target_w * target_h * 3);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for c in 0..3 {
                let p00 = src.get(y0, x0, c) as f64;
                let p01 = src.get(y0, x1, c) as f64;
                let p10 = src.get(y1, x0, c) as f64;
                let p11 = src.get(y1, x1, c) as f64;
                let top = p00 + tx * (p01 - p00);
                let bottom = p10 + tx * (p11 - p10);
                let value = top + ty * (bottom - top);
                data.push(value.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuf::from_raw(target_w, target_h, data)
}

/// Resizes a sample's image to a fixed target, keeping its labels. Targets
/// must leave room for at least one feature patch.
pub fn resize_image(sample: &Sample, target_w: usize, target_h: usize) -> Result<Sample> {
    if target_w < MIN_IMAGE_EDGE || target_h < MIN_IMAGE_EDGE {
        return Err(Error::validation(format!(
            "resize target {target_w}x{target_h} is below the {MIN_IMAGE_EDGE}x{MIN_IMAGE_EDGE} minimum"
        )));
    }
    Ok(Sample {
        image: resize_buffer(&sample.image, target_w, target_h)?,
        subject_id: sample.subject_id.clone(),
        view_id: sample.view_id,
        tag: sample.tag.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageBuf;

    fn sample_from(image: ImageBuf) -> Sample {
        Sample {
            image,
            subject_id: "s".into(),
            view_id: 0,
            tag: String::new(),
        }
    }

    #[test]
    fn identity_resize_is_pixel_exact() {
        let img = ImageBuf::from_fn(20, 17, |y, x, c| ((y * 31 + x * 7 + c * 13) % 256) as u8);
        let sample = sample_from(img.clone());
        let out = resize_image(&sample, 20, 17).unwrap();
        assert_eq!(out.image, img);
    }

    #[test]
    fn fixed_target_shape() {
        let img = ImageBuf::from_fn(181, 110, |y, x, _| ((y + x) % 256) as u8);
        let out = resize_image(&sample_from(img), 40, 23).unwrap();
        assert_eq!((out.image.width(), out.image.height()), (40, 23));
    }

    #[test]
    fn checkerboard_center_interpolates_to_midpoint() {
        // The 3x3 center sits exactly between all four source pixels: the
        // bilinear value is 127.5, rounded half away from zero to 128.
        let img = ImageBuf::from_fn(2, 2, |y, x, _| if (y + x) % 2 == 0 { 0 } else { 255 });
        let out = resize_buffer(&img, 3, 3).unwrap();
        assert_eq!(out.get(1, 1, 0), 128);
        // Corners coincide with source pixel centers.
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(0, 2, 0), 255);
        assert_eq!(out.get(2, 0, 0), 255);
        assert_eq!(out.get(2, 2, 0), 0);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuf::from_fn(33, 47, |_, _, _| 93);
        let out = resize_image(&sample_from(img), 20, 61).unwrap();
        assert!(out.image.as_bytes().iter().all(|&b| b == 93));
    }

    #[test]
    fn rejects_tiny_targets() {
        let img = ImageBuf::from_fn(32, 32, |_, _, _| 0);
        assert!(resize_image(&sample_from(img), 15, 32).is_err());
    }
}
