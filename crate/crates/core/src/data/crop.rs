//! Random crops with box bookkeeping.

use rand::Rng;

use super::PageAnnotation;
use crate::error::{Error, Result};
use crate::geom::clamp_to_image;
use crate::grid::TensorGrid;
use crate::nn::MAX_STRIDE;

/// A box survives a crop when at least this fraction of its area stays inside.
pub const CROP_KEEP_FRACTION: f64 = 0.25;

fn check_crop(image: &TensorGrid, crop_w: usize, crop_h: usize) -> Result<()> {
    let (_, h, w) = image.dims();
    if crop_w == 0 || crop_h == 0 || !crop_w.is_multiple_of(MAX_STRIDE) || !crop_h.is_multiple_of(MAX_STRIDE) {
        return Err(Error::InvalidConfig(format!(
            "crop {crop_w}x{crop_h} must be positive and divisible by {MAX_STRIDE}"
        )));
    }
    if crop_w > w || crop_h > h {
        return Err(Error::DimensionMismatch(format!(
            "crop {crop_w}x{crop_h} is larger than the {w}x{h} image"
        )));
    }
    Ok(())
}

/// Cuts the window with top-left corner `(x0, y0)`.
///
/// Boxes move into crop coordinates; those keeping less than
/// [`CROP_KEEP_FRACTION`] of their area are dropped, the rest are clamped.
pub fn crop_at(
    image: &TensorGrid,
    ann: &PageAnnotation,
    x0: usize,
    y0: usize,
    crop_w: usize,
    crop_h: usize,
) -> Result<(TensorGrid, PageAnnotation)> {
    check_crop(image, crop_w, crop_h)?;
    let (c, h, w) = image.dims();
    if x0 + crop_w > w || y0 + crop_h > h {
        return Err(Error::DimensionMismatch(format!(
            "window at ({x0}, {y0}) of size {crop_w}x{crop_h} leaves the {w}x{h} image"
        )));
    }
    let mut out = TensorGrid::zeros(c, crop_h, crop_w);
    for ch in 0..c {
        let src = image.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..crop_h {
            let s = (y0 + y) * w + x0;
            dst[y * crop_w..(y + 1) * crop_w].copy_from_slice(&src[s..s + crop_w]);
        }
    }
    let boxes = ann
        .boxes
        .iter()
        .filter_map(|b| {
            let moved = b.translate(-(x0 as f64), -(y0 as f64));
            let kept = clamp_to_image(&moved, crop_w as u32, crop_h as u32)?;
            (kept.area() >= CROP_KEEP_FRACTION * b.area()).then_some(kept)
        })
        .collect();
    Ok((
        out,
        PageAnnotation {
            image_path: ann.image_path.clone(),
            width: crop_w as u32,
            height: crop_h as u32,
            boxes,
        },
    ))
}

/// [`crop_at`] at a window drawn uniformly from `rng`.
pub fn random_crop<R: Rng + ?Sized>(
    image: &TensorGrid,
    ann: &PageAnnotation,
    crop_w: usize,
    crop_h: usize,
    rng: &mut R,
) -> Result<(TensorGrid, PageAnnotation)> {
    check_crop(image, crop_w, crop_h)?;
    let (_, h, w) = image.dims();
    let x0 = rng.gen_range(0..=w - crop_w);
    let y0 = rng.gen_range(0..=h - crop_h);
    crop_at(image, ann, x0, y0, crop_w, crop_h)
}

/// Pads on the right and bottom, replicating edge pixels, up to the next
/// multiple of `multiple` in each dimension. Box coordinates are unaffected.
pub fn pad_to_multiple(image: &TensorGrid, multiple: usize) -> TensorGrid {
    let (c, h, w) = image.dims();
    let ph = h.div_ceil(multiple).max(1) * multiple;
    let pw = w.div_ceil(multiple).max(1) * multiple;
    if (ph, pw) == (h, w) {
        return image.clone();
    }
    let mut out = TensorGrid::zeros(c, ph, pw);
    for ch in 0..c {
        let src = image.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..ph {
            let sy = y.min(h - 1);
            for x in 0..pw {
                dst[y * pw + x] = src[sy * w + x.min(w - 1)];
            }
        }
    }
    out
}
