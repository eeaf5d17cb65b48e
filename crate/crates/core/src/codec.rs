//! Conversion between boxes and the center-keypoint map representation.
//!
//! Encoding splats one elliptical Gaussian per box onto a heatmap at
//! `1/stride` resolution and stores the normalized size and sub-pixel center
//! offset at the box's center pixel. Decoding finds heatmap peaks, reads the
//! size/offset maps there, rescales to input pixels, and applies greedy NMS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{clamp_to_image, iou, BBox};
use crate::grid::TensorGrid;
use crate::model::NetOutput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Input pixels per output pixel.
    pub stride: u32,
    /// Gaussian sigma per axis is the output-frame box extent divided by this.
    pub sigma_divisor: f64,
    /// Minimum heatmap score for a peak.
    pub conf_thresh: f64,
    /// Boxes overlapping a kept box above this IoU are suppressed.
    pub nms_iou: f64,
    /// Side of the local-maximum window (odd).
    pub peak_window: usize,
    /// Maximum number of peaks considered per page.
    pub top_k: usize,
}

/// Smallest Gaussian sigma, in output pixels.
pub const MIN_SIGMA: f64 = 0.5;

/// Gaussians are rasterized within this many sigmas of the center; beyond it
/// the kernel is below 1.6e-8.
const GAUSSIAN_RADIUS_SIGMAS: f64 = 6.0;

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            stride: 4,
            sigma_divisor: 10.0,
            conf_thresh: 0.3,
            nms_iou: 0.5,
            peak_window: 3,
            top_k: 500,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        if !(self.sigma_divisor > 0.0) {
            return bad(format!("sigma_divisor must be positive, got {}", self.sigma_divisor));
        }
        if !(self.conf_thresh > 0.0 && self.conf_thresh < 1.0) {
            return bad(format!("conf_thresh must lie in (0, 1), got {}", self.conf_thresh));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad(format!("nms_iou must lie in (0, 1), got {}", self.nms_iou));
        }
        if self.peak_window.is_multiple_of(2) {
            return bad(format!("peak_window must be odd, got {}", self.peak_window));
        }
        if self.top_k == 0 {
            return bad("top_k must be positive".into());
        }
        Ok(())
    }
}

/// Ground-truth maps for one page.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    /// `1 x H x W`, Gaussian splats combined by per-pixel max.
    pub heatmap: TensorGrid,
    /// `2 x H x W`: channel 0 is height / input height, channel 1 width / input width.
    pub size_map: TensorGrid,
    /// `2 x H x W`: channel 0 is the x offset, channel 1 the y offset, both in `[0, 1)`.
    pub offset_map: TensorGrid,
    /// `1 x H x W`, 1 at each object's center pixel.
    pub mask: TensorGrid,
    /// Number of boxes encoded.
    pub n_objects: usize,
    /// Boxes whose center pixel was already claimed by an earlier box.
    pub collisions: usize,
}

impl TargetSet {
    /// The maps a perfect network would output for this page.
    pub fn as_prediction(&self) -> NetOutput {
        NetOutput {
            heatmap: self.heatmap.clone(),
            size: self.size_map.clone(),
            offset: self.offset_map.clone(),
        }
    }

    /// Pixels where the mask is set, as `(x, y)`.
    pub fn centers(&self) -> Vec<(usize, usize)> {
        let w = self.mask.width();
        self.mask
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, _)| (i % w, i / w))
            .collect()
    }
}

/// A decoded box with its heatmap score, in input-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

/// Unnormalized axis-aligned 2-D Gaussian, 1 at `(px, py)`.
pub fn gaussian_value(x: f64, y: f64, px: f64, py: f64, sigma_x: f64, sigma_y: f64) -> f64 {
    let dx = x - px;
    let dy = y - py;
    (-(dx * dx / (2.0 * sigma_x * sigma_x) + dy * dy / (2.0 * sigma_y * sigma_y))).exp()
}

/// Gaussian sigmas (output pixels) for a box of input size `w x h`.
pub fn box_sigmas(w: f64, h: f64, cfg: &CodecConfig) -> (f64, f64) {
    let s = cfg.stride as f64;
    (
        (w / s / cfg.sigma_divisor).max(MIN_SIGMA),
        (h / s / cfg.sigma_divisor).max(MIN_SIGMA),
    )
}

/// Encodes `boxes` (input pixels) of an `in_w x in_h` page into target maps.
pub fn encode_targets(boxes: &[BBox], in_w: u32, in_h: u32, cfg: &CodecConfig) -> Result<TargetSet> {
    cfg.validate()?;
    let stride = cfg.stride;
    if in_w == 0 || in_h == 0 || !in_w.is_multiple_of(stride) || !in_h.is_multiple_of(stride) {
        return Err(Error::DimensionMismatch(format!(
            "image {in_w}x{in_h} is not divisible by stride {stride}"
        )));
    }
    let (out_w, out_h) = ((in_w / stride) as usize, (in_h / stride) as usize);
    let mut heatmap = TensorGrid::zeros(1, out_h, out_w);
    let mut size_map = TensorGrid::zeros(2, out_h, out_w);
    let mut offset_map = TensorGrid::zeros(2, out_h, out_w);
    let mut mask = TensorGrid::zeros(1, out_h, out_w);
    let mut collisions = 0;
    let s = stride as f64;

    for (i, raw) in boxes.iter().enumerate() {
        let b = clamp_to_image(raw, in_w, in_h).ok_or_else(|| {
            Error::InvalidBox(format!("box {i} lies outside the {in_w}x{in_h} image"))
        })?;
        if (b.w() / s).round() == 0.0 || (b.h() / s).round() == 0.0 {
            return Err(Error::InvalidBox(format!(
                "box {i} ({} x {} px) vanishes at stride {stride}",
                b.w(),
                b.h()
            )));
        }
        let (pxc, pyc) = (b.cx() / s, b.cy() / s);
        let gx = (pxc.floor() as usize).min(out_w - 1);
        let gy = (pyc.floor() as usize).min(out_h - 1);
        let (sx, sy) = box_sigmas(b.w(), b.h(), cfg);
        splat_gaussian(&mut heatmap, gx, gy, sx, sy);

        if mask.get(0, gy, gx) > 0.0 {
            collisions += 1;
            log::warn!("box {i} shares center pixel ({gx}, {gy}) with an earlier box; overwriting");
        }
        mask.set(0, gy, gx, 1.0);
        size_map.set(0, gy, gx, (b.h() / in_h as f64) as f32);
        size_map.set(1, gy, gx, (b.w() / in_w as f64) as f32);
        offset_map.set(0, gy, gx, (pxc - gx as f64) as f32);
        offset_map.set(1, gy, gx, (pyc - gy as f64) as f32);
    }

    Ok(TargetSet {
        heatmap,
        size_map,
        offset_map,
        mask,
        n_objects: boxes.len(),
        collisions,
    })
}

fn splat_gaussian(heatmap: &mut TensorGrid, gx: usize, gy: usize, sx: f64, sy: f64) {
    let (h, w) = (heatmap.height() as isize, heatmap.width() as isize);
    let rx = (GAUSSIAN_RADIUS_SIGMAS * sx).ceil() as isize;
    let ry = (GAUSSIAN_RADIUS_SIGMAS * sy).ceil() as isize;
    let (cx, cy) = (gx as isize, gy as isize);
    for y in (cy - ry).max(0)..=(cy + ry).min(h - 1) {
        for x in (cx - rx).max(0)..=(cx + rx).min(w - 1) {
            let v = gaussian_value(x as f64, y as f64, cx as f64, cy as f64, sx, sy) as f32;
            let (xu, yu) = (x as usize, y as usize);
            if v > heatmap.get(0, yu, xu) {
                heatmap.set(0, yu, xu, v);
            }
        }
    }
}

/// A heatmap local maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// Local maxima of channel 0 scoring at least `conf_thresh`, best first.
///
/// On a plateau only the first pixel in `(y, x)` order survives.
pub fn extract_peaks(heatmap: &TensorGrid, cfg: &CodecConfig) -> Vec<Peak> {
    let (h, w) = (heatmap.height(), heatmap.width());
    let r = (cfg.peak_window / 2) as isize;
    let plane = heatmap.plane(0);
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = plane[y * w + x];
            if (v as f64) < cfg.conf_thresh {
                continue;
            }
            let mut is_peak = true;
            'window: for dy in -r..=r {
                let ny = y as isize + dy;
                if ny < 0 || ny >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let nx = x as isize + dx;
                    if nx < 0 || nx >= w as isize || (dx == 0 && dy == 0) {
                        continue;
                    }
                    let nv = plane[ny as usize * w + nx as usize];
                    let earlier = (dy, dx) < (0, 0);
                    if nv > v || (earlier && nv == v) {
                        is_peak = false;
                        break 'window;
                    }
                }
            }
            if is_peak {
                peaks.push(Peak {
                    x,
                    y,
                    score: v as f64,
                });
            }
        }
    }
    // Stable sort keeps (y, x) order among equal scores.
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score));
    peaks.truncate(cfg.top_k);
    peaks
}

/// Greedy non-maximum suppression, best score first.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_thresh) {
            kept.push(d);
        }
    }
    kept
}

/// Decodes network maps into detections for an `in_w x in_h` input.
pub fn decode_detections(out: &NetOutput, in_w: u32, in_h: u32, cfg: &CodecConfig) -> Result<Vec<Detection>> {
    let (_, out_h, out_w) = out.heatmap.dims();
    if out.size.dims() != (2, out_h, out_w) || out.offset.dims() != (2, out_h, out_w) {
        return Err(Error::DimensionMismatch(format!(
            "heatmap {:?}, size {:?}, offset {:?}",
            out.heatmap.dims(),
            out.size.dims(),
            out.offset.dims()
        )));
    }
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    let mut dets = Vec::new();
    for p in extract_peaks(&out.heatmap, cfg) {
        let ox = out.offset.get(0, p.y, p.x) as f64;
        let oy = out.offset.get(1, p.y, p.x) as f64;
        let h = out.size.get(0, p.y, p.x) as f64 * in_h as f64;
        let w = out.size.get(1, p.y, p.x) as f64 * in_w as f64;
        let cx = (p.x as f64 + ox) * sx;
        let cy = (p.y as f64 + oy) * sy;
        let Ok(b) = BBox::new(cx, cy, w, h) else {
            continue;
        };
        if let Some(b) = clamp_to_image(&b, in_w, in_h) {
            dets.push(Detection {
                bbox: b,
                score: p.score.clamp(0.0, 1.0),
            });
        }
    }
    Ok(nms(&dets, cfg.nms_iou))
}
