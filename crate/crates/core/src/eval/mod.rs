//! Detection quality metrics, latency benchmark, and overlays.
//!
//! Matching protocol: predictions sorted by descending score each claim the
//! unmatched ground truth they overlap most, if that IoU reaches the
//! threshold. Mean IoU averages over ground truths, so every miss counts as 0.

mod bench;
mod overlay;

pub use bench::{benchmark_inference, BenchReport, MIN_TIMED_ITERS};
pub use overlay::{render_overlay, render_overlay_image, BOX_COLOR, LABEL_COLOR};

use serde::{Deserialize, Serialize};

use crate::codec::{decode_detections, CodecConfig, Detection};
use crate::data::{pad_to_multiple, to_channels, PageAnnotation};
use crate::error::{Error, Result};
use crate::geom::{clamp_to_image, iou, BBox};
use crate::grid::TensorGrid;
use crate::model::{Model, NetOutput};
use crate::nn::MAX_STRIDE;

/// IoU a prediction needs to count as a hit.
pub const MATCH_IOU: f64 = 0.5;

/// Matching outcome on one page.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PageScore {
    pub mean_iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    /// Sum of IoU over matched pairs.
    pub iou_sum: f64,
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

/// Scores `preds` against `gts` with greedy one-to-one matching.
pub fn match_and_score(preds: &[Detection], gts: &[BBox], iou_thresh: f64) -> PageScore {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut taken = vec![false; gts.len()];
    let (mut n_matched, mut iou_sum) = (0, 0.0);
    for i in order {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, g)| (j, iou(&preds[i].bbox, g)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, v)) = best {
            if v >= iou_thresh {
                taken[j] = true;
                n_matched += 1;
                iou_sum += v;
            }
        }
    }
    PageScore {
        mean_iou: ratio(iou_sum, gts.len()),
        precision: ratio(n_matched as f64, preds.len()),
        recall: ratio(n_matched as f64, gts.len()),
        n_gt: gts.len(),
        n_pred: preds.len(),
        n_matched,
        iou_sum,
    }
}

/// Dataset-level scores: sums over pages, so pages weigh by their ground-truth count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_iou: f64,
    pub precision_at_50: f64,
    pub recall_at_50: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    pub per_page: Vec<PageScore>,
}

impl EvalReport {
    pub fn from_pages(per_page: Vec<PageScore>) -> Self {
        let n_gt = per_page.iter().map(|p| p.n_gt).sum();
        let n_pred = per_page.iter().map(|p| p.n_pred).sum();
        let n_matched = per_page.iter().map(|p| p.n_matched).sum();
        let iou_sum: f64 = per_page.iter().map(|p| p.iou_sum).sum();
        EvalReport {
            mean_iou: ratio(iou_sum, n_gt),
            precision_at_50: ratio(n_matched as f64, n_pred),
            recall_at_50: ratio(n_matched as f64, n_gt),
            n_gt,
            n_pred,
            n_matched,
            per_page,
        }
    }

    /// One JSON object per page followed by a summary object.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.per_page.iter().enumerate() {
            let mut v = serde_json::to_value(p).expect("plain struct");
            v["page"] = i.into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "summary": true,
            "mean_iou": self.mean_iou,
            "precision_at_50": self.precision_at_50,
            "recall_at_50": self.recall_at_50,
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "n_matched": self.n_matched,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn table(&self) -> String {
        format!(
            "{:<10} {:>8} {:>10} {:>8} {:>6} {:>6} {:>8}\n{:<10} {:>8.4} {:>10.4} {:>8.4} {:>6} {:>6} {:>8}\n",
            "pages", "mean_iou", "precision", "recall", "gt", "pred", "matched",
            self.per_page.len(),
            self.mean_iou,
            self.precision_at_50,
            self.recall_at_50,
            self.n_gt,
            self.n_pred,
            self.n_matched
        )
    }
}

/// Runs the model on a page of any size and returns detections in page pixels.
///
/// The page is converted to the model's channel count and padded to a
/// multiple of 32; boxes are clipped back to the original page.
pub fn detect(model: &Model, page: &TensorGrid, cfg: &CodecConfig) -> Result<Vec<Detection>> {
    let img = to_channels(page, model.config().input_channels)?;
    let (_, h, w) = img.dims();
    let padded = pad_to_multiple(&img, MAX_STRIDE);
    let out = model.forward(&padded)?;
    let (_, ph, pw) = padded.dims();
    let dets = decode_detections(&out, pw as u32, ph as u32, cfg)?;
    Ok(clip_detections(dets, w as u32, h as u32))
}

fn clip_detections(dets: Vec<Detection>, w: u32, h: u32) -> Vec<Detection> {
    dets.into_iter()
        .filter_map(|d| {
            clamp_to_image(&d.bbox, w, h).map(|bbox| Detection { bbox, score: d.score })
        })
        .collect()
}

/// Decodes precomputed network maps for a page and scores them.
pub fn score_output(out: &NetOutput, ann: &PageAnnotation, cfg: &CodecConfig) -> Result<PageScore> {
    let (_, oh, ow) = out.heatmap.dims();
    let (in_w, in_h) = (ow as u32 * cfg.stride, oh as u32 * cfg.stride);
    let dets = decode_detections(out, in_w, in_h, cfg)?;
    let dets = clip_detections(dets, ann.width, ann.height);
    Ok(match_and_score(&dets, &ann.boxes, MATCH_IOU))
}

/// Detects and scores every page, in order.
pub fn evaluate(model: &Model, dataset: &[(TensorGrid, PageAnnotation)], cfg: &CodecConfig) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("evaluation set is empty".into()));
    }
    cfg.validate()?;
    let rows = dataset
        .iter()
        .map(|(img, ann)| Ok(match_and_score(&detect(model, img, cfg)?, &ann.boxes, MATCH_IOU)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_pages(rows))
}
