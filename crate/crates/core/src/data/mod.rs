//! Page annotations, synthetic pages, cropping, and on-disk formats.

mod annotations;
mod crop;
mod image_io;
mod mthv2;
mod synth;
mod tensor_io;

pub use annotations::{load_annotations, parse_annotations, save_annotations, write_annotations};
pub use crop::{crop_at, pad_to_multiple, random_crop, CROP_KEEP_FRACTION};
pub use image_io::{load_image, save_image, to_channels};
pub use mthv2::{import_mthv2, ImportReport};
pub use synth::{generate_page, Background, SynthConfig, DARK_THRESHOLD};
pub use tensor_io::{decode_tensor, encode_tensor, read_tensor, write_tensor, TENSOR_MAGIC, TENSOR_VERSION};

use crate::error::{Error, Result};
use crate::geom::BBox;

/// Slack allowed when checking that a box lies inside its page.
const BOUNDS_EPS: f64 = 1e-6;

/// Character boxes of one page, in that page's pixel frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PageAnnotation {
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<BBox>,
}

impl PageAnnotation {
    /// Checks that the page has positive size and every box lies inside it.
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Error::Annotation {
            image: self.image_path.clone(),
            message,
        };
        if self.width == 0 || self.height == 0 {
            return Err(err(format!("page size {}x{} is empty", self.width, self.height)));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            let c = b.to_corners();
            if c.x_min < -BOUNDS_EPS
                || c.y_min < -BOUNDS_EPS
                || c.x_max > self.width as f64 + BOUNDS_EPS
                || c.y_max > self.height as f64 + BOUNDS_EPS
            {
                return Err(err(format!(
                    "box {i} ({}, {}, {}, {}) exceeds the {}x{} page",
                    c.x_min, c.y_min, c.x_max, c.y_max, self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

/// Name of the annotation file inside a dataset directory.
pub const ANNOTATION_FILE: &str = "annotations.jsonl";

/// A page image with its boxes.
pub type Sample = (crate::grid::TensorGrid, PageAnnotation);

/// Loads `dir/annotations.jsonl` and every page it names.
///
/// Relative image paths resolve against `dir`. Images are converted to
/// `channels` and must match the annotated size.
pub fn load_dataset(dir: impl AsRef<std::path::Path>, channels: usize) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let pages = load_annotations(dir.join(ANNOTATION_FILE))?;
    pages
        .into_iter()
        .map(|ann| {
            let path = dir.join(&ann.image_path);
            let img = load_image(&path, channels)?;
            let (_, h, w) = img.dims();
            if (w as u32, h as u32) != (ann.width, ann.height) {
                return Err(Error::format(
                    &path,
                    format!("image is {w}x{h} but annotated as {}x{}", ann.width, ann.height),
                ));
            }
            Ok((img, ann))
        })
        .collect()
}

/// Number of leading pages used for training when `holdout` of `n` are kept back.
///
/// At least one page always remains for training.
pub fn train_count(n: usize, holdout: f64) -> usize {
    let test = ((n as f64) * holdout.clamp(0.0, 1.0)).round() as usize;
    n - test.min(n.saturating_sub(1))
}
