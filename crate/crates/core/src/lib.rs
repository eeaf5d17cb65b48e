//! Anchorless character detection for document pages.
//!
//! Each character is represented by its center keypoint: a Gaussian peak on
//! a heatmap at 1/4 input resolution, plus the box size and sub-pixel center
//! offset read at that peak. The crate covers the full pipeline:
//!
//! - [`geom`] and [`grid`]: boxes, IoU, and the dense map type.
//! - [`codec`]: boxes to target maps and network maps back to detections.
//! - [`loss`]: focal heatmap loss plus masked L1 size/offset losses.
//! - [`model`] and [`nn`]: the parallel multi-resolution network, training step, checkpoints.
//! - [`data`]: synthetic pages, annotation files, cropping, tensor files.
//! - [`eval`]: matching metrics, latency benchmark, overlays.
//! - [`cli`]: the `hrcenternet` command-line front end.

pub mod cli;
pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod geom;
pub mod grid;
pub mod loss;
pub mod model;
pub mod nn;
pub mod train;

pub use codec::{decode_detections, encode_targets, CodecConfig, Detection, TargetSet};
pub use error::{Error, Result};
pub use geom::{clamp_to_image, iou, BBox};
pub use grid::{Grid, TensorGrid};
pub use loss::{LossReport, LossWeights};
pub use model::{Model, ModelConfig, NetOutput};
