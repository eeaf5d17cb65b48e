//! Mini-batch training over annotated pages.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_targets, CodecConfig, TargetSet};
use crate::data::{random_crop, PageAnnotation};
use crate::error::{Error, Result};
use crate::grid::TensorGrid;
use crate::loss::LossWeights;
use crate::model::Model;
use crate::nn::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Side of the square random crop fed to the network.
    pub input_size: usize,
    pub seed: u64,
    pub codec: CodecConfig,
    pub weights: LossWeights,
}

impl TrainConfig {
    /// Full-scale settings: 512 crops, batch 8, learning rate 1e-6.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr: 1e-6,
            input_size: 512,
            seed: 0,
            codec: CodecConfig::default(),
            weights: LossWeights::default(),
        }
    }

    /// Desk-scale settings for 128x128 synthetic pages and the toy network.
    pub fn toy() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            lr: 2e-3,
            input_size: 128,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} is invalid", self.lr)));
        }
        self.codec.validate()?;
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_heatmap: f64,
    pub mean_size: f64,
    pub mean_offset: f64,
    pub seconds: f64,
}

/// Keeps boxes the output grid can represent: at least one stride on each side.
fn trainable_boxes(ann: &PageAnnotation, stride: u32) -> Vec<crate::geom::BBox> {
    let s = stride as f64;
    ann.boxes.iter().copied().filter(|b| b.w() >= s && b.h() >= s).collect()
}

/// Crops and encodes one page for a training step.
pub fn prepare_sample<R: rand::Rng>(
    image: &TensorGrid,
    ann: &PageAnnotation,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(TensorGrid, TargetSet)> {
    let (crop, crop_ann) = random_crop(image, ann, cfg.input_size, cfg.input_size, rng)?;
    let boxes = trainable_boxes(&crop_ann, cfg.codec.stride);
    let t = encode_targets(&boxes, cfg.input_size as u32, cfg.input_size as u32, &cfg.codec)?;
    Ok((crop, t))
}

/// Trains `model` in place, calling `progress` after every epoch.
///
/// Page order and crop windows come from a generator seeded with `cfg.seed`,
/// so identical inputs give identical parameters.
pub fn train<F: FnMut(&EpochStats)>(
    model: &mut Model,
    pages: &[(TensorGrid, PageAnnotation)],
    cfg: &TrainConfig,
    mut progress: F,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if pages.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..pages.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let samples = chunk
                .iter()
                .map(|&i| prepare_sample(&pages[i].0, &pages[i].1, cfg, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let batch: Vec<_> = samples.iter().map(|(img, t)| (img, t)).collect();
            let r = model.train_step(&batch, &mut opt, &cfg.weights)?;
            for (s, v) in sums.iter_mut().zip([r.total, r.l_h, r.l_s, r.l_offset]) {
                *s += v;
            }
            steps += 1;
        }
        let n = steps as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            steps,
            mean_loss: sums[0] / n,
            mean_heatmap: sums[1] / n,
            mean_size: sums[2] / n,
            mean_offset: sums[3] / n,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&stats);
        history.push(stats);
    }
    Ok(history)
}
