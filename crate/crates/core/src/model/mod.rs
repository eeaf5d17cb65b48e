//! Detector model: configuration, inference, and the optimization step.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::TargetSet;
use crate::error::{Error, Result};
use crate::grid::{Grid, TensorGrid};
use crate::loss::{total_loss, LossReport, LossWeights};
use crate::nn::{Adam, ForwardOptions, Module, NetCache, Network, Scalar, Tensor, MAX_STRIDE, OUTPUT_STRIDE};

pub use checkpoint::{load_model, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Output channels: heatmap, height, width, x offset, y offset.
pub const HEAD_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width `C` of the highest-resolution branch; branch `i` has `C * 2^i`.
    pub base_channels: usize,
    /// Multi-resolution modules in stages 2, 3 and 4.
    pub stage_block_counts: [usize; 3],
    /// Basic blocks per branch inside each module.
    pub blocks_per_branch: usize,
    /// Bottlenecks in stage 1.
    pub stage1_bottlenecks: usize,
    pub input_channels: usize,
    pub head_channels: usize,
}

impl ModelConfig {
    /// Laptop-scale preset used by default and by the test suite.
    pub fn toy() -> Self {
        ModelConfig {
            base_channels: 8,
            stage_block_counts: [1, 1, 1],
            blocks_per_branch: 2,
            stage1_bottlenecks: 2,
            input_channels: 1,
            head_channels: HEAD_CHANNELS,
        }
    }

    /// Full-width preset (`C = 32`, modules 1/4/3, four blocks per branch).
    pub fn paper_w32() -> Self {
        ModelConfig {
            base_channels: 32,
            stage_block_counts: [1, 4, 3],
            blocks_per_branch: 4,
            stage1_bottlenecks: 4,
            input_channels: 3,
            head_channels: HEAD_CHANNELS,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "paper-w32" => Ok(Self::paper_w32()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?} (expected toy or paper-w32)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.base_channels == 0 {
            return bad("base_channels must be positive");
        }
        if self.stage_block_counts.contains(&0) {
            return bad("every stage needs at least one multi-resolution module");
        }
        if self.blocks_per_branch == 0 || self.stage1_bottlenecks == 0 {
            return bad("block counts must be positive");
        }
        if !(self.input_channels == 1 || self.input_channels == 3) {
            return bad("input_channels must be 1 or 3");
        }
        if self.head_channels != HEAD_CHANNELS {
            return bad("head_channels must be 5");
        }
        Ok(())
    }

    /// Channel width of branch `i`.
    pub fn branch_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

/// The five prediction maps at `1/4` input resolution, all in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput<T = f32> {
    pub heatmap: Grid<T>,
    /// Channel 0 normalized height, channel 1 normalized width.
    pub size: Grid<T>,
    /// Channel 0 x offset, channel 1 y offset.
    pub offset: Grid<T>,
}

impl<T: Scalar> NetOutput<T> {
    fn from_sample(t: &Tensor<T>, i: usize) -> Self {
        let full = Grid::from_vec(t.c, t.h, t.w, t.sample(i).to_vec()).expect("head output");
        NetOutput {
            heatmap: full.channel_slice(0, 1),
            size: full.channel_slice(1, 2),
            offset: full.channel_slice(3, 2),
        }
    }

    fn write_into(&self, t: &mut Tensor<T>, i: usize) {
        let dst = t.sample_mut(i);
        let a = self.heatmap.len();
        let b = self.size.len();
        dst[..a].copy_from_slice(self.heatmap.as_slice());
        dst[a..a + b].copy_from_slice(self.size.as_slice());
        dst[a + b..].copy_from_slice(self.offset.as_slice());
    }
}

/// Stacks same-sized images into a batch tensor.
pub fn batch_tensor<T: Scalar>(images: &[&TensorGrid], channels: usize) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::DimensionMismatch("empty batch".into()))?;
    let (c, h, w) = first.dims();
    if c != channels {
        return Err(Error::DimensionMismatch(format!(
            "model expects {channels} input channels, image has {c}"
        )));
    }
    if h % MAX_STRIDE != 0 || w % MAX_STRIDE != 0 {
        return Err(Error::DimensionMismatch(format!(
            "input {w}x{h} is not divisible by {MAX_STRIDE}"
        )));
    }
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if img.dims() != (c, h, w) {
            return Err(Error::DimensionMismatch(format!(
                "batch images differ: {:?} vs {:?}",
                img.dims(),
                (c, h, w)
            )));
        }
        data.extend(img.as_slice().iter().map(|&v| T::lit(v as f64)));
    }
    Ok(Tensor::from_vec(images.len(), c, h, w, data))
}

/// Training-mode batch objective: mean per-image loss, its gradient with
/// respect to the network output, and the cache needed for backward.
pub fn objective<T: Scalar>(
    net: &Network<T>,
    input: &Tensor<T>,
    targets: &[&TargetSet],
    weights: &LossWeights,
) -> Result<(LossReport, Tensor<T>, NetCache<T>)> {
    if targets.len() != input.n {
        return Err(Error::DimensionMismatch(format!(
            "{} images but {} target sets",
            input.n,
            targets.len()
        )));
    }
    let (out, cache) = net.forward(input, true, ForwardOptions::default());
    let cache = cache.expect("training forward returns a cache");
    let mut grad = out.zeros_like();
    let mut report = LossReport::default();
    let inv = 1.0 / input.n as f64;
    for (i, t) in targets.iter().enumerate() {
        let pred = NetOutput::from_sample(&out, i);
        if pred.heatmap.dims() != t.heatmap.dims() {
            return Err(Error::DimensionMismatch(format!(
                "prediction {:?} vs target {:?}",
                pred.heatmap.dims(),
                t.heatmap.dims()
            )));
        }
        let (r, mut g) = total_loss(&pred, t, weights)?;
        for grid in [&mut g.heatmap, &mut g.size, &mut g.offset] {
            grid.as_mut_slice().iter_mut().for_each(|v| *v = *v * T::lit(inv));
        }
        g.write_into(&mut grad, i);
        report.l_h += r.l_h * inv;
        report.l_s += r.l_s * inv;
        report.l_offset += r.l_offset * inv;
        report.total += r.total * inv;
        report.n_objects += r.n_objects;
    }
    Ok((report, grad, cache))
}

/// A configured network with `f32` parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    net: Network<f32>,
}

impl Model {
    /// Builds a freshly initialized model; identical seeds give identical parameters.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(&config, &mut rng);
        Ok(Model { config, net })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// All parameters in canonical order.
    pub fn parameters(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        self.net.visit_params(&mut |p| out.extend_from_slice(p));
        out
    }

    /// Inference on one image (`input_channels x H x W`, H and W divisible by 32).
    pub fn forward(&self, image: &TensorGrid) -> Result<NetOutput> {
        self.forward_with(image, ForwardOptions::default())
    }

    pub fn forward_with(&self, image: &TensorGrid, opts: ForwardOptions) -> Result<NetOutput> {
        let x = batch_tensor::<f32>(&[image], self.config.input_channels)?;
        let (out, _) = self.net.forward(&x, false, opts);
        Ok(NetOutput::from_sample(&out, 0))
    }

    /// Inference on a batch of same-sized images.
    pub fn forward_batch(&self, images: &[&TensorGrid]) -> Result<Vec<NetOutput>> {
        let x = batch_tensor::<f32>(images, self.config.input_channels)?;
        let (out, _) = self.net.forward(&x, false, ForwardOptions::default());
        Ok((0..out.n).map(|i| NetOutput::from_sample(&out, i)).collect())
    }

    /// Training-mode loss on a batch without touching parameters.
    pub fn batch_loss(&self, batch: &[(&TensorGrid, &TargetSet)], weights: &LossWeights) -> Result<LossReport> {
        let images: Vec<_> = batch.iter().map(|(i, _)| *i).collect();
        let targets: Vec<_> = batch.iter().map(|(_, t)| *t).collect();
        let x = batch_tensor::<f32>(&images, self.config.input_channels)?;
        Ok(objective(&self.net, &x, &targets, weights)?.0)
    }

    /// One optimizer step on `batch`; returns the loss before the update.
    pub fn train_step(
        &mut self,
        batch: &[(&TensorGrid, &TargetSet)],
        opt: &mut Adam<f32>,
        weights: &LossWeights,
    ) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::DimensionMismatch("empty training batch".into()));
        }
        let images: Vec<_> = batch.iter().map(|(i, _)| *i).collect();
        let targets: Vec<_> = batch.iter().map(|(_, t)| *t).collect();
        let x = batch_tensor::<f32>(&images, self.config.input_channels)?;
        let (report, grad, cache) = objective(&self.net, &x, &targets, weights)?;
        if !report.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss is {} (heatmap {}, size {}, offset {}) at step {}",
                report.total,
                report.l_h,
                report.l_s,
                report.l_offset,
                opt.steps_taken() + 1
            )));
        }
        self.net.zero_grad();
        self.net.backward(cache, &grad);
        opt.step(&mut self.net);
        Ok(report)
    }

    pub(crate) fn from_parts(config: ModelConfig, net: Network<f32>) -> Self {
        Model { config, net }
    }
}

/// Builds a model from `cfg` with deterministic initialization.
pub fn build_model(cfg: ModelConfig, seed: u64) -> Result<Model> {
    Model::build(cfg, seed)
}

/// Output spatial size for an input of `h x w`.
pub fn output_dims(h: usize, w: usize) -> (usize, usize) {
    (h / OUTPUT_STRIDE, w / OUTPUT_STRIDE)
}
