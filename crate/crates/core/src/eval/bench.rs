//! End-to-end inference latency: forward pass, peak decode and NMS.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_detections, CodecConfig};
use crate::error::{Error, Result};
use crate::grid::TensorGrid;
use crate::model::Model;
use crate::nn::MAX_STRIDE;

pub const MIN_TIMED_ITERS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub images_per_s: f64,
    pub input_size: (usize, usize),
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub param_count: usize,
}

impl BenchReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct") + "\n"
    }

    pub fn table(&self) -> String {
        format!(
            "{:<10} {:>8} {:>9} {:>9} {:>9} {:>9} {:>6}\n{:<10} {:>8} {:>9.3} {:>9.3} {:>9.3} {:>9.2} {:>6}\n",
            "input", "params", "mean_ms", "p50_ms", "p95_ms", "img/s", "iters",
            format!("{}x{}", self.input_size.0, self.input_size.1),
            self.param_count,
            self.mean_ms,
            self.p50_ms,
            self.p95_ms,
            self.images_per_s,
            self.timed_iters
        )
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Times `iters` inferences on a fixed `w x h` probe after `warmup` untimed ones.
pub fn benchmark_inference(
    model: &Model,
    input_size: (usize, usize),
    warmup: usize,
    iters: usize,
    cfg: &CodecConfig,
) -> Result<BenchReport> {
    let (w, h) = input_size;
    if iters < MIN_TIMED_ITERS {
        return Err(Error::InvalidConfig(format!(
            "need at least {MIN_TIMED_ITERS} timed iterations, got {iters}"
        )));
    }
    if w == 0 || h == 0 || w % MAX_STRIDE != 0 || h % MAX_STRIDE != 0 {
        return Err(Error::InvalidConfig(format!(
            "benchmark input {w}x{h} must be a positive multiple of {MAX_STRIDE}"
        )));
    }
    let c = model.config().input_channels;
    let mut probe = TensorGrid::zeros(c, h, w);
    // Deterministic texture so decoding sees a realistic number of peaks.
    for (i, v) in probe.as_mut_slice().iter_mut().enumerate() {
        *v = ((i as u64).wrapping_mul(2654435761) % 1000) as f32 / 1000.0;
    }
    let run = || -> Result<()> {
        let out = model.forward(&probe)?;
        decode_detections(&out, w as u32, h as u32, cfg)?;
        Ok(())
    };
    for _ in 0..warmup {
        run()?;
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        run()?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = samples.iter().sum::<f64>() / iters as f64;
    samples.sort_by(f64::total_cmp);
    Ok(BenchReport {
        mean_ms,
        p50_ms: percentile(&samples, 0.5),
        p95_ms: percentile(&samples, 0.95),
        images_per_s: 1e3 / mean_ms,
        input_size,
        warmup_iters: warmup,
        timed_iters: iters,
        param_count: model.param_count(),
    })
}
