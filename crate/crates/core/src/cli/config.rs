//! Run settings: built-in defaults, then the TOML file, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::data::{Background, SynthConfig};
use crate::loss::LossWeights;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Fraction of a dataset held back from training by default.
pub const DEFAULT_HOLDOUT: f64 = 0.1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub input_size: Option<usize>,
    pub holdout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    pub conf: Option<f64>,
    pub nms_iou: Option<f64>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub gamma_h: Option<f64>,
    pub gamma_s: Option<f64>,
    pub gamma_offset: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub page_w: Option<u32>,
    pub page_h: Option<u32>,
    pub columns: Option<(u32, u32)>,
    pub chars_per_column: Option<(u32, u32)>,
    pub glyph_size: Option<(f64, f64)>,
    pub size_jitter: Option<f64>,
    pub noise_level: Option<f64>,
    pub background: Option<Background>,
}

/// Reads a TOML config; the error string is the parser's diagnostic.
pub fn read_config(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub preset: String,
    pub model: ModelConfig,
    pub seed: u64,
    pub train: TrainConfig,
    pub holdout: f64,
    pub synth: SynthConfig,
}

/// Flag values that override the file; `None` means not given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub input_size: Option<usize>,
    pub conf: Option<f64>,
    pub nms_iou: Option<f64>,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve(file: &FileConfig, flags: &Overrides) -> crate::Result<Settings> {
    let preset = pick(flags.preset.clone(), file.preset.clone(), "toy".to_string());
    let model = ModelConfig::preset(&preset)?;
    let base = if preset == "toy" { TrainConfig::toy() } else { TrainConfig::paper() };
    let seed = pick(flags.seed, file.seed, 0);
    let t = &file.train;
    let d = &file.decode;
    let l = &file.loss;
    let lw = LossWeights::default();
    let codec = CodecConfig {
        conf_thresh: pick(flags.conf, d.conf, base.codec.conf_thresh),
        nms_iou: pick(flags.nms_iou, d.nms_iou, base.codec.nms_iou),
        top_k: d.top_k.unwrap_or(base.codec.top_k),
        ..base.codec
    };
    let weights = LossWeights {
        gamma_h: l.gamma_h.unwrap_or(lw.gamma_h),
        gamma_s: l.gamma_s.unwrap_or(lw.gamma_s),
        gamma_offset: l.gamma_offset.unwrap_or(lw.gamma_offset),
        alpha: l.alpha.unwrap_or(lw.alpha),
        beta: l.beta.unwrap_or(lw.beta),
    };
    let train = TrainConfig {
        epochs: pick(flags.epochs, t.epochs, base.epochs),
        batch_size: pick(flags.batch_size, t.batch_size, base.batch_size),
        lr: pick(flags.lr, t.lr, base.lr),
        input_size: pick(flags.input_size, t.input_size, base.input_size),
        seed,
        codec,
        weights,
    };
    train.validate()?;
    let s = &file.synth;
    let sd = SynthConfig::default();
    let synth = SynthConfig {
        page_w: s.page_w.unwrap_or(sd.page_w),
        page_h: s.page_h.unwrap_or(sd.page_h),
        columns: s.columns.unwrap_or(sd.columns),
        chars_per_column: s.chars_per_column.unwrap_or(sd.chars_per_column),
        glyph_size: s.glyph_size.unwrap_or(sd.glyph_size),
        size_jitter: s.size_jitter.unwrap_or(sd.size_jitter),
        noise_level: s.noise_level.unwrap_or(sd.noise_level),
        background: s.background.unwrap_or(sd.background),
        seed,
    };
    synth.validate()?;
    let holdout = t.holdout.unwrap_or(DEFAULT_HOLDOUT);
    if !(0.0..1.0).contains(&holdout) {
        return Err(crate::Error::InvalidConfig(format!("holdout must lie in [0, 1), got {holdout}")));
    }
    Ok(Settings {
        preset,
        model,
        seed,
        train,
        holdout,
        synth,
    })
}
