//! Checkpoint file format.
//!
//! ```text
//! magic      4 bytes  "HRCN"
//! version    u16 LE
//! fields     u16 LE   count of config fields
//!   tag      u16 LE   } repeated `fields` times
//!   value    u32 LE   }
//! n_params   u64 LE
//! params     f32 LE x n_params   canonical layer order
//! n_buffers  u64 LE
//! buffers    f32 LE x n_buffers  normalization running mean/var
//! crc32      u32 LE   over every preceding byte
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{Module, Network};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HRCN";
pub const CHECKPOINT_VERSION: u16 = 1;

const TAG_BASE_CHANNELS: u16 = 1;
const TAG_INPUT_CHANNELS: u16 = 2;
const TAG_HEAD_CHANNELS: u16 = 3;
const TAG_STAGE1_BOTTLENECKS: u16 = 4;
const TAG_BLOCKS_PER_BRANCH: u16 = 5;
const TAG_STAGE2_MODULES: u16 = 6;
const TAG_STAGE3_MODULES: u16 = 7;
const TAG_STAGE4_MODULES: u16 = 8;

fn config_fields(cfg: &ModelConfig) -> Vec<(u16, u32)> {
    vec![
        (TAG_BASE_CHANNELS, cfg.base_channels as u32),
        (TAG_INPUT_CHANNELS, cfg.input_channels as u32),
        (TAG_HEAD_CHANNELS, cfg.head_channels as u32),
        (TAG_STAGE1_BOTTLENECKS, cfg.stage1_bottlenecks as u32),
        (TAG_BLOCKS_PER_BRANCH, cfg.blocks_per_branch as u32),
        (TAG_STAGE2_MODULES, cfg.stage_block_counts[0] as u32),
        (TAG_STAGE3_MODULES, cfg.stage_block_counts[1] as u32),
        (TAG_STAGE4_MODULES, cfg.stage_block_counts[2] as u32),
    ]
}

pub(crate) fn encode(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let fields = config_fields(&model.config);
    buf.extend_from_slice(&(fields.len() as u16).to_le_bytes());
    for (tag, value) in fields {
        buf.extend_from_slice(&tag.to_le_bytes());
        buf.extend_from_slice(&value.to_le_bytes());
    }
    let net = &model.net;
    buf.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    net.visit_params(&mut |p| p.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())));
    buf.extend_from_slice(&(net.buffer_count() as u64).to_le_bytes());
    net.visit_buffers(&mut |p| p.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())));
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "checkpoint is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.path, "length overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub(crate) fn decode(bytes: &[u8], path: &Path) -> Result<Model> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic bytes)"));
    }
    if bytes.len() < 4 + 2 + 4 {
        return Err(Error::format(path, "checkpoint is truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let mut r = Reader { bytes: body, pos: 4, path };
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
        ));
    }
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::format(path, "checkpoint CRC mismatch (corrupt or truncated)"));
    }

    let mut cfg = ModelConfig::toy();
    let n_fields = r.u16()?;
    for _ in 0..n_fields {
        let tag = r.u16()?;
        let v = r.u32()? as usize;
        match tag {
            TAG_BASE_CHANNELS => cfg.base_channels = v,
            TAG_INPUT_CHANNELS => cfg.input_channels = v,
            TAG_HEAD_CHANNELS => cfg.head_channels = v,
            TAG_STAGE1_BOTTLENECKS => cfg.stage1_bottlenecks = v,
            TAG_BLOCKS_PER_BRANCH => cfg.blocks_per_branch = v,
            TAG_STAGE2_MODULES => cfg.stage_block_counts[0] = v,
            TAG_STAGE3_MODULES => cfg.stage_block_counts[1] = v,
            TAG_STAGE4_MODULES => cfg.stage_block_counts[2] = v,
            other => log::warn!("{}: ignoring unknown config tag {other}", path.display()),
        }
    }
    cfg.validate()
        .map_err(|e| Error::format(path, format!("invalid stored config: {e}")))?;

    let mut net: Network<f32> = Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
    let n_params = r.u64()? as usize;
    if n_params != net.param_count() {
        return Err(Error::format(
            path,
            format!("{n_params} parameters stored, config implies {}", net.param_count()),
        ));
    }
    let params = r.f32s(n_params)?;
    let n_buffers = r.u64()? as usize;
    if n_buffers != net.buffer_count() {
        return Err(Error::format(
            path,
            format!("{n_buffers} buffers stored, config implies {}", net.buffer_count()),
        ));
    }
    let buffers = r.f32s(n_buffers)?;
    if r.pos != body.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint payload"));
    }
    let mut off = 0;
    net.visit_params_mut(&mut |p, _| {
        p.copy_from_slice(&params[off..off + p.len()]);
        off += p.len();
    });
    off = 0;
    net.visit_buffers_mut(&mut |b| {
        b.copy_from_slice(&buffers[off..off + b.len()]);
        off += b.len();
    });
    Ok(Model::from_parts(cfg, net))
}

/// Writes `model` to `path`.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint; with `expected` set, the stored config must match it.
pub fn load_model(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = decode(&bytes, path)?;
    if let Some(want) = expected {
        if model.config() != want {
            return Err(Error::ConfigMismatch(format!(
                "{} holds {:?}, requested {:?}",
                path.display(),
                model.config(),
                want
            )));
        }
    }
    Ok(model)
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(path, None)
    }
}
