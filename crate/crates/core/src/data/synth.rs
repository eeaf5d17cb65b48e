//! Procedural historical-style pages.
//!
//! Glyphs are stacks of thick strokes laid out top-down in right-to-left
//! vertical columns. Each annotation box is the exact extent of the ink the
//! glyph deposited, so labels are tight by construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PageAnnotation;
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::grid::TensorGrid;

/// Pixels darker than this count as ink.
pub const DARK_THRESHOLD: f32 = 0.5;

/// Ink coverage below this is discarded so glyph extents stay exact.
const MIN_COVERAGE: f32 = 0.05;
const MARGIN: f64 = 4.0;
/// Empty pixels kept between neighbouring glyph cells.
const CELL_GAP: f64 = 2.0;
const MIN_GLYPH: usize = 3;
const PLAIN_PAPER: f32 = 0.92;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Plain,
    Parchment,
}

/// Page generator settings. Ranges are inclusive `(low, high)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub page_w: u32,
    pub page_h: u32,
    pub columns: (u32, u32),
    pub chars_per_column: (u32, u32),
    /// Nominal glyph side in pixels.
    pub glyph_size: (f64, f64),
    /// Per-glyph relative jitter of width and height around the column's size.
    pub size_jitter: f64,
    /// 0 gives clean pages; 1 the heaviest blur, grain and speckle.
    pub noise_level: f64,
    pub background: Background,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 128x128 pages holding 8 to 30 glyphs.
    fn default() -> Self {
        SynthConfig {
            page_w: 128,
            page_h: 128,
            columns: (2, 3),
            chars_per_column: (4, 10),
            glyph_size: (10.0, 16.0),
            size_jitter: 0.15,
            noise_level: 0.1,
            background: Background::Plain,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.page_w == 0 || self.page_h == 0 {
            return bad(format!("page size {}x{} is empty", self.page_w, self.page_h));
        }
        for (name, (lo, hi)) in [("columns", self.columns), ("chars_per_column", self.chars_per_column)] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} range ({lo}, {hi}) must be non-empty and positive"));
            }
        }
        let (lo, hi) = self.glyph_size;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("glyph_size range ({lo}, {hi}) must be non-empty and positive"));
        }
        if !(0.0..1.0).contains(&self.size_jitter) {
            return bad(format!("size_jitter must lie in [0, 1), got {}", self.size_jitter));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return bad(format!("noise_level must lie in [0, 1], got {}", self.noise_level));
        }
        Ok(())
    }

    /// The config for page `index` of a dataset: same settings, derived seed.
    pub fn for_page(&self, index: u64) -> SynthConfig {
        // splitmix64 step, so neighbouring pages get unrelated streams.
        let mut z = self.seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        SynthConfig {
            seed: z ^ (z >> 31),
            ..self.clone()
        }
    }
}

/// Coverage of a thick segment with round caps, anti-aliased over one pixel.
fn stroke(ink: &mut [f32], w: usize, h: usize, a: (f64, f64), b: (f64, f64), thick: f64) {
    let r = thick / 2.0;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let x_lo = (a.0.min(b.0) - r - 1.0).floor().max(0.0) as usize;
    let x_hi = ((a.0.max(b.0) + r + 1.0).ceil() as usize).min(w);
    let y_lo = (a.1.min(b.1) - r - 1.0).floor().max(0.0) as usize;
    let y_hi = ((a.1.max(b.1) + r + 1.0).ceil() as usize).min(h);
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
            let cov = (r + 0.5 - (qx * qx + qy * qy).sqrt()).clamp(0.0, 1.0) as f32;
            let cell = &mut ink[y * w + x];
            *cell = cell.max(cov);
        }
    }
}

/// Ink coverage of one glyph in a `w x h` buffer.
fn draw_glyph(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f32> {
    let mut ink = vec![0.0f32; w * h];
    let thick = (w.min(h) as f64 * rng.gen_range(0.10..0.17)).max(1.3);
    let inset = thick / 2.0;
    // 4x4 lattice of anchor points inset so strokes stay inside the buffer.
    let lx = |i: usize| inset + (w as f64 - 2.0 * inset) * i as f64 / 3.0;
    let ly = |j: usize| inset + (h as f64 - 2.0 * inset) * j as f64 / 3.0;

    // A full-width bar and a full-height bar give the glyph its nominal extent.
    let row = rng.gen_range(0..4);
    stroke(&mut ink, w, h, (lx(0), ly(row)), (lx(3), ly(row)), thick);
    let col = rng.gen_range(0..4);
    stroke(&mut ink, w, h, (lx(col), ly(0)), (lx(col), ly(3)), thick);
    for _ in 0..rng.gen_range(1..=4) {
        let a = (rng.gen_range(0..4), rng.gen_range(0..4));
        let b = match rng.gen_range(0..3) {
            0 => (rng.gen_range(0..4), a.1),
            1 => (a.0, rng.gen_range(0..4)),
            _ => (rng.gen_range(0..4), rng.gen_range(0..4)),
        };
        stroke(&mut ink, w, h, (lx(a.0), ly(a.1)), (lx(b.0), ly(b.1)), thick);
    }
    if rng.gen_bool(0.5) {
        let p = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let p = (p.0.clamp(inset, w as f64 - inset), p.1.clamp(inset, h as f64 - inset));
        stroke(&mut ink, w, h, p, p, thick * 1.2);
    }
    ink.iter_mut().filter(|v| **v < MIN_COVERAGE).for_each(|v| *v = 0.0);
    ink
}

fn paper(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (w, h) = (cfg.page_w as usize, cfg.page_h as usize);
    match cfg.background {
        Background::Plain => vec![PLAIN_PAPER; w * h],
        Background::Parchment => {
            // Sum of a few broad blobs (stains) plus faint horizontal fibres.
            let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(0.0..w as f64),
                        rng.gen_range(0.0..h as f64),
                        rng.gen_range(0.15..0.5) * w.max(h) as f64,
                        rng.gen_range(-0.07..0.05),
                    )
                })
                .collect();
            let fibre: Vec<f64> = (0..h).map(|_| rng.gen_range(-0.015..0.015)).collect();
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let mut v = 0.84 + fibre[y];
                    for &(bx, by, r, amp) in &blobs {
                        let d2 = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (r * r);
                        v += amp * (-d2).exp();
                    }
                    out.push(v.clamp(0.65, 0.97) as f32);
                }
            }
            out
        }
    }
}

fn degrade(img: &mut [f32], w: usize, h: usize, level: f64, rng: &mut ChaCha8Rng) {
    let blend = (0.6 * level) as f32;
    let src = img.to_vec();
    for y in 0..h {
        for x in 0..w {
            let (mut sum, mut n) = (0.0f32, 0.0f32);
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    sum += src[yy * w + xx];
                    n += 1.0;
                }
            }
            img[y * w + x] = src[y * w + x] * (1.0 - blend) + sum / n * blend;
        }
    }
    let grain = Normal::new(0.0, 0.05 * level).expect("finite std");
    for v in img.iter_mut() {
        *v += grain.sample(rng) as f32;
    }
    let specks = (level * (w * h) as f64 * 0.001).round() as usize;
    for _ in 0..specks {
        let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
        img[y * w + x] = rng.gen_range(0.2..0.45);
    }
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Renders one grayscale page (`1 x page_h x page_w`, 1 = white) and its boxes.
///
/// The returned annotation has an empty `image_path`; callers name the file.
pub fn generate_page(cfg: &SynthConfig) -> Result<(TensorGrid, PageAnnotation)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.page_w as usize, cfg.page_h as usize);
    let mut img = paper(cfg, &mut rng);
    let mut boxes = Vec::new();

    let n_cols = rng.gen_range(cfg.columns.0..=cfg.columns.1) as usize;
    let col_pitch = (w as f64 - 2.0 * MARGIN) / n_cols as f64;
    for k in 0..n_cols {
        // Right to left.
        let col_right = w as f64 - MARGIN - k as f64 * col_pitch;
        let n_chars = rng.gen_range(cfg.chars_per_column.0..=cfg.chars_per_column.1) as usize;
        let row_pitch = (h as f64 - 2.0 * MARGIN) / n_chars as f64;
        let base = rng.gen_range(cfg.glyph_size.0..=cfg.glyph_size.1);
        let ink_level = rng.gen_range(0.05f32..0.2);
        for r in 0..n_chars {
            let jitter = |rng: &mut ChaCha8Rng| 1.0 + rng.gen_range(-cfg.size_jitter..=cfg.size_jitter);
            let gw = (base * jitter(&mut rng)).min(col_pitch - CELL_GAP).floor();
            let gh = (base * jitter(&mut rng)).min(row_pitch - CELL_GAP).floor();
            if gw < MIN_GLYPH as f64 || gh < MIN_GLYPH as f64 {
                continue;
            }
            let (gw, gh) = (gw as usize, gh as usize);
            let cell_x = col_right - col_pitch + CELL_GAP / 2.0;
            let cell_y = MARGIN + r as f64 * row_pitch + CELL_GAP / 2.0;
            let slack_x = (col_pitch - CELL_GAP - gw as f64).max(0.0);
            let slack_y = (row_pitch - CELL_GAP - gh as f64).max(0.0);
            // Columns are roughly centred; vertical placement wanders within the cell.
            let ox = (cell_x + slack_x * rng.gen_range(0.3..0.7)).ceil() as usize;
            let oy = (cell_y + slack_y * rng.gen_range(0.0..1.0)).ceil() as usize;

            let ink = draw_glyph(&mut rng, gw, gh);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            for gy in 0..gh {
                for gx in 0..gw {
                    let cov = ink[gy * gw + gx];
                    if cov == 0.0 {
                        continue;
                    }
                    let (px, py) = (ox + gx, oy + gy);
                    if px >= w || py >= h {
                        continue;
                    }
                    let p = &mut img[py * w + px];
                    *p += (ink_level - *p) * cov;
                    x0 = x0.min(px);
                    y0 = y0.min(py);
                    x1 = x1.max(px + 1);
                    y1 = y1.max(py + 1);
                }
            }
            if x0 < x1 && y0 < y1 {
                boxes.push(BBox::from_corners(x0 as f64, y0 as f64, x1 as f64, y1 as f64)?);
            }
        }
    }
    if boxes.is_empty() {
        return Err(Error::Generation(format!(
            "config yields no glyphs: {} columns of {:?} characters do not fit glyphs of {:?} px on a {}x{} page",
            n_cols, cfg.chars_per_column, cfg.glyph_size, w, h
        )));
    }
    if cfg.noise_level > 0.0 {
        degrade(&mut img, w, h, cfg.noise_level, &mut rng);
    }
    let ann = PageAnnotation {
        image_path: String::new(),
        width: cfg.page_w,
        height: cfg.page_h,
        boxes,
    };
    Ok((TensorGrid::from_vec(1, h, w, img)?, ann))
}
