//! Detection overlays: box outlines plus score labels on the page.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::codec::Detection;
use crate::error::{Error, Result};
use crate::grid::TensorGrid;

pub const BOX_COLOR: Rgb<u8> = Rgb([230, 20, 20]);
pub const LABEL_COLOR: Rgb<u8> = Rgb([20, 90, 230]);

/// 3x5 bitmaps, one row per byte (bit 2 = left column).
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];
const DOT: [u8; 5] = [0, 0, 0, 0, 2];
const GLYPH_H: i64 = 5;

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, color: Rgb<u8>) {
    let mut cx = x;
    for ch in text.chars() {
        let rows = match ch {
            '0'..='9' => &DIGITS[ch as usize - '0' as usize],
            '.' => &DOT,
            _ => continue,
        };
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..3 {
                if bits & (4 >> dx) != 0 {
                    put(img, cx + dx, y + dy as i64, color);
                }
            }
        }
        cx += 4;
    }
}

/// Pixel columns/rows covered by a box outline, clipped to the image.
fn outline_extent(d: &Detection, w: u32, h: u32) -> Option<(i64, i64, i64, i64)> {
    let c = d.bbox.to_corners();
    let x0 = c.x_min.floor().max(0.0) as i64;
    let y0 = c.y_min.floor().max(0.0) as i64;
    let x1 = (c.x_max.ceil() as i64 - 1).min(w as i64 - 1);
    let y1 = (c.y_max.ceil() as i64 - 1).min(h as i64 - 1);
    (x0 <= x1 && y0 <= y1).then_some((x0, y0, x1, y1))
}

/// The page as RGB with every detection outlined and labelled with its score.
pub fn render_overlay_image(image: &TensorGrid, dets: &[Detection]) -> Result<RgbImage> {
    let (c, h, w) = image.dims();
    if c != 1 && c != 3 {
        return Err(Error::DimensionMismatch(format!("cannot render a {c}-channel image")));
    }
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| q(image.get(ch.min(c - 1), y as usize, x as usize));
        Rgb([px(0), px(1), px(2)])
    });
    for d in dets {
        let Some((x0, y0, x1, y1)) = outline_extent(d, w as u32, h as u32) else {
            continue;
        };
        for x in x0..=x1 {
            put(&mut img, x, y0, BOX_COLOR);
            put(&mut img, x, y1, BOX_COLOR);
        }
        for y in y0..=y1 {
            put(&mut img, x0, y, BOX_COLOR);
            put(&mut img, x1, y, BOX_COLOR);
        }
        let label = format!("{:.2}", d.score);
        let ly = if y0 > GLYPH_H { y0 - GLYPH_H - 1 } else { y1 + 2 };
        draw_text(&mut img, &label, x0, ly, LABEL_COLOR);
    }
    Ok(img)
}

/// Writes [`render_overlay_image`] as a PNG.
pub fn render_overlay(image: &TensorGrid, dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    render_overlay_image(image, dets)?
        .save(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}
