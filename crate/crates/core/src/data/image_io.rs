//! PNG/JPEG pages to and from `[0, 1]` grids.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::grid::TensorGrid;

/// Loads an image as a `channels x H x W` grid in `[0, 1]` (1 = white).
pub fn load_image(path: impl AsRef<Path>, channels: usize) -> Result<TensorGrid> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match channels {
        1 => {
            let g = img.to_luma8();
            let data = g.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
            TensorGrid::from_vec(1, h, w, data)
        }
        3 => {
            let rgb = img.to_rgb8();
            let mut grid = TensorGrid::zeros(3, h, w);
            for (x, y, p) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    grid.set(c, y as usize, x as usize, p[c] as f32 / 255.0);
                }
            }
            Ok(grid)
        }
        n => Err(Error::InvalidConfig(format!("images load as 1 or 3 channels, not {n}"))),
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1-channel grid as 8-bit grayscale PNG, a 3-channel one as RGB.
pub fn save_image(path: impl AsRef<Path>, grid: &TensorGrid) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = grid.dims();
    let res = match c {
        1 => {
            let raw = grid.as_slice().iter().map(|&v| quantize(v)).collect();
            let img: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w as u32, h as u32, raw).expect("sized buffer");
            img.save(path)
        }
        3 => {
            let img: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
                let px = |ch| quantize(grid.get(ch, y as usize, x as usize));
                Rgb([px(0), px(1), px(2)])
            });
            img.save(path)
        }
        n => {
            return Err(Error::DimensionMismatch(format!(
                "only 1- or 3-channel grids can be saved, got {n}"
            )))
        }
    };
    res.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Converts between grayscale and RGB by replication or channel mean.
pub fn to_channels(grid: &TensorGrid, channels: usize) -> Result<TensorGrid> {
    let (c, h, w) = grid.dims();
    match (c, channels) {
        (a, b) if a == b => Ok(grid.clone()),
        (1, 3) => {
            let mut data = Vec::with_capacity(3 * h * w);
            for _ in 0..3 {
                data.extend_from_slice(grid.as_slice());
            }
            TensorGrid::from_vec(3, h, w, data)
        }
        (3, 1) => {
            let (r, g, b) = (grid.plane(0), grid.plane(1), grid.plane(2));
            let data = (0..h * w).map(|i| (r[i] + g[i] + b[i]) / 3.0).collect();
            TensorGrid::from_vec(1, h, w, data)
        }
        _ => Err(Error::DimensionMismatch(format!("cannot convert {c} channels to {channels}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = TensorGrid::zeros(1, 4, 5);
        for (i, v) in g.as_mut_slice().iter_mut().enumerate() {
            *v = i as f32 / 19.0;
        }
        let p = dir.path().join("g.png");
        save_image(&p, &g).unwrap();
        let back = load_image(&p, 1).unwrap();
        assert_eq!(back.dims(), (1, 4, 5));
        for (a, b) in g.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        let rgb = load_image(&p, 3).unwrap();
        assert_eq!(rgb.plane(2), back.plane(0));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_image("/nonexistent/x.png", 1), Err(Error::Io { .. })));
    }

    #[test]
    fn channel_conversion() {
        let g = TensorGrid::filled(1, 2, 2, 0.25);
        let rgb = to_channels(&g, 3).unwrap();
        assert_eq!(rgb.dims(), (3, 2, 2));
        assert_eq!(to_channels(&rgb, 1).unwrap(), g);
    }
}
