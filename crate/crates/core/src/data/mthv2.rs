//! Adapter for character-level annotation directories in the MTHv2 style.
//!
//! Expected layout: one `<stem>.txt` per page, one character per line, as
//! either 4 numbers (`x_min y_min x_max y_max`) or 8 numbers (a quadrilateral
//! `x1 y1 ... x4 y4`), separated by commas or whitespace. Non-numeric tokens
//! such as the transcribed character are ignored. The page image is
//! `<stem>.{png,jpg,jpeg}` next to the text file or under `images/` or `img/`.

use std::fs;
use std::path::{Path, PathBuf};

use super::PageAnnotation;
use crate::error::{Error, Result};
use crate::geom::{clamp_to_image, BBox};

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];
const IMAGE_SUBDIRS: [&str; 2] = ["images", "img"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportReport {
    pub pages: Vec<PageAnnotation>,
    /// Boxes that crossed the page border and were clipped.
    pub clamped: usize,
    /// Boxes with nothing left after clipping.
    pub dropped: usize,
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    let mut dirs = vec![dir.to_path_buf()];
    dirs.extend(IMAGE_SUBDIRS.iter().map(|s| dir.join(s)));
    dirs.iter()
        .flat_map(|d| IMAGE_EXTS.iter().map(move |e| d.join(format!("{stem}.{e}"))))
        .find(|p| p.is_file())
}

/// Parses one annotation line into corners, or `None` when the layout is unknown.
fn parse_line(line: &str) -> Option<[f64; 4]> {
    let nums: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter_map(|t| t.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .collect();
    match nums.len() {
        4 => Some([nums[0], nums[1], nums[2], nums[3]]),
        8 => {
            let xs = [nums[0], nums[2], nums[4], nums[6]];
            let ys = [nums[1], nums[3], nums[5], nums[7]];
            let min = |v: [f64; 4]| v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = |v: [f64; 4]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some([min(xs), min(ys), max(xs), max(ys)])
        }
        _ => None,
    }
}

/// Imports every `*.txt` page under `dir`, in file-name order.
pub fn import_mthv2(dir: impl AsRef<Path>) -> Result<ImportReport> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();

    let mut report = ImportReport::default();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let image = find_image(dir, &stem)
            .ok_or_else(|| Error::format(&file, format!("no image named {stem}.png/.jpg found for this page")))?;
        let (width, height) = image::image_dimensions(&image).map_err(|source| Error::Image {
            path: image.clone(),
            source,
        })?;
        let mut boxes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let [x0, y0, x1, y1] = parse_line(line).ok_or_else(|| {
                Error::format(&file, format!("line {}: unknown layout (want 4 or 8 coordinates)", i + 1))
            })?;
            let b = BBox::from_corners(x0, y0, x1, y1)
                .map_err(|e| Error::format(&file, format!("line {}: {e}", i + 1)))?;
            match clamp_to_image(&b, width, height) {
                Some(c) => {
                    if c != b {
                        report.clamped += 1;
                    }
                    boxes.push(c);
                }
                None => {
                    report.clamped += 1;
                    report.dropped += 1;
                }
            }
        }
        report.pages.push(PageAnnotation {
            image_path: image.to_string_lossy().into_owned(),
            width,
            height,
            boxes,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_layouts() {
        assert_eq!(parse_line("1,2,3,4"), Some([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(parse_line("永 1 2 3 4"), Some([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(parse_line("5,1 9,1 9,6 5,6 字"), Some([5.0, 1.0, 9.0, 6.0]));
        assert_eq!(parse_line("1 2 3"), None);
    }
}
