//! Line-delimited JSON annotation files.
//!
//! One page per line: `{"image": "p0.png", "width": 128, "height": 128,
//! "boxes": [[x_min, y_min, x_max, y_max], ...]}`. Blank lines are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PageAnnotation;
use crate::error::{Error, Result};
use crate::geom::BBox;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    image: String,
    width: u32,
    height: u32,
    boxes: Vec<[f64; 4]>,
}

fn to_record(page: &PageAnnotation) -> Record {
    Record {
        image: page.image_path.clone(),
        width: page.width,
        height: page.height,
        boxes: page
            .boxes
            .iter()
            .map(|b| {
                let c = b.to_corners();
                [c.x_min, c.y_min, c.x_max, c.y_max]
            })
            .collect(),
    }
}

/// Parses annotation text; errors carry 1-based line numbers.
pub fn parse_annotations(text: &str) -> Result<Vec<PageAnnotation>> {
    let mut pages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut boxes = Vec::with_capacity(rec.boxes.len());
        for (j, [x0, y0, x1, y1]) in rec.boxes.iter().copied().enumerate() {
            let b = BBox::from_corners(x0, y0, x1, y1).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("box {j}: {e}"),
            })?;
            boxes.push(b);
        }
        let page = PageAnnotation {
            image_path: rec.image,
            width: rec.width,
            height: rec.height,
            boxes,
        };
        page.validate()?;
        pages.push(page);
    }
    Ok(pages)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<PageAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::format(path, format!("line {line}: {message}")),
        other => other,
    })
}

pub fn write_annotations<W: Write>(mut w: W, pages: &[PageAnnotation]) -> std::io::Result<()> {
    for page in pages {
        serde_json::to_writer(&mut w, &to_record(page))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_annotations(path: impl AsRef<Path>, pages: &[PageAnnotation]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_annotations(&mut buf, pages).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
