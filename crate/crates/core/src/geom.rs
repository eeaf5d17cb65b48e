//! Axis-aligned boxes and box algebra.
//!
//! Coordinates are continuous pixels with the origin at the top-left corner,
//! x growing rightward and y downward. Pixel `(row i, col j)` covers
//! `[j, j+1) x [i, i+1)`, so a box center may sit between pixel centers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in center + size form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

/// Corner view of a [`BBox`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite box ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "width and height must be positive, got w={w} h={h}"
            )));
        }
        Ok(BBox { cx, cy, w, h })
    }

    /// Builds a box from corner coordinates; inverted or empty corners are rejected.
    pub fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidBox(format!(
                "inverted corners ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        BBox::new(
            (x_min + x_max) / 2.0,
            (y_min + y_max) / 2.0,
            x_max - x_min,
            y_max - y_min,
        )
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_corners(&self) -> Corners {
        Corners {
            x_min: self.cx - self.w / 2.0,
            y_min: self.cy - self.h / 2.0,
            x_max: self.cx + self.w / 2.0,
            y_max: self.cy + self.h / 2.0,
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Scales every coordinate by `s > 0`.
    pub fn scale(&self, s: f64) -> BBox {
        assert!(s > 0.0, "scale factor must be positive");
        BBox {
            cx: self.cx * s,
            cy: self.cy * s,
            w: self.w * s,
            h: self.h * s,
        }
    }

    /// Area of the overlap with `other`, zero when the interiors are disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let a = self.to_corners();
        let b = other.to_corners();
        let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
        let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
        iw * ih
    }
}

/// Intersection over union of two boxes, computed on continuous areas.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Clips `b` to `[0, width] x [0, height]`.
///
/// Returns `None` when nothing of positive area remains.
pub fn clamp_to_image(b: &BBox, width: u32, height: u32) -> Option<BBox> {
    let c = b.to_corners();
    let x_min = c.x_min.clamp(0.0, width as f64);
    let x_max = c.x_max.clamp(0.0, width as f64);
    let y_min = c.y_min.clamp(0.0, height as f64);
    let y_max = c.y_max.clamp(0.0, height as f64);
    if x_min == c.x_min && x_max == c.x_max && y_min == c.y_min && y_max == c.y_max {
        return Some(*b);
    }
    BBox::from_corners(x_min, y_min, x_max, y_max).ok()
}
