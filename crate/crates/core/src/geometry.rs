//! Boxes, offsets and detections.
//!
//! Every box inside the crate is in center-size form `(x, y, w, h)` where
//! `(x, y)` is the box center. The MOTChallenge top-left form only exists at
//! the file boundary (see [`crate::evalio::mot`]).

use std::ops::{Add, Sub};

use crate::error::{Error, Result};

/// Smallest width/height a composed box may take.
pub const MIN_EXTENT: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::Data(format!("invalid box {b:?}")))
        }
    }

    pub fn from_tlwh(left: f64, top: f64, w: f64, h: f64) -> Self {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn left(&self) -> f64 {
        self.x - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.y - self.h / 2.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Area of the intersection with `other`.
    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.left().max(other.left())).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.top().max(other.top())).max(0.0);
        iw * ih
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.left() && px <= self.right() && py >= self.top() && py <= self.bottom()
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Per-frame displacement of a box.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl Offset {
    pub const ZERO: Offset = Offset {
        dx: 0.0,
        dy: 0.0,
        dw: 0.0,
        dh: 0.0,
    };

    pub const fn new(dx: f64, dy: f64, dw: f64, dh: f64) -> Self {
        Self { dx, dy, dw, dh }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.dx * s, self.dy * s, self.dw * s, self.dh * s)
    }
}

impl Add for Offset {
    type Output = Offset;
    fn add(self, o: Offset) -> Offset {
        Offset::new(self.dx + o.dx, self.dy + o.dy, self.dw + o.dw, self.dh + o.dh)
    }
}

impl Sub for Offset {
    type Output = Offset;
    fn sub(self, o: Offset) -> Offset {
        Offset::new(self.dx - o.dx, self.dy - o.dy, self.dw - o.dw, self.dh - o.dh)
    }
}

/// Componentwise `curr - prev`.
pub fn offset_between(prev: &BBox, curr: &BBox) -> Offset {
    Offset::new(curr.x - prev.x, curr.y - prev.y, curr.w - prev.w, curr.h - prev.h)
}

/// Box composed with an offset. Non-positive extents are clamped to
/// [`MIN_EXTENT`]; the flag reports whether that happened.
pub fn apply_offset(b: &BBox, o: &Offset) -> (BBox, bool) {
    let mut w = b.w + o.dw;
    let mut h = b.h + o.dh;
    let mut clamped = false;
    if !(w > 0.0) {
        w = MIN_EXTENT;
        clamped = true;
    }
    if !(h > 0.0) {
        h = MIN_EXTENT;
        clamped = true;
    }
    (BBox::new(b.x + o.dx, b.y + o.dy, w, h), clamped)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, score: f64) -> Self {
        Self { frame, bbox, score }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame < 1 {
            return Err(Error::Data(format!("detection frame must be >= 1, got {}", self.frame)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Data(format!("detection score {} outside [0, 1]", self.score)));
        }
        if !self.bbox.is_valid() {
            return Err(Error::Data(format!("invalid detection box {:?}", self.bbox)));
        }
        Ok(())
    }
}
