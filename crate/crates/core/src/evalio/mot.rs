//! MOTChallenge comma-separated rows.
//!
//! Two layouts are read and written:
//!
//! - ground truth, 9 fields: `frame,id,left,top,w,h,conf,class,visibility`
//! - detections and results, 10 fields: `frame,id,left,top,w,h,score,-1,-1,-1`
//!
//! Rows keep the file's top-left coordinates; [`MotRow::bbox`] converts to
//! centre form. Floats are written in shortest round-trip form, so files
//! written here parse and re-write byte for byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};
use crate::tracker::TrackRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Gt,
    Det,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    /// `-1` for raw detections.
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    /// Detection score, or the "consider" flag for ground truth.
    pub score: f64,
    /// `-1` when absent.
    pub class: i64,
    /// `-1` when absent.
    pub visibility: f64,
    pub kind: RowKind,
}

impl MotRow {
    pub fn gt(frame: u32, id: i64, b: &BBox, visibility: f64) -> Self {
        Self {
            frame,
            id,
            left: b.left(),
            top: b.top(),
            width: b.w,
            height: b.h,
            score: 1.0,
            class: 1,
            visibility,
            kind: RowKind::Gt,
        }
    }

    pub fn from_detection(d: &Detection) -> Self {
        Self::det(d.frame, -1, &d.bbox, d.score)
    }

    pub fn det(frame: u32, id: i64, b: &BBox, score: f64) -> Self {
        Self {
            frame,
            id,
            left: b.left(),
            top: b.top(),
            width: b.w,
            height: b.h,
            score,
            class: -1,
            visibility: -1.0,
            kind: RowKind::Det,
        }
    }

    pub fn from_track(r: &TrackRow) -> Self {
        Self::det(r.frame, r.id as i64, &r.bbox, r.score)
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_tlwh(self.left, self.top, self.width, self.height)
    }

    pub fn detection(&self) -> Detection {
        Detection::new(self.frame, self.bbox(), self.score)
    }

    pub fn has_visibility(&self) -> bool {
        self.kind == RowKind::Gt && self.visibility >= 0.0
    }

    /// Ground-truth rows that count in evaluation: pedestrians (or
    /// unlabelled) with a nonzero consider flag.
    pub fn is_scored_gt(&self) -> bool {
        self.kind != RowKind::Gt || (self.score != 0.0 && (self.class == 1 || self.class == -1))
    }
}

fn parse_line(line: &str, n: usize, origin: &str) -> Result<MotRow> {
    let err = |msg: String| Error::Parse {
        path: origin.to_string(),
        line: n,
        msg,
    };
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() < 7 || f.len() > 10 {
        return Err(err(format!("expected 7 to 10 fields, found {}", f.len())));
    }
    let num = |i: usize| -> Result<f64> {
        f[i].parse::<f64>()
            .map_err(|_| err(format!("field {} is not a number: `{}`", i + 1, f[i])))
    };
    let int = |i: usize| -> Result<i64> {
        let v = num(i)?;
        if v.fract() != 0.0 {
            return Err(err(format!("field {} is not an integer: `{}`", i + 1, f[i])));
        }
        Ok(v as i64)
    };
    let frame = int(0)?;
    if frame < 1 || frame > u32::MAX as i64 {
        return Err(err(format!("frame {frame} out of range")));
    }
    let (width, height) = (num(4)?, num(5)?);
    if !(width > 0.0 && height > 0.0) {
        return Err(err("width and height must be positive".into()));
    }
    let kind = if f.len() == 9 { RowKind::Gt } else { RowKind::Det };
    let (class, visibility) = match f.len() {
        9 => (int(7)?, num(8)?),
        _ => (-1, -1.0),
    };
    Ok(MotRow {
        frame: frame as u32,
        id: int(1)?,
        left: num(2)?,
        top: num(3)?,
        width,
        height,
        score: num(6)?,
        class,
        visibility,
        kind,
    })
}

/// Parses rows and sorts them by `(frame, id)`, keeping file order otherwise.
pub fn parse_mot_str(text: &str, origin: &str) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push(parse_line(line, i + 1, origin)?);
    }
    rows.sort_by_key(|r| (r.frame, r.id));
    Ok(rows)
}

pub fn parse_mot(path: impl AsRef<Path>) -> Result<Vec<MotRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mot_str(&text, &path.display().to_string())
}

pub fn write_mot_string(rows: &[MotRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let head = format!(
            "{},{},{},{},{},{},{}",
            r.frame, r.id, r.left, r.top, r.width, r.height, r.score
        );
        s.push_str(&head);
        match r.kind {
            RowKind::Gt => s.push_str(&format!(",{},{}\n", r.class, r.visibility)),
            RowKind::Det => s.push_str(",-1,-1,-1\n"),
        }
    }
    s
}

pub fn write_mot(path: impl AsRef<Path>, rows: &[MotRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_mot_string(rows)).map_err(|e| Error::io(path, e))
}
