use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class id of the person class in every adapter's output.
pub const PERSON_CLASS: u32 = 0;

/// Axis-aligned box in normalized image coordinates, center form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0) || ![self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite())
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let (ax0, ay0, ax1, ay1) = self.corners();
        let (bx0, by0, bx1, by1) = other.corners();
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One predicted box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: u32,
}

impl Detection {
    pub fn person(bbox: BBox, confidence: f64) -> Self {
        Self {
            bbox,
            confidence,
            class_id: PERSON_CLASS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bbox.is_degenerate() {
            return Err(Error::InvalidArgument(format!("degenerate box {:?}", self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {} outside [0,1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let a = BBox::from_corners(0.0, 0.0, 0.5, 0.5);
        assert_eq!(a.iou(&a), 1.0);
        let b = BBox::from_corners(0.25, 0.0, 0.75, 0.5);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        let c = BBox::from_corners(0.6, 0.6, 0.9, 0.9);
        assert_eq!(a.iou(&c), 0.0);
    }
}
