//! Procedural street-like scenes with blocky pedestrians, used to train the
//! bundled toy detector and as the desk-scale benchmark.

use advtex_autograd::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub side: usize,
    pub min_persons: usize,
    pub max_persons: usize,
    /// Person height as a fraction of the image side.
    pub min_height: f64,
    pub max_height: f64,
    pub clutter: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            side: 96,
            min_persons: 1,
            max_persons: 2,
            min_height: 0.5,
            max_height: 0.85,
            clutter: 8,
        }
    }
}

/// Width of a figure relative to its height.
pub const PERSON_ASPECT: f64 = 0.38;

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: Tensor,
    pub persons: Vec<BBox>,
}

/// A `[3, H, W]` canvas with simple raster primitives. Coordinates are in
/// pixels; shapes are clipped to the canvas.
pub struct Canvas {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Canvas {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; 3 * h * w],
        }
    }

    pub fn from_tensor(t: Tensor) -> Self {
        let s = t.shape().to_vec();
        Self {
            h: s[1],
            w: s[2],
            data: t.into_data(),
        }
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor::new(&[3, self.h, self.w], self.data)
    }

    pub fn set(&mut self, r: usize, c: usize, rgb: [f64; 3]) {
        for (ch, v) in rgb.iter().enumerate() {
            self.data[(ch * self.h + r) * self.w + c] = v.clamp(0.0, 1.0);
        }
    }

    pub fn get(&self, r: usize, c: usize) -> [f64; 3] {
        std::array::from_fn(|ch| self.data[(ch * self.h + r) * self.w + c])
    }

    fn span(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
        let a = lo.round().clamp(0.0, n as f64) as usize;
        let b = hi.round().clamp(0.0, n as f64) as usize;
        a..b.max(a)
    }

    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, rgb: [f64; 3]) {
        for r in Self::span(y0, y1, self.h) {
            for c in Self::span(x0, x1, self.w) {
                self.set(r, c, rgb);
            }
        }
    }

    pub fn fill_ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, rgb: [f64; 3]) {
        for r in Self::span(cy - ry, cy + ry + 1.0, self.h) {
            for c in Self::span(cx - rx, cx + rx + 1.0, self.w) {
                let dx = (c as f64 + 0.5 - cx) / rx;
                let dy = (r as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.set(r, c, rgb);
                }
            }
        }
    }

    /// Pastes a `[3, p, q]` raster with its top-left corner at `(y, x)`.
    pub fn paste(&mut self, img: &Tensor, y: isize, x: isize) {
        let s = img.shape();
        let (p, q) = (s[1], s[2]);
        for r in 0..p {
            for c in 0..q {
                let (rr, cc) = (y + r as isize, x + c as isize);
                if rr < 0 || cc < 0 || rr as usize >= self.h || cc as usize >= self.w {
                    continue;
                }
                let rgb = std::array::from_fn(|ch| img.data()[(ch * p + r) * q + c]);
                self.set(rr as usize, cc as usize, rgb);
            }
        }
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    std::array::from_fn(|_| rng.random::<f64>())
}

fn skin<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    const TONES: [[f64; 3]; 4] = [
        [0.96, 0.80, 0.69],
        [0.87, 0.67, 0.52],
        [0.66, 0.46, 0.33],
        [0.42, 0.28, 0.20],
    ];
    let t = TONES[rng.random_range(0..TONES.len())];
    std::array::from_fn(|i| t[i] + rng.random_range(-0.04..0.04))
}

/// Draws a pedestrian whose bounding box has top-left `(x, y)` and height
/// `h` pixels; returns the box in pixels as `(x0, y0, x1, y1)`.
pub fn draw_person<R: Rng + ?Sized>(canvas: &mut Canvas, rng: &mut R, x: f64, y: f64, h: f64) -> (f64, f64, f64, f64) {
    let w = PERSON_ASPECT * h;
    let skin = skin(rng);
    let shirt = random_color(rng);
    let pants: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.55));
    let arms = if rng.random_bool(0.5) { shirt } else { skin };
    // legs
    canvas.fill_rect(x + 0.18 * w, y + 0.56 * h, x + 0.46 * w, y + h, pants);
    canvas.fill_rect(x + 0.54 * w, y + 0.56 * h, x + 0.82 * w, y + h, pants);
    // arms and torso
    canvas.fill_rect(x, y + 0.2 * h, x + 0.13 * w, y + 0.52 * h, arms);
    canvas.fill_rect(x + 0.87 * w, y + 0.2 * h, x + w, y + 0.52 * h, arms);
    canvas.fill_rect(x + 0.12 * w, y + 0.19 * h, x + 0.88 * w, y + 0.58 * h, shirt);
    // head
    canvas.fill_ellipse(x + 0.5 * w, y + 0.1 * h, 0.22 * w, 0.09 * h, skin);
    (x, y, x + w, y + h)
}

fn background<R: Rng + ?Sized>(canvas: &mut Canvas, rng: &mut R, clutter: usize) {
    let (h, w) = (canvas.h, canvas.w);
    let top = random_color(rng);
    let bottom = random_color(rng);
    for r in 0..h {
        let t = r as f64 / (h - 1).max(1) as f64;
        let rgb = std::array::from_fn(|i| top[i] * (1.0 - t) + bottom[i] * t);
        for c in 0..w {
            canvas.set(r, c, rgb);
        }
    }
    let side = h.min(w) as f64;
    for _ in 0..clutter {
        let color = random_color(rng);
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        match rng.random_range(0..3) {
            0 => {
                let a = rng.random_range(0.05..0.3) * side;
                let b = rng.random_range(0.05..0.3) * side;
                canvas.fill_rect(cx - a / 2.0, cy - b / 2.0, cx + a / 2.0, cy + b / 2.0, color);
            }
            1 => {
                let r = rng.random_range(0.03..0.12) * side;
                canvas.fill_ellipse(cx, cy, r, r, color);
            }
            _ => {
                // poles and wires
                let t = rng.random_range(0.01..0.04) * side;
                if rng.random_bool(0.5) {
                    canvas.fill_rect(cx - t, 0.0, cx + t, h as f64, color);
                } else {
                    canvas.fill_rect(0.0, cy - t, w as f64, cy + t, color);
                }
            }
        }
    }
}

pub fn render_scene<R: Rng + ?Sized>(rng: &mut R, cfg: &SceneConfig) -> Scene {
    let side = cfg.side as f64;
    let mut canvas = Canvas::new(cfg.side, cfg.side);
    background(&mut canvas, rng, cfg.clutter);
    let count = rng.random_range(cfg.min_persons..=cfg.max_persons.max(cfg.min_persons));
    let mut persons: Vec<BBox> = Vec::new();
    let mut attempts = 0;
    while persons.len() < count && attempts < 50 {
        attempts += 1;
        let h = rng.random_range(cfg.min_height..=cfg.max_height) * side;
        let w = PERSON_ASPECT * h;
        let x = rng.random_range(0.0..=(side - w).max(0.0));
        let y = rng.random_range(0.0..=(side - h).max(0.0));
        let bbox = BBox::from_corners(x / side, y / side, (x + w) / side, (y + h) / side);
        if persons.iter().any(|p| p.iou(&bbox) > 0.1) {
            continue;
        }
        draw_person(&mut canvas, rng, x, y, h);
        persons.push(bbox);
    }
    let mut image = canvas.into_tensor();
    for v in image.data_mut() {
        *v = (*v + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
    }
    Scene { image, persons }
}
