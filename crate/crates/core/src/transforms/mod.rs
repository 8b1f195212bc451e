//! The patch application `M(x, τ̃)`: random photometric changes, a random
//! thin-plate-spline wrinkle, then compositing onto every person box.

mod eot;
mod tps;

use std::rc::Rc;

use advtex_autograd::{Graph, SparseMap, SparseMapBuilder, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use eot::{apply_eot, apply_eot_var, sample_eot, EotConfig, EotParams, Range};
pub use tps::{sample_tps, tps_kernel, tps_map, tps_transform, tps_transform_var, TpsConfig, TpsSolution, TpsWarp};

use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};
use crate::torus::TexturePattern;

/// Pushes bilinear weights for sampling a `h × w` plane at pixel
/// coordinates `(y, x)`, clamped to the border.
pub(crate) fn push_bilinear(b: &mut SparseMapBuilder, base: usize, h: usize, w: usize, y: f64, x: f64) {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    b.push(base + y0 * w + x0, (1.0 - fy) * (1.0 - fx));
    b.push(base + y0 * w + x1, (1.0 - fy) * fx);
    b.push(base + y1 * w + x0, fy * (1.0 - fx));
    b.push(base + y1 * w + x1, fy * fx);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub eot: EotConfig,
    pub tps: TpsConfig,
    /// Upward shift of the patch center, as a fraction of box height.
    pub vertical_offset: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            eot: EotConfig::default(),
            tps: TpsConfig::default(),
            vertical_offset: 0.05,
        }
    }
}

impl TransformConfig {
    /// Deterministic placement at the nominal scale, used for evaluation.
    pub fn deterministic(&self) -> Self {
        let nominal = (self.eot.scale.lo + self.eot.scale.hi) / 2.0;
        Self {
            eot: EotConfig::identity(nominal),
            tps: TpsConfig {
                enabled: false,
                ..self.tps
            },
            vertical_offset: self.vertical_offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eot.validate()?;
        if self.tps.enabled && self.tps.grid_size < 3 {
            return Err(Error::InvalidArgument("TPS grid must be at least 3".into()));
        }
        if self.tps.sigma.is_nan() || self.tps.sigma < 0.0 {
            return Err(Error::InvalidArgument("TPS sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Where and how one patch lands on an image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub target: BBox,
    /// Patch width over box width.
    pub scale: f64,
    /// Center offset in units of box width and height.
    pub offset: (f64, f64),
    /// Degrees.
    pub rotation: f64,
}

impl Placement {
    pub fn anchor(&self) -> (f64, f64) {
        (
            self.target.cx + self.offset.0 * self.target.w,
            self.target.cy + self.offset.1 * self.target.h,
        )
    }

    /// Flat indices of the overwritten image elements and the map from patch
    /// elements to their new values, for a `[3, p, p]` patch.
    pub fn compose_map(&self, patch_side: usize, img_h: usize, img_w: usize) -> (Vec<usize>, SparseMap) {
        let side = self.scale * self.target.w * img_w as f64;
        let (ax, ay) = self.anchor();
        let (ax, ay) = (ax * img_w as f64, ay * img_h as f64);
        let (sin, cos) = self.rotation.to_radians().sin_cos();
        let reach = side * std::f64::consts::FRAC_1_SQRT_2 + 1.0;
        let r0 = (ay - reach).floor().max(0.0) as usize;
        let r1 = ((ay + reach).ceil().max(0.0) as usize).min(img_h);
        let c0 = (ax - reach).floor().max(0.0) as usize;
        let c1 = ((ax + reach).ceil().max(0.0) as usize).min(img_w);

        let mut pixels = Vec::new();
        let mut samples = Vec::new();
        if side > 0.0 {
            for r in r0..r1 {
                for c in c0..c1 {
                    let dx = c as f64 + 0.5 - ax;
                    let dy = r as f64 + 0.5 - ay;
                    let u = (cos * dx + sin * dy) / side + 0.5;
                    let v = (-sin * dx + cos * dy) / side + 0.5;
                    if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                        pixels.push(r * img_w + c);
                        samples.push((v * patch_side as f64 - 0.5, u * patch_side as f64 - 0.5));
                    }
                }
            }
        }
        let pp = patch_side * patch_side;
        let plane = img_h * img_w;
        let n = pixels.len();
        let mut index = Vec::with_capacity(3 * n);
        let mut builder = SparseMap::builder(&[3 * n], 3 * pp);
        for ch in 0..3 {
            index.extend(pixels.iter().map(|p| ch * plane + p));
            for &(y, x) in &samples {
                push_bilinear(&mut builder, ch * pp, patch_side, patch_side, y, x);
                builder.end_row();
            }
        }
        (index, builder.finish())
    }
}

fn check_patch(shape: &[usize]) -> Result<usize> {
    match shape {
        [3, h, w] if h == w && *h > 0 => Ok(*h),
        _ => Err(Error::Shape(format!("patch must be 3×p×p, got {shape:?}"))),
    }
}

/// Composites already-transformed patches, in order, onto a `[3, H, W]`
/// image variable. Later placements overwrite earlier ones.
pub fn composite<'g>(image: Var<'g>, placements: &[(Placement, Var<'g>)]) -> Result<Var<'g>> {
    let shape = image.shape();
    let [3, h, w] = shape[..] else {
        return Err(Error::Shape(format!("image must be 3×H×W, got {shape:?}")));
    };
    let mut out = image;
    for (placement, patch) in placements {
        let side = check_patch(&patch.shape())?;
        let (index, map) = placement.compose_map(side, h, w);
        if index.is_empty() {
            continue;
        }
        out = out.overwrite(Rc::new(index), patch.sparse(Rc::new(map)));
    }
    Ok(out)
}

/// Boxes in compositing order: confidence descending, then input index.
pub fn placement_order(boxes: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence).then(a.cmp(&b)));
    order
}

/// The full `M(x, τ̃)` on a graph: for every non-degenerate box one fresh
/// TPS warp and EoT draw, then compositing in [`placement_order`].
pub fn apply_patch_var<'g, R: Rng + ?Sized>(
    image: Var<'g>,
    boxes: &[Detection],
    patch: Var<'g>,
    rng: &mut R,
    cfg: &TransformConfig,
) -> Result<Var<'g>> {
    apply_patches_var(image, boxes, &vec![patch; boxes.len()], rng, cfg)
}

/// Like [`apply_patch_var`] with a separate patch for each box.
pub fn apply_patches_var<'g, R: Rng + ?Sized>(
    image: Var<'g>,
    boxes: &[Detection],
    patches: &[Var<'g>],
    rng: &mut R,
    cfg: &TransformConfig,
) -> Result<Var<'g>> {
    if patches.len() != boxes.len() {
        return Err(Error::Shape(format!(
            "{} patches for {} boxes",
            patches.len(),
            boxes.len()
        )));
    }
    let mut placed = Vec::with_capacity(boxes.len());
    for i in placement_order(boxes) {
        let target = boxes[i].bbox;
        if target.is_degenerate() {
            log::warn!("skipping degenerate box {target:?}");
            continue;
        }
        check_patch(&patches[i].shape())?;
        let mut p = patches[i];
        if cfg.tps.enabled && cfg.tps.sigma > 0.0 {
            let warp = sample_tps(rng, cfg.tps.grid_size, cfg.tps.sigma)?;
            p = tps_transform_var(p, &warp)?;
        }
        let params = sample_eot(rng, &cfg.eot)?;
        p = apply_eot_var(p, &params, rng);
        placed.push((
            Placement {
                target,
                scale: params.scale,
                offset: (0.0, -cfg.vertical_offset),
                rotation: params.rotation,
            },
            p,
        ));
    }
    composite(image, &placed)
}

/// Value-level [`apply_patch_var`].
pub fn place_patch<R: Rng + ?Sized>(
    image: &Tensor,
    boxes: &[Detection],
    patch: &TexturePattern,
    rng: &mut R,
    cfg: &TransformConfig,
) -> Result<Tensor> {
    let g = Graph::new();
    let out = apply_patch_var(
        g.constant(image.clone()),
        boxes,
        g.constant(patch.tensor().clone()),
        rng,
        cfg,
    )?;
    Ok((*out.value()).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[3, h, w], |i| ((i * 7919) % 101) as f64 / 100.0)
    }

    #[test]
    fn no_boxes_leaves_image_unchanged() {
        let img = image(20, 24);
        let patch = TexturePattern::constant(6, 6, [0.1, 0.2, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = place_patch(&img, &[], &patch, &mut rng, &TransformConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn single_box_changes_one_square_region() {
        let (h, w) = (40, 40);
        let img = Tensor::zeros(&[3, h, w]);
        let patch = TexturePattern::constant(8, 8, [1.0, 1.0, 1.0]).unwrap();
        let det = Detection::person(BBox::new(0.5, 0.5, 1.0, 1.0), 0.9);
        let cfg = TransformConfig {
            eot: EotConfig::identity(0.25),
            tps: TpsConfig {
                enabled: false,
                ..TpsConfig::default()
            },
            vertical_offset: 0.0,
        };
        let out = place_patch(&img, &[det], &patch, &mut ChaCha8Rng::seed_from_u64(0), &cfg).unwrap();
        // A 10 px square centred on (20, 20) covers pixels 15..25 on both axes.
        for r in 0..h {
            for c in 0..w {
                let inside = (15..25).contains(&r) && (15..25).contains(&c);
                for ch in 0..3 {
                    let v = out.data()[(ch * h + r) * w + c];
                    let want = if inside { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-12, "({r},{c}) {v}");
                }
            }
        }
    }

    #[test]
    fn higher_confidence_is_drawn_first() {
        let (h, w) = (30, 30);
        let img = Tensor::zeros(&[3, h, w]);
        let cfg = TransformConfig {
            eot: EotConfig::identity(0.5),
            tps: TpsConfig {
                enabled: false,
                ..TpsConfig::default()
            },
            vertical_offset: 0.0,
        };
        let g = Graph::new();
        let a = Detection::person(BBox::new(0.4, 0.5, 0.6, 0.6), 0.9);
        let b = Detection::person(BBox::new(0.6, 0.5, 0.6, 0.6), 0.3);
        let bright = g.constant(Tensor::full(&[3, 4, 4], 1.0));
        let out = apply_patch_var(
            g.constant(img),
            &[b, a],
            bright,
            &mut ChaCha8Rng::seed_from_u64(0),
            &cfg,
        )
        .unwrap();
        assert_eq!(placement_order(&[b, a]), vec![1, 0]);
        assert!(out.value().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn box_at_border_is_clamped() {
        let (h, w) = (16, 16);
        let img = image(h, w);
        let det = Detection::person(BBox::new(0.98, 0.02, 0.9, 0.9), 0.8);
        let patch = TexturePattern::constant(5, 5, [0.0, 0.0, 0.0]).unwrap();
        let out = place_patch(
            &img,
            &[det],
            &patch,
            &mut ChaCha8Rng::seed_from_u64(3),
            &TransformConfig::default(),
        )
        .unwrap();
        assert_eq!(out.shape(), img.shape());
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn degenerate_box_is_skipped() {
        let img = image(10, 10);
        let det = Detection::person(BBox::new(0.5, 0.5, 0.0, 0.3), 0.8);
        let patch = TexturePattern::constant(5, 5, [0.0, 0.0, 0.0]).unwrap();
        let out = place_patch(
            &img,
            &[det],
            &patch,
            &mut ChaCha8Rng::seed_from_u64(3),
            &TransformConfig::default(),
        )
        .unwrap();
        assert_eq!(out, img);
    }
}
