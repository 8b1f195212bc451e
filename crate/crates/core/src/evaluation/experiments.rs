use std::path::Path;

use advtex_autograd::{Graph, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_ap, masr, recall_confidence_curve, AsrReport, IOU_MATCH, MASR_THRESHOLDS};
use crate::bbox::{BBox, Detection};
use crate::detector::{detect_eval, DetectorAdapter};
use crate::error::{Error, Result};
use crate::io::dataset::DatasetManifest;
use crate::io::write_atomic;
use crate::pipeline::EvalConfig;
use crate::torus::TexturePattern;
use crate::transforms::{apply_patches_var, TransformConfig};

/// Test images with clean-detector ground truth.
#[derive(Clone, Debug, Default)]
pub struct TestSet {
    pub ids: Vec<String>,
    pub images: Vec<Tensor>,
    pub ground_truth: Vec<Vec<BBox>>,
}

impl TestSet {
    /// Loads `dataset` at the detector input size and labels it with the
    /// detector's own clean predictions.
    pub fn load(adapter: &dyn DetectorAdapter, dataset: &DatasetManifest, cfg: &EvalConfig) -> Result<Self> {
        let (h, w) = adapter.input_size();
        let images = dataset
            .records()
            .iter()
            .map(|r| dataset.load_image_resized(r, h, w))
            .collect::<Result<Vec<_>>>()?;
        let ids = dataset.records().iter().map(|r| r.id.clone()).collect();
        Self::from_images(adapter, ids, images, cfg)
    }

    pub fn from_images(
        adapter: &dyn DetectorAdapter,
        ids: Vec<String>,
        images: Vec<Tensor>,
        cfg: &EvalConfig,
    ) -> Result<Self> {
        let ground_truth = build_ground_truth(adapter, &images, cfg)?;
        Ok(Self {
            ids,
            images,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn total_boxes(&self) -> usize {
        self.ground_truth.iter().map(Vec::len).sum()
    }
}

/// Clean detections above the ground-truth confidence, after NMS.
pub fn build_ground_truth(
    adapter: &dyn DetectorAdapter,
    images: &[Tensor],
    cfg: &EvalConfig,
) -> Result<Vec<Vec<BBox>>> {
    Ok(detect_eval(adapter, images, cfg.gt_conf_threshold, cfg.nms_iou)?
        .into_iter()
        .map(|d| d.into_iter().map(|d| d.bbox).collect())
        .collect())
}

/// Where each ground-truth box takes its patch from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CropPolicy {
    /// A uniformly random window at least `margin` pixels from every edge.
    Resample { margin: usize },
    /// The window at a fixed offset; cells outside the texture wrap when
    /// `wrap` is set and are black otherwise.
    Fixed { row: i64, col: i64, wrap: bool },
}

fn cut(texture: &TexturePattern, crop: usize, policy: CropPolicy, rng: &mut (impl Rng + ?Sized)) -> Result<Tensor> {
    let (h, w) = (texture.height(), texture.width());
    match policy {
        CropPolicy::Resample { margin } => {
            if crop + 2 * margin > h.min(w) {
                return Err(Error::InvalidArgument(format!(
                    "crop {crop} with margin {margin} does not fit the {h}×{w} texture"
                )));
            }
            let r = rng.random_range(margin..=h - crop - margin) as i64;
            let c = rng.random_range(margin..=w - crop - margin) as i64;
            Ok(texture.crop_torus(r, c, crop, crop)?.into_tensor())
        }
        CropPolicy::Fixed { row, col, wrap: true } => Ok(texture.crop_torus(row, col, crop, crop)?.into_tensor()),
        CropPolicy::Fixed { row, col, wrap: false } => {
            let src = texture.tensor().data();
            Ok(Tensor::from_fn(&[3, crop, crop], |i| {
                let (ch, r, c) = (i / (crop * crop), (i / crop) % crop, i % crop);
                let (sr, sc) = (row + r as i64, col + c as i64);
                if (0..h as i64).contains(&sr) && (0..w as i64).contains(&sc) {
                    src[(ch * h + sr as usize) * w + sc as usize]
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Pastes a crop of `texture` onto every ground-truth box, deterministically
/// placed at the nominal scale.
pub fn attack_testset<R: Rng + ?Sized>(
    test: &TestSet,
    texture: &TexturePattern,
    crop: usize,
    policy: CropPolicy,
    transforms: &TransformConfig,
    rng: &mut R,
) -> Result<Vec<Tensor>> {
    let placement = transforms.deterministic();
    test.images
        .iter()
        .zip(&test.ground_truth)
        .map(|(image, gt)| {
            let g = Graph::new();
            let boxes: Vec<Detection> = gt.iter().map(|b| Detection::person(*b, 1.0)).collect();
            let patches = boxes
                .iter()
                .map(|_| cut(texture, crop, policy, rng).map(|t| g.constant(t)))
                .collect::<Result<Vec<_>>>()?;
            let out = apply_patches_var(g.constant(image.clone()), &boxes, &patches, rng, &placement)?;
            Ok((*out.value()).clone())
        })
        .collect()
}

/// Recall thresholds reported alongside AP.
pub fn recall_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub label: String,
    pub ap: f64,
    pub recall: Vec<(f64, f64)>,
    pub asr: AsrReport,
    pub images: usize,
    pub boxes: usize,
}

/// Scores already-attacked images against the test ground truth.
pub fn score_images(
    adapter: &dyn DetectorAdapter,
    test: &TestSet,
    images: &[Tensor],
    cfg: &EvalConfig,
    label: &str,
) -> Result<EvalResult> {
    let predictions = detect_eval(adapter, images, cfg.pred_conf_threshold, cfg.nms_iou)?;
    Ok(EvalResult {
        label: label.to_owned(),
        ap: compute_ap(&predictions, &test.ground_truth, IOU_MATCH)?,
        recall: recall_confidence_curve(&predictions, &test.ground_truth, &recall_thresholds())?,
        asr: masr(&predictions, &test.ground_truth, &MASR_THRESHOLDS)?,
        images: test.len(),
        boxes: test.total_boxes(),
    })
}

/// AP, recall curve and mASR of `texture` on the test set. Crops keep
/// `margin` pixels away from the texture edges.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_texture<R: Rng + ?Sized>(
    adapter: &dyn DetectorAdapter,
    test: &TestSet,
    texture: &TexturePattern,
    crop: usize,
    margin: usize,
    transforms: &TransformConfig,
    cfg: &EvalConfig,
    label: &str,
    rng: &mut R,
) -> Result<EvalResult> {
    let policy = if cfg.resample {
        CropPolicy::Resample { margin }
    } else {
        CropPolicy::Fixed {
            row: margin as i64,
            col: margin as i64,
            wrap: false,
        }
    };
    let attacked = attack_testset(test, texture, crop, policy, transforms, rng)?;
    score_images(adapter, test, &attacked, cfg, label)
}

/// Unmodified test images; AP is 1 by construction.
pub fn evaluate_clean(adapter: &dyn DetectorAdapter, test: &TestSet, cfg: &EvalConfig) -> Result<EvalResult> {
    score_images(adapter, test, &test.images, cfg, "clean")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub label: String,
    /// `(shift ratio, AP)`.
    pub points: Vec<(f64, f64)>,
    pub mean: f64,
    pub std: f64,
}

/// AP as the crop window slides horizontally by `ratio × crop` pixels from
/// `(margin, margin)`. Expandable textures wrap around; a single patch is
/// black outside.
#[allow(clippy::too_many_arguments)]
pub fn shift_study<R: Rng + ?Sized>(
    adapter: &dyn DetectorAdapter,
    test: &TestSet,
    texture: &TexturePattern,
    crop: usize,
    margin: usize,
    expandable: bool,
    transforms: &TransformConfig,
    cfg: &EvalConfig,
    label: &str,
    rng: &mut R,
) -> Result<ShiftReport> {
    if cfg.shift_ratios.is_empty() {
        return Err(Error::InvalidArgument("shift study needs at least one ratio".into()));
    }
    let mut points = Vec::with_capacity(cfg.shift_ratios.len());
    for &ratio in &cfg.shift_ratios {
        let policy = CropPolicy::Fixed {
            row: margin as i64,
            col: margin as i64 + (ratio * crop as f64).round() as i64,
            wrap: expandable,
        };
        let attacked = attack_testset(test, texture, crop, policy, transforms, rng)?;
        points.push((ratio, score_images(adapter, test, &attacked, cfg, label)?.ap));
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let std = (points.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ShiftReport {
        label: label.to_owned(),
        points,
        mean,
        std,
    })
}

/// One CSV row per `(label, threshold)` of every recall curve.
pub fn recall_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("label,threshold,recall\n");
    for r in results {
        for (t, v) in &r.recall {
            out.push_str(&format!("{},{t},{v}\n", r.label));
        }
    }
    out
}

pub fn summary_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("label,ap,masr,images,boxes\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label, r.ap, r.asr.masr, r.images, r.boxes
        ));
    }
    out
}

pub fn shift_csv(reports: &[ShiftReport]) -> String {
    let mut out = String::from("label,ratio,ap\n");
    for r in reports {
        for (ratio, ap) in &r.points {
            out.push_str(&format!("{},{ratio},{ap}\n", r.label));
        }
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_atomic(path, text.as_bytes())
}
