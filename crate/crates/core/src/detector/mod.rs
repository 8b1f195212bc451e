//! Person-detector adapters.
//!
//! An adapter exposes two views of the same network: [`DetectorAdapter::detect_raw_var`]
//! returns every candidate above a tiny floor with confidences still
//! attached to the graph, and [`detect_eval`] thresholds and suppresses them
//! into final [`Detection`]s.

mod nms;
mod registry;
mod toy;

use std::rc::Rc;

use advtex_autograd::{Graph, SparseMap, Tensor, Var};
use serde::{Deserialize, Serialize};

pub use crate::bbox::{BBox, Detection, PERSON_CLASS};
pub use nms::nms;
pub use registry::{detector_info, load_detector, DetectorInfo, KNOWN_DETECTORS};
pub use toy::{random_occluder, ToyDetector, ToyDetectorSpec, ToyTrainConfig, ToyTrainReport};

use crate::error::{Error, Result};
use crate::io::boxcache::BoxCache;
use crate::io::dataset::DatasetManifest;

/// Architecture family, which fixes the box-extraction defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorFamily {
    OneStage,
    TwoStage,
}

impl DetectorFamily {
    pub fn default_conf_threshold(self) -> f64 {
        match self {
            DetectorFamily::OneStage => 0.5,
            DetectorFamily::TwoStage => 0.75,
        }
    }

    pub fn default_min_area_fraction(self) -> f64 {
        match self {
            DetectorFamily::OneStage => 0.0,
            DetectorFamily::TwoStage => 0.0016,
        }
    }
}

/// NMS IoU threshold for both box extraction and evaluation.
pub const NMS_IOU: f64 = 0.4;

/// Candidate boxes of one image. `confidences` has one entry per box and
/// is `None` when no candidate clears the floor.
pub struct RawCandidates<'g> {
    pub boxes: Vec<BBox>,
    pub confidences: Option<Var<'g>>,
}

impl RawCandidates<'_> {
    pub fn detections(&self) -> Vec<Detection> {
        let Some(c) = self.confidences else {
            return Vec::new();
        };
        let conf = c.value();
        self.boxes
            .iter()
            .zip(conf.data())
            .map(|(b, &p)| Detection::person(*b, p))
            .collect()
    }
}

pub trait DetectorAdapter {
    fn name(&self) -> &str;

    /// `(height, width)` the network runs at. Other sizes are resized.
    fn input_size(&self) -> (usize, usize);

    fn family(&self) -> DetectorFamily;

    fn is_differentiable(&self) -> bool;

    fn person_class(&self) -> u32 {
        PERSON_CLASS
    }

    /// Person candidates for a `[B, 3, H, W]` batch, before NMS.
    fn detect_raw_var<'g>(&self, images: Var<'g>) -> Result<Vec<RawCandidates<'g>>>;

    /// Value-only [`detect_raw_var`](Self::detect_raw_var) over `[3, H, W]` images.
    fn detect_raw(&self, images: &[Tensor]) -> Result<Vec<Vec<Detection>>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let g = Graph::new();
        let batch = g.constant(stack_images(images)?);
        Ok(self
            .detect_raw_var(batch)?
            .iter()
            .map(RawCandidates::detections)
            .collect())
    }
}

/// Errors unless the adapter can propagate gradients to its input.
pub fn require_differentiable(adapter: &dyn DetectorAdapter) -> Result<()> {
    if adapter.is_differentiable() {
        Ok(())
    } else {
        Err(Error::Capability(format!(
            "detector {} does not expose input gradients and cannot be used for training",
            adapter.name()
        )))
    }
}

pub(crate) fn stack_images(images: &[Tensor]) -> Result<Tensor> {
    let first = images[0].shape();
    if first.len() != 3 || first[0] != 3 {
        return Err(Error::Shape(format!("images must be 3×H×W, got {first:?}")));
    }
    if images.iter().any(|i| i.shape() != first) {
        return Err(Error::Shape("images in a batch must share one size".into()));
    }
    Ok(Tensor::stack(images))
}

/// Bilinear resize operator for a `[n, h, w]` stack of planes.
pub fn resize_map(planes: usize, h: usize, w: usize, out_h: usize, out_w: usize) -> SparseMap {
    let mut b = SparseMap::builder(&[planes, out_h, out_w], planes * h * w);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for p in 0..planes {
        for r in 0..out_h {
            for c in 0..out_w {
                let y = (r as f64 + 0.5) * sy - 0.5;
                let x = (c as f64 + 0.5) * sx - 0.5;
                crate::transforms::push_bilinear(&mut b, p * h * w, h, w, y, x);
                b.end_row();
            }
        }
    }
    b.finish()
}

/// Resizes a `[B, 3, H, W]` variable to the adapter's input size if needed.
pub(crate) fn fit_input<'g>(images: Var<'g>, size: (usize, usize)) -> Result<Var<'g>> {
    let shape = images.shape();
    let [b, 3, h, w] = shape[..] else {
        return Err(Error::Shape(format!("expected B×3×H×W images, got {shape:?}")));
    };
    if (h, w) == size {
        return Ok(images);
    }
    let map = resize_map(b * 3, h, w, size.0, size.1);
    Ok(images.sparse(Rc::new(map)).reshape(&[b, 3, size.0, size.1]))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in [0,1], got {v}")))
    }
}

/// Keeps candidates with confidence strictly above `conf_threshold`, then
/// applies greedy NMS.
pub fn filter_detections(raw: &[Detection], conf_threshold: f64, nms_iou: f64) -> Result<Vec<Detection>> {
    check_unit("confidence threshold", conf_threshold)?;
    check_unit("NMS IoU", nms_iou)?;
    let kept: Vec<Detection> = raw
        .iter()
        .filter(|d| d.confidence > conf_threshold && d.class_id == PERSON_CLASS)
        .copied()
        .collect();
    Ok(nms(&kept, nms_iou).into_iter().map(|i| kept[i]).collect())
}

pub fn detect_eval(
    adapter: &dyn DetectorAdapter,
    images: &[Tensor],
    conf_threshold: f64,
    nms_iou: f64,
) -> Result<Vec<Vec<Detection>>> {
    check_unit("confidence threshold", conf_threshold)?;
    check_unit("NMS IoU", nms_iou)?;
    adapter
        .detect_raw(images)?
        .iter()
        .map(|raw| filter_detections(raw, conf_threshold, nms_iou))
        .collect()
}

/// Box-extraction thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub min_area_fraction: f64,
}

impl ExtractionConfig {
    pub fn for_family(family: DetectorFamily) -> Self {
        Self {
            conf_threshold: family.default_conf_threshold(),
            nms_iou: NMS_IOU,
            min_area_fraction: family.default_min_area_fraction(),
        }
    }
}

/// Detector self-labels of every image in `dataset`, used as placement
/// targets during training. Boxes smaller than `min_area_fraction` of the
/// image are dropped.
pub fn extract_training_boxes(
    adapter: &dyn DetectorAdapter,
    dataset: &DatasetManifest,
    cfg: &ExtractionConfig,
    batch_size: usize,
) -> Result<BoxCache> {
    let mut cache = BoxCache::new(adapter.name());
    let batch_size = batch_size.max(1);
    let (ih, iw) = adapter.input_size();
    for chunk in dataset.records().chunks(batch_size) {
        let images = chunk
            .iter()
            .map(|r| dataset.load_image_resized(r, ih, iw))
            .collect::<Result<Vec<_>>>()?;
        let dets = detect_eval(adapter, &images, cfg.conf_threshold, cfg.nms_iou)?;
        for (record, d) in chunk.iter().zip(dets) {
            let kept = d
                .into_iter()
                .filter(|d| d.bbox.area() >= cfg.min_area_fraction)
                .collect();
            cache.insert(record.id.clone(), kept);
        }
    }
    Ok(cache)
}
