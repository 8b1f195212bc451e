//! Shared machinery of every optimizer: the training set and the batched
//! energy `U(τ̃)` of a stack of patches.

use advtex_autograd::{Graph, Tensor, Var};
use rand::Rng;

use crate::bbox::Detection;
use crate::detector::{require_differentiable, DetectorAdapter};
use crate::error::{Error, Result};
use crate::io::boxcache::BoxCache;
use crate::io::dataset::DatasetManifest;
use crate::objectives::{energy_var, obj_loss_var, tv_loss_var, EnergyConfig, ObjAggregation};
use crate::transforms::{apply_patch_var, TransformConfig};

/// Images with their cached person boxes, resized to the detector input.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub ids: Vec<String>,
    pub images: Vec<Tensor>,
    pub boxes: Vec<Vec<Detection>>,
}

impl TrainingSet {
    /// Keeps only images with at least one cached box.
    pub fn load(dataset: &DatasetManifest, cache: &BoxCache, side: (usize, usize)) -> Result<Self> {
        let mut set = Self::default();
        for record in dataset.records() {
            let Some(boxes) = cache.get(&record.id) else {
                return Err(Error::ArtifactMismatch(format!(
                    "box cache for {} has no entry for image {}",
                    cache.detector, record.id
                )));
            };
            if boxes.is_empty() {
                continue;
            }
            set.ids.push(record.id.clone());
            set.images.push(dataset.load_image_resized(record, side.0, side.1)?);
            set.boxes.push(boxes.to_vec());
        }
        if set.is_empty() {
            return Err(Error::InvalidArgument("no training image has a person box".into()));
        }
        Ok(set)
    }

    pub fn from_parts(images: Vec<Tensor>, boxes: Vec<Vec<Detection>>) -> Result<Self> {
        if images.len() != boxes.len() {
            return Err(Error::InvalidArgument("images and box lists differ in length".into()));
        }
        let keep: Vec<usize> = (0..images.len()).filter(|&i| !boxes[i].is_empty()).collect();
        if keep.is_empty() {
            return Err(Error::InvalidArgument("no training image has a person box".into()));
        }
        Ok(Self {
            ids: keep.iter().map(|i| format!("{i:05}")).collect(),
            images: keep.iter().map(|&i| images[i].clone()).collect(),
            boxes: keep.iter().map(|&i| boxes[i].clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Per-sample terms of one energy evaluation.
pub struct BatchEnergy<'g> {
    pub energies: Var<'g>,
    pub u_obj: Vec<f64>,
    pub u_tv: Vec<f64>,
}

/// Everything needed to score patches against a detector.
pub struct AttackContext<'a> {
    pub detector: &'a dyn DetectorAdapter,
    pub data: &'a TrainingSet,
    pub transforms: TransformConfig,
    pub energy: EnergyConfig,
    pub aggregation: ObjAggregation,
}

impl<'a> AttackContext<'a> {
    pub fn new(
        detector: &'a dyn DetectorAdapter,
        data: &'a TrainingSet,
        transforms: TransformConfig,
        energy: EnergyConfig,
        aggregation: ObjAggregation,
    ) -> Result<Self> {
        require_differentiable(detector)?;
        transforms.validate()?;
        energy.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        Ok(Self {
            detector,
            data,
            transforms,
            energy,
            aggregation,
        })
    }

    /// Energies of a `[B, 3, p, p]` patch batch. Each patch goes onto its own
    /// randomly drawn training image with fresh transforms.
    pub fn energies<'g, R: Rng + ?Sized>(&self, patches: Var<'g>, rng: &mut R) -> Result<BatchEnergy<'g>> {
        let g = patches.graph();
        let b = patches.shape()[0];
        let mut attacked = Vec::with_capacity(b);
        for i in 0..b {
            let j = rng.random_range(0..self.data.len());
            let image = g.constant(self.data.images[j].clone());
            attacked.push(apply_patch_var(
                image,
                &self.data.boxes[j],
                patches.select0(i),
                rng,
                &self.transforms,
            )?);
        }
        let candidates = self.detector.detect_raw_var(Var::stack(&attacked))?;
        let mut objs = Vec::with_capacity(b);
        for c in &candidates {
            let v = match c.confidences.and_then(|conf| obj_loss_var(conf, self.aggregation)) {
                Some(v) => v,
                None => {
                    log::warn!("no candidate boxes survived; object loss is 0");
                    g.scalar(0.0)
                }
            };
            objs.push(v);
        }
        let u_obj = Var::stack(&objs);
        let u_tv = tv_loss_var(patches)?;
        let energies = energy_var(u_obj, u_tv, &self.energy);
        Ok(BatchEnergy {
            u_obj: u_obj.value().data().to_vec(),
            u_tv: u_tv.value().data().to_vec(),
            energies,
        })
    }
}

/// Cuts a `crop × crop` window at `(row, col)` out of every `[3, S, S]`
/// sample of a batch. Windows must lie inside the sample.
pub fn crop_batch<'g>(textures: Var<'g>, offsets: &[(usize, usize)], crop: usize) -> Result<Var<'g>> {
    let shape = textures.shape();
    let [b, c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("expected B×C×H×W, got {shape:?}")));
    };
    if offsets.len() != b {
        return Err(Error::Shape(format!("{} offsets for {b} samples", offsets.len())));
    }
    let mut index = Vec::with_capacity(b * c * crop * crop);
    for (s, &(r0, c0)) in offsets.iter().enumerate() {
        if r0 + crop > h || c0 + crop > w {
            return Err(Error::InvalidArgument(format!(
                "crop {crop} at ({r0},{c0}) leaves the {h}×{w} texture"
            )));
        }
        for ch in 0..c {
            for r in 0..crop {
                let base = ((s * c + ch) * h + r0 + r) * w + c0;
                index.extend(base..base + crop);
            }
        }
    }
    Ok(textures.gather(&[b, c, crop, crop], &index))
}

/// Uniform top-left corners of `crop` windows inside an `h × w` texture that
/// keep `margin` pixels from every edge. The margin shrinks on an axis where
/// the window would not fit otherwise.
pub fn interior_offsets<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    (h, w): (usize, usize),
    crop: usize,
    margin: usize,
) -> Vec<(usize, usize)> {
    let range = |side: usize| {
        let span = side - crop;
        let m = margin.min(span / 2);
        m..=span - m
    };
    (0..n)
        .map(|_| (rng.random_range(range(h)), rng.random_range(range(w))))
        .collect()
}

/// Mean of `values[from..to]`.
pub fn window_mean(values: &[f64], from: usize, to: usize) -> f64 {
    let s = &values[from..to];
    s.iter().sum::<f64>() / s.len().max(1) as f64
}

/// Scores one fixed patch on every training image, without gradients.
pub fn mean_energy<R: Rng + ?Sized>(
    ctx: &AttackContext<'_>,
    patch: &Tensor,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let g = Graph::new();
    let s = patch.shape();
    let batch = g
        .constant(Tensor::stack(&vec![patch.clone(); samples]))
        .reshape(&[samples, s[0], s[1], s[2]]);
    Ok(ctx.energies(batch, rng)?.energies.value().mean())
}
