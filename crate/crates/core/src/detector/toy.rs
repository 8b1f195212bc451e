//! A small single-class grid detector trained on synthetic pedestrians.
//!
//! The network is a stack of 3×3 convolutions with average pooling and a
//! 1×1 head that predicts `(tx, ty, tw, th, objectness)` per grid cell.
//! Boxes decode as `cx = (gx + σ(tx)) / G`, `w = anchor_w · exp(tw)` and the
//! confidence is `σ(objectness)`.

use std::path::Path;

use advtex_autograd::{Adam, Bound, Graph, ParamSet, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{fit_input, DetectorAdapter, DetectorFamily, RawCandidates};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::synthetic::{render_scene, Canvas, SceneConfig};

const BUNDLED: &[u8] = include_bytes!("../../fixtures/toy_detector.ckpt");
pub const CHECKPOINT_KIND: &str = "toy-detector";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyStage {
    pub channels: usize,
    pub pool: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDetectorSpec {
    pub input_side: usize,
    pub stages: Vec<ToyStage>,
    /// `(width, height)` of the reference box, normalized.
    pub anchor: (f64, f64),
    /// Candidates below this confidence are never reported.
    pub conf_floor: f64,
}

impl Default for ToyDetectorSpec {
    fn default() -> Self {
        let s = |channels, pool| ToyStage { channels, pool };
        Self {
            input_side: 96,
            stages: vec![s(8, true), s(16, true), s(24, true), s(32, false), s(32, false)],
            anchor: (0.25, 0.65),
            conf_floor: 0.01,
        }
    }
}

impl ToyDetectorSpec {
    pub fn grid(&self) -> usize {
        self.input_side >> self.stages.iter().filter(|s| s.pool).count()
    }

    fn validate(&self) -> Result<()> {
        let pools = self.stages.iter().filter(|s| s.pool).count();
        if self.stages.is_empty()
            || self.stages.iter().any(|s| s.channels == 0)
            || self.input_side == 0
            || !self.input_side.is_multiple_of(1 << pools)
            || !(self.anchor.0 > 0.0 && self.anchor.1 > 0.0)
            || !(0.0..1.0).contains(&self.conf_floor)
        {
            return Err(Error::InvalidSpec(format!("invalid toy detector spec {self:?}")));
        }
        Ok(())
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut c = 3;
        for (i, s) in self.stages.iter().enumerate() {
            shapes.push((format!("conv{i}.weight"), vec![s.channels, c, 3, 3]));
            shapes.push((format!("conv{i}.bias"), vec![s.channels]));
            c = s.channels;
        }
        shapes.push(("head.weight".into(), vec![5, c, 1, 1]));
        shapes.push(("head.bias".into(), vec![5]));
        shapes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDetector {
    spec: ToyDetectorSpec,
    params: ParamSet,
}

impl ToyDetector {
    pub fn init<R: Rng + ?Sized>(spec: ToyDetectorSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in spec.param_shapes() {
            let t = if shape.len() == 4 {
                let std = (2.0 / shape[1..].iter().product::<usize>() as f64).sqrt();
                Tensor::from_fn(&shape, |_| {
                    let n: f64 = StandardNormal.sample(rng);
                    n * std
                })
            } else if name == "head.bias" {
                // Low prior objectness so training starts near "no person".
                Tensor::new(&[5], vec![0.0, 0.0, 0.0, 0.0, -4.0])
            } else {
                Tensor::zeros(&shape)
            };
            params.push(name, t);
        }
        Ok(Self { spec, params })
    }

    /// The weights shipped with the crate.
    pub fn bundled() -> Result<Self> {
        if BUNDLED.is_empty() {
            return Err(Error::ArtifactMismatch(
                "bundled toy detector weights are missing; run `advtex train-toy-detector`".into(),
            ));
        }
        Self::from_checkpoint(&Checkpoint::from_bytes(BUNDLED, Path::new("<bundled toy detector>"))?)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let spec: ToyDetectorSpec = serde_json::from_value(ck.metadata["spec"].clone())
            .map_err(|e| Error::ArtifactMismatch(format!("toy detector spec: {e}")))?;
        spec.validate()?;
        let params = ck.group("detector")?.clone();
        let expected = spec.param_shapes();
        if params.len() != expected.len()
            || expected
                .iter()
                .enumerate()
                .any(|(i, (n, s))| params.name(i) != n || params.get(i).shape() != &s[..])
        {
            return Err(Error::ArtifactMismatch(
                "toy detector weights do not match its spec".into(),
            ));
        }
        Ok(Self { spec, params })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND).with_group("detector", self.params.clone());
        ck.metadata = serde_json::json!({ "spec": self.spec });
        ck
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn spec(&self) -> &ToyDetectorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Raw head output `[B, 5, G, G]`.
    fn head<'g>(&self, bound: &Bound<'g>, images: Var<'g>) -> Result<Var<'g>> {
        let side = self.spec.input_side;
        let mut x = fit_input(images, (side, side)).map(|x| x.offset(-0.5))?;
        for (i, stage) in self.spec.stages.iter().enumerate() {
            x = x
                .conv2d(bound.var(2 * i), 1, 1)
                .add_bias(bound.var(2 * i + 1))
                .leaky_relu(0.1);
            if stage.pool {
                x = x.avg_pool(2);
            }
        }
        let n = self.spec.stages.len();
        Ok(x.conv2d(bound.var(2 * n), 1, 0).add_bias(bound.var(2 * n + 1)))
    }

    fn decode_box(&self, out: &[f64], b: usize, gy: usize, gx: usize) -> BBox {
        let g = self.spec.grid();
        let at = |ch: usize| out[((b * 5 + ch) * g + gy) * g + gx];
        let sig = advtex_autograd::sigmoid;
        let cx = (gx as f64 + sig(at(0))) / g as f64;
        let cy = (gy as f64 + sig(at(1))) / g as f64;
        let w = (self.spec.anchor.0 * at(2).clamp(-4.0, 4.0).exp()).min(1.0);
        let h = (self.spec.anchor.1 * at(3).clamp(-4.0, 4.0).exp()).min(1.0);
        BBox::new(cx, cy, w, h)
    }
}

impl DetectorAdapter for ToyDetector {
    fn name(&self) -> &str {
        "toy"
    }

    fn input_size(&self) -> (usize, usize) {
        (self.spec.input_side, self.spec.input_side)
    }

    fn family(&self) -> DetectorFamily {
        DetectorFamily::OneStage
    }

    fn is_differentiable(&self) -> bool {
        true
    }

    fn detect_raw_var<'g>(&self, images: Var<'g>) -> Result<Vec<RawCandidates<'g>>> {
        let bound = self.params.bind_frozen(images.graph());
        let head = self.head(&bound, images)?;
        let out = head.value();
        let b = out.shape()[0];
        let g = self.spec.grid();
        let flat = head.reshape(&[out.numel()]);
        let mut result = Vec::with_capacity(b);
        for s in 0..b {
            let mut boxes = Vec::new();
            let mut index = Vec::new();
            for gy in 0..g {
                for gx in 0..g {
                    let i = ((s * 5 + 4) * g + gy) * g + gx;
                    if advtex_autograd::sigmoid(out.data()[i]) >= self.spec.conf_floor {
                        boxes.push(self.decode_box(out.data(), s, gy, gx));
                        index.push(i);
                    }
                }
            }
            let confidences = (!index.is_empty()).then(|| flat.gather(&[index.len()], &index).sigmoid());
            result.push(RawCandidates { boxes, confidences });
        }
        Ok(result)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Probability that a person gets a random occluding patch on the torso.
    pub patch_prob: f64,
    pub positive_weight: f64,
    pub coord_weight: f64,
    pub scene: SceneConfig,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 16,
            lr: 2e-3,
            patch_prob: 0.6,
            positive_weight: 5.0,
            coord_weight: 2.0,
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainReport {
    pub losses: Vec<f64>,
}

/// A random square occluder: color blocks, noise, stripes or a flat color.
pub fn random_occluder<R: Rng + ?Sized>(rng: &mut R, side: usize) -> Tensor {
    let side = side.max(1);
    let colors: Vec<[f64; 3]> = (0..64).map(|_| std::array::from_fn(|_| rng.random::<f64>())).collect();
    let kind = rng.random_range(0..4);
    let blocks = rng.random_range(2..=6);
    let period = rng.random_range(2..=6);
    let mut canvas = Canvas::new(side, side);
    for r in 0..side {
        for c in 0..side {
            let rgb = match kind {
                0 => colors[(r * blocks / side) * 8 + (c * blocks / side)],
                1 => std::array::from_fn(|_| rng.random::<f64>()),
                2 => colors[(r / period) % 2],
                _ => colors[0],
            };
            canvas.set(r, c, rgb);
        }
    }
    canvas.into_tensor()
}

fn augmented_scene<R: Rng + ?Sized>(rng: &mut R, cfg: &ToyTrainConfig) -> (Tensor, Vec<BBox>) {
    let scene = render_scene(rng, &cfg.scene);
    let side = cfg.scene.side as f64;
    let mut canvas = Canvas::from_tensor(scene.image);
    for p in &scene.persons {
        if rng.random_bool(cfg.patch_prob) {
            let ps = (rng.random_range(0.35..0.8) * p.w * side).round().max(1.0) as usize;
            let cx = (p.cx + rng.random_range(-0.1..0.1) * p.w) * side;
            let cy = (p.cy + rng.random_range(-0.15..0.05) * p.h) * side;
            let patch = random_occluder(rng, ps);
            canvas.paste(&patch, (cy - ps as f64 / 2.0) as isize, (cx - ps as f64 / 2.0) as isize);
        }
    }
    (canvas.into_tensor(), scene.persons)
}

impl ToyDetector {
    /// Trains on freshly rendered scenes every step.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        cfg: &ToyTrainConfig,
        rng: &mut R,
        mut on_step: impl FnMut(usize, f64),
    ) -> Result<ToyTrainReport> {
        if cfg.scene.side != self.spec.input_side {
            return Err(Error::InvalidArgument(
                "scene side must equal the detector input side".into(),
            ));
        }
        let g = self.spec.grid();
        let gg = g * g;
        let mut opt = Adam::new(cfg.lr);
        let mut report = ToyTrainReport::default();
        for step in 0..cfg.steps {
            let batch: Vec<(Tensor, Vec<BBox>)> = (0..cfg.batch_size).map(|_| augmented_scene(rng, cfg)).collect();
            let b = batch.len();
            let mut target = vec![0.0; b * gg];
            let mut weight = vec![1.0; b * gg];
            let mut pos_xy = Vec::new();
            let mut pos_wh = Vec::new();
            let mut t_xy = Vec::new();
            let mut t_wh = Vec::new();
            for (s, (_, persons)) in batch.iter().enumerate() {
                for p in persons {
                    let gx = ((p.cx * g as f64) as usize).min(g - 1);
                    let gy = ((p.cy * g as f64) as usize).min(g - 1);
                    let cell = gy * g + gx;
                    target[s * gg + cell] = 1.0;
                    weight[s * gg + cell] = cfg.positive_weight;
                    let base = s * 5 * gg + cell;
                    pos_xy.extend([base, base + gg]);
                    t_xy.extend([p.cx * g as f64 - gx as f64, p.cy * g as f64 - gy as f64]);
                    pos_wh.extend([base + 2 * gg, base + 3 * gg]);
                    t_wh.extend([(p.w / self.spec.anchor.0).ln(), (p.h / self.spec.anchor.1).ln()]);
                }
            }
            let obj_index: Vec<usize> = (0..b)
                .flat_map(|s| (0..gg).map(move |c| s * 5 * gg + 4 * gg + c))
                .collect();

            let graph = Graph::new();
            let bound = self.params.bind(&graph);
            let images = graph.constant(Tensor::stack(&batch.iter().map(|(i, _)| i.clone()).collect::<Vec<_>>()));
            let head = self.head(&bound, images)?;
            let flat = head.reshape(&[b * 5 * gg]);
            let logits = flat.gather(&[b * gg], &obj_index);
            let w = graph.constant(Tensor::new(&[b * gg], weight));
            let t = graph.constant(Tensor::new(&[b * gg], target));
            let obj = logits.softplus().sub(logits.mul(t)).mul(w).sum();
            let mut loss = obj;
            if !pos_xy.is_empty() {
                let xy = flat
                    .gather(&[pos_xy.len()], &pos_xy)
                    .sigmoid()
                    .sub(graph.constant(Tensor::new(&[t_xy.len()], t_xy)));
                let wh = flat
                    .gather(&[pos_wh.len()], &pos_wh)
                    .sub(graph.constant(Tensor::new(&[t_wh.len()], t_wh)));
                let coord = xy.mul(xy).sum().add(wh.mul(wh).sum());
                loss = loss.add(coord.scale(cfg.coord_weight));
            }
            let loss = loss.scale(1.0 / b as f64);
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: "toy detector loss is not finite".into(),
                });
            }
            let grads = graph.backward(loss);
            let gs = self.params.gradients(&bound, &grads);
            opt.step(&mut self.params, &gs);
            report.losses.push(value);
            on_step(step, value);
        }
        Ok(report)
    }
}
