//! The expandable fully-convolutional texture generator and the auxiliary
//! scoring network used by the mutual-information objective.
//!
//! Every generator layer is `[nearest upsample] → conv (odd kernel, zero
//! "same" padding) → element-wise activation`. With that contract the
//! network computes the same function at every interior position, so the
//! output for a latent shifted by `d` cells is the output shifted by
//! `d · expansion()` pixels everywhere except a border of
//! [`Generator::border_margin`] pixels.

use std::rc::Rc;

use advtex_autograd::{Bound, Graph, ParamSet, SparseMap, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{LatentVariable, TexturePattern};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Tanh,
    Identity,
}

impl Activation {
    fn apply<'g>(self, x: Var<'g>) -> Var<'g> {
        match self {
            Activation::LeakyRelu { slope } => x.leaky_relu(slope),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Zero,
    Valid,
    Reflect,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Sigmoid,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        /// Nearest-neighbour upsampling applied before the convolution.
        #[serde(default = "one")]
        upsample: usize,
        #[serde(default)]
        padding: Padding,
        activation: Activation,
    },
    /// Present only so that specs containing one are rejected explicitly.
    Dense { out_features: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub latent_channels: usize,
    /// `(H_min, W_min)`.
    pub min_latent_side: (usize, usize),
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub output_activation: OutputActivation,
}

const LRELU: Activation = Activation::LeakyRelu { slope: 0.2 };

fn conv(out_channels: usize, kernel: usize, upsample: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel,
        upsample,
        padding: Padding::Zero,
        activation,
    }
}

impl GeneratorSpec {
    /// Seven layers, 128 latent channels, 9×9 → 324×324 (expansion 36).
    ///
    /// Widths: 128 → 128 → 96 → 64 → 32 → 16 → 16 → 3, upsampling ×2, ×2,
    /// ×3, ×3 in front of layers 2–5.
    pub fn full() -> Self {
        Self {
            latent_channels: 128,
            min_latent_side: (9, 9),
            layers: vec![
                conv(128, 3, 1, LRELU),
                conv(96, 3, 2, LRELU),
                conv(64, 3, 2, LRELU),
                conv(32, 3, 3, LRELU),
                conv(16, 3, 3, LRELU),
                conv(16, 3, 1, LRELU),
                conv(3, 3, 1, Activation::Identity),
            ],
            output_activation: OutputActivation::Sigmoid,
        }
    }

    /// Seven-layer desk-scale generator: 16 latent channels, 9×9 → 72×72.
    pub fn desk() -> Self {
        Self {
            latent_channels: 16,
            min_latent_side: (9, 9),
            layers: vec![
                conv(32, 3, 1, LRELU),
                conv(32, 3, 2, LRELU),
                conv(24, 3, 2, LRELU),
                conv(16, 3, 2, LRELU),
                conv(16, 3, 1, LRELU),
                conv(8, 3, 1, LRELU),
                conv(3, 3, 1, Activation::Identity),
            ],
            output_activation: OutputActivation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.latent_channels == 0 {
            return bad("latent_channels must be positive".into());
        }
        if self.min_latent_side.0 == 0 || self.min_latent_side.1 == 0 {
            return bad("min_latent_side must be positive".into());
        }
        if self.layers.is_empty() {
            return bad("generator needs at least one layer".into());
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { .. } => {
                    return bad(format!("layer {i} is fully connected; only convolutions are allowed"))
                }
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    upsample,
                    padding,
                    activation,
                } => {
                    if *padding != Padding::Zero {
                        return bad(format!("layer {i} uses {padding:?} padding; zero padding is required"));
                    }
                    if *kernel == 0 || kernel % 2 == 0 {
                        return bad(format!("layer {i} kernel {kernel} must be odd"));
                    }
                    if *upsample == 0 {
                        return bad(format!("layer {i} upsample factor must be >= 1"));
                    }
                    if *out_channels == 0 {
                        return bad(format!("layer {i} has zero output channels"));
                    }
                    if i == last {
                        if *out_channels != 3 {
                            return bad(format!("final layer must emit 3 channels, got {out_channels}"));
                        }
                        if *activation != Activation::Identity {
                            return bad(
                                "final layer activation must be identity; the output activation bounds the texture"
                                    .into(),
                            );
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn convs(&self) -> impl Iterator<Item = (usize, usize, usize, Activation)> + '_ {
        self.layers.iter().filter_map(|l| match l {
            LayerSpec::Conv {
                out_channels,
                kernel,
                upsample,
                activation,
                ..
            } => Some((*out_channels, *kernel, *upsample, *activation)),
            LayerSpec::Dense { .. } => None,
        })
    }

    /// Output pixels per latent cell along each axis.
    pub fn expansion(&self) -> usize {
        self.convs().map(|(_, _, up, _)| up).product()
    }

    /// Width of the output border affected by zero padding.
    pub fn border_margin(&self) -> usize {
        self.convs()
            .fold(0, |margin, (_, kernel, up, _)| margin * up + (kernel - 1) / 2)
    }
}

/// The generator `G: z ↦ τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    spec: GeneratorSpec,
    params: ParamSet,
}

fn param_shapes(spec: &GeneratorSpec) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::new();
    let mut in_ch = spec.latent_channels;
    for (i, (out, k, _, _)) in spec.convs().enumerate() {
        shapes.push((format!("conv{i}.weight"), vec![out, in_ch, k, k]));
        shapes.push((format!("conv{i}.bias"), vec![out]));
        in_ch = out;
    }
    shapes
}

fn he_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], gain: f64) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let std = gain * (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| {
        let n: f64 = StandardNormal.sample(rng);
        n * std
    })
}

fn check_params(params: &ParamSet, expected: &[(String, Vec<usize>)]) -> Result<()> {
    if params.len() != expected.len() {
        return Err(Error::Shape(format!(
            "expected {} parameter tensors, got {}",
            expected.len(),
            params.len()
        )));
    }
    for (i, (name, shape)) in expected.iter().enumerate() {
        if params.name(i) != name || params.get(i).shape() != &shape[..] {
            return Err(Error::Shape(format!(
                "parameter {i}: expected {name} {shape:?}, got {} {:?}",
                params.name(i),
                params.get(i).shape()
            )));
        }
    }
    Ok(())
}

impl Generator {
    /// Validates `spec` and draws He-normal weights and zero biases.
    pub fn build<R: Rng + ?Sized>(spec: GeneratorSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in param_shapes(&spec) {
            let t = if shape.len() == 4 {
                he_normal(rng, &shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            params.push(name, t);
        }
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: GeneratorSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        check_params(&params, &param_shapes(&spec))?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn expansion(&self) -> usize {
        self.spec.expansion()
    }

    pub fn border_margin(&self) -> usize {
        self.spec.border_margin()
    }

    /// Output `(rows, cols)` for a latent of `(height, width)` cells.
    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let k = self.expansion();
        (height * k, width * k)
    }

    fn check_latent(&self, channels: usize, height: usize, width: usize) -> Result<()> {
        if channels != self.spec.latent_channels {
            return Err(Error::Shape(format!(
                "latent has {channels} channels, generator expects {}",
                self.spec.latent_channels
            )));
        }
        let (hmin, wmin) = self.spec.min_latent_side;
        if height < hmin || width < wmin {
            return Err(Error::Shape(format!(
                "latent {height}×{width} is below the minimum {hmin}×{wmin}"
            )));
        }
        Ok(())
    }

    /// Batched forward pass on a `[B, C, H, W]` latent.
    pub fn forward<'g>(&self, bound: &Bound<'g>, z: Var<'g>) -> Result<Var<'g>> {
        let shape = z.shape();
        let [_, c, h, w] = shape[..] else {
            return Err(Error::Shape(format!("latent batch must be B×C×H×W, got {shape:?}")));
        };
        self.check_latent(c, h, w)?;
        let mut x = z;
        for (i, (_, k, up, act)) in self.spec.convs().enumerate() {
            if up > 1 {
                x = x.upsample_nearest(up);
            }
            x = x
                .conv2d(bound.var(2 * i), 1, (k - 1) / 2)
                .add_bias(bound.var(2 * i + 1));
            x = act.apply(x);
        }
        Ok(match self.spec.output_activation {
            OutputActivation::Sigmoid => x.sigmoid(),
        })
    }

    /// Deterministic inference on a single latent.
    pub fn generate(&self, z: &LatentVariable) -> Result<TexturePattern> {
        let g = Graph::new();
        let bound = self.params.bind_frozen(&g);
        let shape = z.tensor().shape();
        let zb = g.constant(z.tensor().clone().reshape(&[1, shape[0], shape[1], shape[2]]));
        let out = self.forward(&bound, zb)?.value();
        let (_, c, h, w) = out.dims4();
        TexturePattern::new((*out).clone().reshape(&[c, h, w]))
    }

    /// Draws a `[C, height, width]` standard-normal latent.
    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R, height: usize, width: usize) -> Result<LatentVariable> {
        self.check_latent(self.spec.latent_channels, height, width)?;
        LatentVariable::new(standard_normal(rng, &[self.spec.latent_channels, height, width]))
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

/// Layer sizes of the auxiliary network `T(τ̃, z)`: a strided convolutional
/// patch encoder and a convolutional latent encoder, both average-pooled
/// onto their common coarsest grid. Per cell, the two codes and their
/// elementwise product are concatenated and scored by a two-layer 1×1 head;
/// the cell scores are averaged. Both encoders end at equal widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxNetSpec {
    pub latent_channels: usize,
    /// Output channels of the stride-2 3×3 patch convolutions.
    pub patch_channels: Vec<usize>,
    /// Output channels of the stride-1 3×3 latent convolutions.
    pub latent_hidden: Vec<usize>,
    pub head_hidden: usize,
}

impl AuxNetSpec {
    pub fn for_generator(spec: &GeneratorSpec) -> Self {
        Self {
            latent_channels: spec.latent_channels,
            patch_channels: vec![16, 32, 32],
            latent_hidden: vec![32],
            head_hidden: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.latent_channels == 0
            || self.patch_channels.is_empty()
            || self.latent_hidden.is_empty()
            || self.head_hidden == 0
            || self.patch_channels.iter().chain(&self.latent_hidden).any(|&c| c == 0)
            || self.patch_channels.last() != self.latent_hidden.last()
        {
            return Err(Error::InvalidSpec(format!("degenerate aux net spec {self:?}")));
        }
        Ok(())
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut c = 3;
        for (i, &o) in self.patch_channels.iter().enumerate() {
            shapes.push((format!("patch{i}.weight"), vec![o, c, 3, 3]));
            shapes.push((format!("patch{i}.bias"), vec![o]));
            c = o;
        }
        let mut c = self.latent_channels;
        for (i, &o) in self.latent_hidden.iter().enumerate() {
            shapes.push((format!("latent{i}.weight"), vec![o, c, 3, 3]));
            shapes.push((format!("latent{i}.bias"), vec![o]));
            c = o;
        }
        let fused = 3 * self.patch_channels.last().unwrap();
        shapes.push(("head0.weight".into(), vec![self.head_hidden, fused, 1, 1]));
        shapes.push(("head0.bias".into(), vec![self.head_hidden]));
        shapes.push(("head1.weight".into(), vec![1, self.head_hidden, 1, 1]));
        shapes.push(("head1.bias".into(), vec![1]));
        shapes
    }
}

/// The auxiliary network `T_ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxNet {
    spec: AuxNetSpec,
    params: ParamSet,
}

/// Mean over the spatial axes: `[B, C, H, W] → [B, C]`.
pub fn global_mean<'g>(x: Var<'g>) -> Var<'g> {
    let s = x.shape();
    let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
    let ones = x.graph().constant(Tensor::full(&[hw, 1], 1.0 / hw as f64));
    x.reshape(&[b * c, hw]).matmul(ones).reshape(&[b, c])
}

/// Averages `[B, C, H, W]` over an `n × n` grid of near-equal bins.
pub fn adaptive_mean<'g>(x: Var<'g>, n: usize) -> Var<'g> {
    let s = x.shape();
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    if (h, w) == (n, n) {
        return x;
    }
    let mut b = SparseMap::builder(&[s[0], s[1], n, n], planes * h * w);
    for plane in 0..planes {
        for i in 0..n {
            let (r0, r1) = (i * h / n, ((i + 1) * h).div_ceil(n));
            for j in 0..n {
                let (c0, c1) = (j * w / n, ((j + 1) * w).div_ceil(n));
                let weight = 1.0 / ((r1 - r0) * (c1 - c0)) as f64;
                for r in r0..r1 {
                    for c in c0..c1 {
                        b.push((plane * h + r) * w + c, weight);
                    }
                }
                b.end_row();
            }
        }
    }
    x.sparse(Rc::new(b.finish()))
}

impl AuxNet {
    pub fn build<R: Rng + ?Sized>(spec: AuxNetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in spec.param_shapes() {
            let t = match shape.len() {
                4 => he_normal(rng, &shape, 1.0),
                _ => Tensor::zeros(&shape),
            };
            params.push(name, t);
        }
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: AuxNetSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        check_params(&params, &spec.param_shapes())?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &AuxNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Scores a batch of `(patch, latent)` pairs: `[B,3,h,w] × [B,C,H,W] → [B]`.
    pub fn forward<'g>(&self, bound: &Bound<'g>, patches: Var<'g>, z: Var<'g>) -> Result<Var<'g>> {
        let ps = patches.shape();
        let zs = z.shape();
        if ps.len() != 4 || ps[1] != 3 || zs.len() != 4 || zs[1] != self.spec.latent_channels || ps[0] != zs[0] {
            return Err(Error::Shape(format!(
                "aux net expects [B,3,h,w] patches and [B,{},H,W] latents, got {ps:?} and {zs:?}",
                self.spec.latent_channels
            )));
        }
        let mut idx = 0;
        let mut p = patches;
        for _ in &self.spec.patch_channels {
            p = p
                .conv2d(bound.var(idx), 2, 1)
                .add_bias(bound.var(idx + 1))
                .leaky_relu(0.2);
            idx += 2;
        }
        let mut q = z;
        for _ in &self.spec.latent_hidden {
            q = q
                .conv2d(bound.var(idx), 1, 1)
                .add_bias(bound.var(idx + 1))
                .leaky_relu(0.2);
            idx += 2;
        }
        let (pshape, qshape) = (p.shape(), q.shape());
        let n = pshape[2..]
            .iter()
            .chain(&qshape[2..])
            .copied()
            .min()
            .unwrap_or(1)
            .max(1);
        let (p, q) = (adaptive_mean(p, n), adaptive_mean(q, n));
        let h = Var::concat(&[p, q, p.mul(q)], 1)
            .conv2d(bound.var(idx), 1, 0)
            .add_bias(bound.var(idx + 1))
            .leaky_relu(0.2);
        let cell = h.conv2d(bound.var(idx + 2), 1, 0).add_bias(bound.var(idx + 3));
        Ok(global_mean(cell).reshape(&[ps[0]]))
    }

    /// `T(patch, z)` for one pair.
    pub fn score(&self, patch: &TexturePattern, z: &LatentVariable) -> Result<f64> {
        let g = Graph::new();
        let bound = self.params.bind_frozen(&g);
        let p = patch.tensor();
        let zt = z.tensor();
        let pv = g.constant(p.clone().reshape(&[1, 3, p.shape()[1], p.shape()[2]]));
        let zv = g.constant(zt.clone().reshape(&[1, zt.shape()[0], zt.shape()[1], zt.shape()[2]]));
        Ok(self.forward(&bound, pv, zv)?.item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_spec_geometry() {
        let spec = GeneratorSpec::full();
        spec.validate().unwrap();
        assert_eq!(spec.expansion(), 36);
        assert_eq!(spec.layers.len(), 7);
        // 1 → ×2+1 → ×2+1 → ×3+1 → ×3+1 → +1 → +1
        assert_eq!(spec.border_margin(), ((((2 + 1) * 2 + 1) * 3 + 1) * 3 + 1) + 1 + 1);
        assert_eq!(GeneratorSpec::desk().expansion(), 8);
    }

    #[test]
    fn rejects_non_convolutional_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut spec = GeneratorSpec::desk();
        spec.layers.insert(1, LayerSpec::Dense { out_features: 10 });
        assert!(matches!(Generator::build(spec, &mut rng), Err(Error::InvalidSpec(_))));

        let mut spec = GeneratorSpec::desk();
        if let LayerSpec::Conv { padding, .. } = &mut spec.layers[2] {
            *padding = Padding::Reflect;
        }
        assert!(matches!(Generator::build(spec, &mut rng), Err(Error::InvalidSpec(_))));

        let mut spec = GeneratorSpec::desk();
        if let LayerSpec::Conv { kernel, .. } = &mut spec.layers[0] {
            *kernel = 4;
        }
        assert!(matches!(Generator::build(spec, &mut rng), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn latent_below_minimum_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Generator::build(GeneratorSpec::desk(), &mut rng).unwrap();
        let z = LatentVariable::new(Tensor::zeros(&[16, 8, 9])).unwrap();
        assert!(matches!(g.generate(&z), Err(Error::Shape(_))));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = GeneratorSpec::full();
        let text = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn aux_batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gspec = GeneratorSpec::desk();
        let aux = AuxNet::build(AuxNetSpec::for_generator(&gspec), &mut rng).unwrap();
        let patches: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_fn(&[3, 16, 16], |_| rng.random::<f64>()))
            .collect();
        let zs: Vec<Tensor> = (0..3).map(|_| standard_normal(&mut rng, &[16, 9, 9])).collect();
        let g = Graph::new();
        let bound = aux.params().bind_frozen(&g);
        let batch = aux
            .forward(
                &bound,
                g.constant(Tensor::stack(&patches)),
                g.constant(Tensor::stack(&zs)),
            )
            .unwrap()
            .value();
        for i in 0..3 {
            let s = aux
                .score(
                    &TexturePattern::new(patches[i].clone()).unwrap(),
                    &LatentVariable::new(zs[i].clone()).unwrap(),
                )
                .unwrap();
            assert!(s.is_finite());
            assert!((s - batch.data()[i]).abs() < 1e-6);
        }
    }
}
