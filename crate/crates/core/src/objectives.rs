//! Energy terms and the two stage-one objectives.
//!
//! Each quantity has a plain `f64` form for reporting and a graph form
//! (`*_var`) that the training loops differentiate through.

use std::rc::Rc;

use advtex_autograd::{smooth_abs, softplus, SparseMap, Tensor, Unary, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::TexturePattern;

/// Smoothing constant of the differentiable absolute value in the TV term.
pub const TV_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 1.0 }
    }
}

impl EnergyConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// How candidate confidences within one image reduce to `U_obj`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjAggregation {
    #[default]
    Mean,
    Max,
}

/// Per-step decomposition of the stage-one loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub u_obj: f64,
    pub u_tv: f64,
    pub energy: f64,
    pub info: f64,
    pub total: f64,
}

/// Total variation of a `[C, H, W]` raster with exact absolute values.
pub fn tv_loss_exact(data: &Tensor) -> Result<f64> {
    let (c, h, w) = chw(data.shape())?;
    let x = data.data();
    let mut acc = 0.0;
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..h {
            for j in 0..w {
                let v = x[base + i * w + j];
                if i + 1 < h {
                    acc += (v - x[base + (i + 1) * w + j]).abs();
                }
                if j + 1 < w {
                    acc += (v - x[base + i * w + j + 1]).abs();
                }
            }
        }
    }
    Ok(acc)
}

fn chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    let [c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("expected C×H×W, got {shape:?}")));
    };
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!(
            "TV needs spatial sides >= 2, got {h}×{w}"
        )));
    }
    Ok((c, h, w))
}

/// Smoothed total variation of a patch, as optimized.
pub fn tv_loss(patch: &TexturePattern) -> Result<f64> {
    tv_loss_tensor(patch.tensor())
}

/// Smoothed total variation of any `[C, H, W]` tensor.
pub fn tv_loss_tensor(data: &Tensor) -> Result<f64> {
    let shape = data.shape();
    chw(shape)?;
    let map = tv_difference_map(1, shape[0], shape[1], shape[2]);
    Ok(map.apply(data.data()).iter().map(|&d| smooth_abs(d, TV_EPS)).sum())
}

/// Rows are the vertical then horizontal neighbour differences of each
/// sample in a `[B, C, H, W]` batch; output shape `[B, n]`.
fn tv_difference_map(b: usize, c: usize, h: usize, w: usize) -> SparseMap {
    let per = c * ((h - 1) * w + h * (w - 1));
    let mut builder = SparseMap::builder(&[b, per], b * c * h * w);
    for s in 0..b {
        for ch in 0..c {
            let base = (s * c + ch) * h * w;
            for i in 0..h - 1 {
                for j in 0..w {
                    builder.push(base + i * w + j, 1.0);
                    builder.push(base + (i + 1) * w + j, -1.0);
                    builder.end_row();
                }
            }
        }
        for ch in 0..c {
            let base = (s * c + ch) * h * w;
            for i in 0..h {
                for j in 0..w - 1 {
                    builder.push(base + i * w + j, 1.0);
                    builder.push(base + i * w + j + 1, -1.0);
                    builder.end_row();
                }
            }
        }
    }
    builder.finish()
}

/// Sums the trailing axis of a `[B, n]` variable into `[B]`.
fn row_sums<'g>(x: Var<'g>) -> Var<'g> {
    let s = x.shape();
    let ones = x.graph().constant(Tensor::full(&[s[1], 1], 1.0));
    x.matmul(ones).reshape(&[s[0]])
}

/// Smoothed TV of every sample in a `[B, C, H, W]` batch, shape `[B]`.
pub fn tv_loss_var<'g>(patches: Var<'g>) -> Result<Var<'g>> {
    let shape = patches.shape();
    let [b, c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("expected B×C×H×W patches, got {shape:?}")));
    };
    chw(&shape[1..])?;
    let diffs = patches.sparse(Rc::new(tv_difference_map(b, c, h, w)));
    Ok(row_sums(diffs.unary(Unary::SmoothAbs(TV_EPS))))
}

/// `U_obj` for one image's candidate confidences. Empty lists give 0.
pub fn obj_loss(confidences: &[f64]) -> f64 {
    obj_loss_with(confidences, ObjAggregation::Mean)
}

pub fn obj_loss_with(confidences: &[f64], mode: ObjAggregation) -> f64 {
    if confidences.is_empty() {
        log::warn!("no candidate boxes survived; object loss is 0");
        return 0.0;
    }
    match mode {
        ObjAggregation::Mean => confidences.iter().sum::<f64>() / confidences.len() as f64,
        ObjAggregation::Max => confidences.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Graph form of [`obj_loss_with`] over a `[K]` confidence vector. Returns
/// `None` for `K = 0`.
pub fn obj_loss_var<'g>(confidences: Var<'g>, mode: ObjAggregation) -> Option<Var<'g>> {
    let k = confidences.shape().iter().product::<usize>();
    if k == 0 {
        return None;
    }
    Some(match mode {
        ObjAggregation::Mean => confidences.mean(),
        ObjAggregation::Max => {
            let v = confidences.value();
            let (arg, _) =
                v.data().iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &c)| if c > best.1 { (i, c) } else { best },
                );
            confidences.reshape(&[k]).gather(&[1], &[arg]).sum()
        }
    })
}

pub fn energy(u_obj: f64, u_tv: f64, cfg: &EnergyConfig) -> f64 {
    (u_obj + cfg.alpha * u_tv) / cfg.beta
}

pub fn energy_var<'g>(u_obj: Var<'g>, u_tv: Var<'g>, cfg: &EnergyConfig) -> Var<'g> {
    u_obj.add(u_tv.scale(cfg.alpha)).scale(1.0 / cfg.beta)
}

/// Monte-Carlo estimate of the expected energy.
pub fn adversary_objective(energies: &[f64]) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::InvalidArgument(
            "adversary objective needs at least one sample".into(),
        ));
    }
    Ok(energies.iter().sum::<f64>() / energies.len() as f64)
}

pub fn adversary_objective_var<'g>(energies: Var<'g>) -> Result<Var<'g>> {
    if energies.value().numel() == 0 {
        return Err(Error::InvalidArgument(
            "adversary objective needs at least one sample".into(),
        ));
    }
    Ok(energies.mean())
}

/// Negated Jensen-Shannon mutual-information estimate.
pub fn info_objective(joint: &[f64], marginal: &[f64]) -> Result<f64> {
    if joint.is_empty() || marginal.is_empty() {
        return Err(Error::InvalidArgument(
            "info objective needs joint and marginal scores".into(),
        ));
    }
    let j = joint.iter().map(|&t| softplus(-t)).sum::<f64>() / joint.len() as f64;
    let m = marginal.iter().map(|&t| softplus(t)).sum::<f64>() / marginal.len() as f64;
    Ok(j + m)
}

pub fn info_objective_var<'g>(joint: Var<'g>, marginal: Var<'g>) -> Result<Var<'g>> {
    if joint.value().numel() == 0 || marginal.value().numel() == 0 {
        return Err(Error::InvalidArgument(
            "info objective needs joint and marginal scores".into(),
        ));
    }
    Ok(joint.neg().softplus().mean().add(marginal.softplus().mean()))
}

pub fn total_stage_one_loss(adv: f64, info: f64) -> f64 {
    adv + info
}

#[cfg(test)]
mod tests {
    use super::*;
    use advtex_autograd::Graph;

    #[test]
    fn tv_examples() {
        let flat = Tensor::full(&[3, 5, 4], 0.3);
        assert_eq!(tv_loss_exact(&flat).unwrap(), 0.0);
        assert!(tv_loss_tensor(&flat).unwrap() < 1e-4);

        let step = Tensor::new(&[1, 2, 2], vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(tv_loss_exact(&step).unwrap(), 2.0);
        assert!((tv_loss_tensor(&step).unwrap() - 2.0).abs() < 1e-5);

        assert!(matches!(
            tv_loss_tensor(&Tensor::zeros(&[3, 1, 4])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn tv_batch_matches_single() {
        let a = Tensor::from_fn(&[3, 4, 5], |i| ((i * 37) % 11) as f64 / 11.0);
        let b = Tensor::from_fn(&[3, 4, 5], |i| ((i * 13) % 7) as f64 / 7.0);
        let g = Graph::new();
        let out = tv_loss_var(g.constant(Tensor::stack(&[a.clone(), b.clone()])))
            .unwrap()
            .value();
        assert!((out.data()[0] - tv_loss_tensor(&a).unwrap()).abs() < 1e-12);
        assert!((out.data()[1] - tv_loss_tensor(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn obj_and_energy_examples() {
        assert!((obj_loss(&[0.9, 0.7]) - 0.8).abs() < 1e-12);
        assert_eq!(obj_loss(&[]), 0.0);
        assert_eq!(obj_loss_with(&[0.2, 0.9, 0.4], ObjAggregation::Max), 0.9);
        let cfg = EnergyConfig::new(0.1, 1.0).unwrap();
        assert!((energy(0.5, 2.0, &cfg) - 0.7).abs() < 1e-12);
        assert_eq!(energy(1.0, 0.0, &EnergyConfig::new(7.0, 1.0).unwrap()), 1.0);
        let half = EnergyConfig::new(0.1, 2.0).unwrap();
        assert!((energy(0.5, 2.0, &half) - 0.35).abs() < 1e-12);
        assert!(EnergyConfig::new(0.1, 0.0).is_err());
    }

    #[test]
    fn adversary_and_info_examples() {
        assert_eq!(adversary_objective(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(adversary_objective(&[0.25]).unwrap(), 0.25);
        assert!(adversary_objective(&[]).is_err());
        let zero = info_objective(&[0.0; 4], &[0.0; 3]).unwrap();
        assert!((zero - 2.0 * 2f64.ln()).abs() < 1e-12);
        let tail = info_objective(&[20.0], &[-20.0]).unwrap();
        assert!((tail - 2.0 * (-20f64).exp()).abs() < 1e-15 && (tail - 4.1e-9).abs() < 1e-10);
        assert!(info_objective(&[], &[1.0]).is_err());
        assert_eq!(total_stage_one_loss(2.0, 1.0), 3.0);
    }

    #[test]
    fn info_var_matches_scalar() {
        let joint = [0.3, -1.2, 2.5];
        let marginal = [1.1, -0.4];
        let g = Graph::new();
        let v = info_objective_var(
            g.constant(Tensor::new(&[3], joint.to_vec())),
            g.constant(Tensor::new(&[2], marginal.to_vec())),
        )
        .unwrap();
        assert!((v.item() - info_objective(&joint, &marginal).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn obj_var_modes() {
        let g = Graph::new();
        let c = g.leaf(Tensor::new(&[3], vec![0.2, 0.9, 0.4]));
        assert!((obj_loss_var(c, ObjAggregation::Mean).unwrap().item() - 0.5).abs() < 1e-12);
        let m = obj_loss_var(c, ObjAggregation::Max).unwrap();
        assert_eq!(m.item(), 0.9);
        let grads = g.backward(m);
        assert_eq!(grads.get(c).unwrap().data(), &[0.0, 1.0, 0.0]);
        assert!(obj_loss_var(g.constant(Tensor::zeros(&[0])), ObjAggregation::Mean).is_none());
    }
}
