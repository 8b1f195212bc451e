//! The two optimization stages of the expandable generative attack.

use advtex_autograd::{Adam, Graph, Tensor, Var};
use rand::Rng;

use super::attack::{crop_batch, interior_offsets, AttackContext};
use super::config::{StageOneConfig, StageTwoConfig};
use crate::error::{Error, Result};
use crate::generator::{standard_normal, AuxNet, Generator};
use crate::objectives::{adversary_objective_var, info_objective_var, LossReport};
use crate::torus::{random_toroidal_offsets, toroidal_crop_var, LocalLatentPattern};

/// Hooks called by the optimizers. Every method defaults to a no-op.
pub trait TrainObserver {
    fn stage_one_step(&mut self, _report: &LossReport, _generator: &Generator, _aux: &AuxNet) -> Result<()> {
        Ok(())
    }

    fn stage_two_step(&mut self, _report: &LossReport, _z_local: &Tensor) -> Result<()> {
        Ok(())
    }

    fn pixel_step(&mut self, _report: &LossReport, _pixels: &Tensor) -> Result<()> {
        Ok(())
    }

    /// Called once before a divergence error is returned.
    fn diverged(&mut self, _report: &LossReport, _generator: Option<(&Generator, &AuxNet)>) {}
}

impl TrainObserver for () {}

pub(crate) fn check_finite(
    report: &LossReport,
    observer: &mut dyn TrainObserver,
    nets: Option<(&Generator, &AuxNet)>,
) -> Result<()> {
    if [report.u_obj, report.u_tv, report.energy, report.info, report.total]
        .iter()
        .all(|v| v.is_finite())
    {
        return Ok(());
    }
    observer.diverged(report, nets);
    Err(Error::Divergence {
        step: report.step,
        detail: format!("non-finite loss {report:?}"),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Latent cells under each pixel window: the nearest cell-aligned window of
/// `ceil(crop / expansion)` cells, kept inside the latent.
pub fn latent_windows(
    offsets: &[(usize, usize)],
    crop: usize,
    expansion: usize,
    latent_side: usize,
) -> Vec<(usize, usize)> {
    let k = crop.div_ceil(expansion).min(latent_side);
    let cell = |px: usize| ((px + expansion / 2) / expansion).min(latent_side - k);
    offsets.iter().map(|&(r, c)| (cell(r), cell(c))).collect()
}

/// Jointly trains the generator and the auxiliary network.
///
/// Each step draws a batch of minimum-size latents, cuts one random interior
/// window of `crop` pixels from every generated texture, and minimizes the mean
/// energy of those patches plus the negated mutual-information estimate
/// between each patch and the latent cells under it.
pub fn train_stage_one<R: Rng + ?Sized>(
    ctx: &AttackContext<'_>,
    generator: &mut Generator,
    aux: &mut AuxNet,
    cfg: &StageOneConfig,
    crop: usize,
    rng: &mut R,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<LossReport>> {
    if aux.spec().latent_channels != generator.spec().latent_channels {
        return Err(Error::Shape("aux net and generator disagree on latent channels".into()));
    }
    let (lh, lw) = generator.spec().min_latent_side;
    let channels = generator.spec().latent_channels;
    let (th, tw) = generator.output_size(lh, lw);
    if crop > th.min(tw) {
        return Err(Error::InvalidArgument(format!(
            "crop {crop} exceeds the {th}×{tw} texture"
        )));
    }
    let b = cfg.batch_size;
    let mut gen_opt = Adam::new(cfg.lr);
    let mut aux_opt = Adam::new(cfg.aux_lr);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let g = Graph::new();
        let gen_vars = generator.params().bind(&g);
        let aux_vars = aux.params().bind(&g);
        let z = g.constant(standard_normal(rng, &[b, channels, lh, lw]));
        let textures = generator.forward(&gen_vars, z)?;
        let offsets = interior_offsets(rng, b, (th, tw), crop, generator.border_margin());
        let patches = crop_batch(textures, &offsets, crop)?;
        let terms = ctx.energies(patches, rng)?;
        let adv = adversary_objective_var(terms.energies)?;
        let z_marginal = g.constant(standard_normal(rng, &[b, channels, lh, lw]));
        let cells = latent_windows(&offsets, crop, generator.expansion(), lh.min(lw));
        let k = crop.div_ceil(generator.expansion()).min(lh.min(lw));
        let joint = aux.forward(&aux_vars, patches, crop_batch(z, &cells, k)?)?;
        let marginal = aux.forward(&aux_vars, patches, crop_batch(z_marginal, &cells, k)?)?;
        let info = info_objective_var(joint, marginal)?;
        let total = adv.add(info.scale(cfg.info_weight));
        let report = LossReport {
            step,
            u_obj: mean(&terms.u_obj),
            u_tv: mean(&terms.u_tv),
            energy: adv.item(),
            info: info.item(),
            total: total.item(),
        };
        check_finite(&report, observer, Some((generator, aux)))?;
        let grads = g.backward(total);
        let gen_grads = generator.params().gradients(&gen_vars, &grads);
        let aux_grads = aux.params().gradients(&aux_vars, &grads);
        drop(gen_vars);
        drop(aux_vars);
        gen_opt.step(generator.params_mut(), &gen_grads);
        aux_opt.step(aux.params_mut(), &aux_grads);
        observer.stage_one_step(&report, generator, aux)?;
        log.push(report);
    }
    Ok(log)
}

/// Draws a standard-normal latent unit of `channels × side × side`.
pub fn init_local_latent<R: Rng + ?Sized>(rng: &mut R, channels: usize, side: usize) -> Result<LocalLatentPattern> {
    LocalLatentPattern::new(standard_normal(rng, &[channels, side, side]))
}

/// Optimizes a toroidal latent unit against a frozen generator.
///
/// Every sample of a step crops its own `latent_side²` window from the unit
/// at a random toroidal offset, generates a texture, and cuts a random
/// `crop`-pixel patch from it. Only the mean energy is minimized.
pub fn optimize_latent_stage_two<R: Rng + ?Sized>(
    ctx: &AttackContext<'_>,
    generator: &Generator,
    init: LocalLatentPattern,
    cfg: &StageTwoConfig,
    crop: usize,
    rng: &mut R,
    observer: &mut dyn TrainObserver,
) -> Result<(LocalLatentPattern, Vec<LossReport>)> {
    if init.channels() != generator.spec().latent_channels {
        return Err(Error::Shape(format!(
            "latent unit has {} channels, generator expects {}",
            init.channels(),
            generator.spec().latent_channels
        )));
    }
    let side = init.side();
    let s = cfg.latent_side;
    let (th, tw) = generator.output_size(s, s);
    if crop > th.min(tw) {
        return Err(Error::InvalidArgument(format!(
            "crop {crop} exceeds the {th}×{tw} texture"
        )));
    }
    let mut z_local = init.into_tensor();
    let mut opt = Adam::new(cfg.lr);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let g = Graph::new();
        let frozen = generator.params().bind_frozen(&g);
        let unit = g.leaf(z_local.clone());
        let latents = (0..cfg.batch_size)
            .map(|_| {
                let (r, c) = random_toroidal_offsets(rng, side)?;
                toroidal_crop_var(unit, r as i64, c as i64, s, s)
            })
            .collect::<Result<Vec<Var>>>()?;
        let textures = generator.forward(&frozen, Var::stack(&latents))?;
        let offsets = interior_offsets(rng, cfg.batch_size, (th, tw), crop, generator.border_margin());
        let patches = crop_batch(textures, &offsets, crop)?;
        let terms = ctx.energies(patches, rng)?;
        let adv = adversary_objective_var(terms.energies)?;
        let report = LossReport {
            step,
            u_obj: mean(&terms.u_obj),
            u_tv: mean(&terms.u_tv),
            energy: adv.item(),
            info: 0.0,
            total: adv.item(),
        };
        check_finite(&report, observer, None)?;
        let grads = g.backward(adv);
        let grad = grads.get_or_zeros(unit);
        opt.step_tensor(&mut z_local, &grad);
        observer.stage_two_step(&report, &z_local)?;
        log.push(report);
    }
    Ok((LocalLatentPattern::new(z_local)?, log))
}
