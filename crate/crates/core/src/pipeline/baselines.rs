//! Texture synthesis for every compared method.

use std::fmt;
use std::str::FromStr;

use advtex_autograd::{Adam, Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attack::AttackContext;
use super::config::BaselineConfig;
use super::stages::{check_finite, TrainObserver};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::objectives::{adversary_objective_var, LossReport};
use crate::torus::{make_latent_from_local, tile_pattern, toroidal_crop_var, LocalLatentPattern, TexturePattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Ega,
    Tca,
    Rca2x,
    Rca6x,
    TiledPatch,
    RandomTexture,
    TcEga,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::Ega,
        BaselineKind::Tca,
        BaselineKind::Rca2x,
        BaselineKind::Rca6x,
        BaselineKind::TiledPatch,
        BaselineKind::RandomTexture,
        BaselineKind::TcEga,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Ega => "ega",
            BaselineKind::Tca => "tca",
            BaselineKind::Rca2x => "rca2x",
            BaselineKind::Rca6x => "rca6x",
            BaselineKind::TiledPatch => "tiled-patch",
            BaselineKind::RandomTexture => "random-texture",
            BaselineKind::TcEga => "tc-ega",
        }
    }

    /// Whether any crop of the texture is a valid attack by construction.
    pub fn is_expandable(self) -> bool {
        !matches!(self, BaselineKind::Rca2x | BaselineKind::Rca6x)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline {s:?}")))
    }
}

/// Texture of a trained generator. With a latent unit the latent is the
/// unit wrapped to `sides`; without one it is standard normal.
pub fn synthesize_texture<R: Rng + ?Sized>(
    generator: &Generator,
    z_local: Option<&LocalLatentPattern>,
    sides: (usize, usize),
    rng: &mut R,
) -> Result<TexturePattern> {
    let latent = match z_local {
        Some(unit) => make_latent_from_local(unit, sides.0, sides.1)?,
        None => generator.sample_latent(rng, sides.0, sides.1)?,
    };
    generator.generate(&latent)
}

/// A `side × side` unit of `blocks × blocks` uniformly random colors.
pub fn random_color_unit<R: Rng + ?Sized>(rng: &mut R, side: usize, blocks: usize) -> Result<TexturePattern> {
    if side == 0 || blocks == 0 || blocks > side {
        return Err(Error::InvalidArgument(format!(
            "cannot split {side} px into {blocks} blocks"
        )));
    }
    let colors: Vec<[f64; 3]> = (0..blocks * blocks)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect();
    TexturePattern::new(Tensor::from_fn(&[3, side, side], |i| {
        let (ch, r, c) = (i / (side * side), (i / side) % side, i % side);
        colors[(r * blocks / side) * blocks + c * blocks / side][ch]
    }))
}

/// Repeats `unit` until it covers `side × side`, cropping the excess.
pub fn tile_to(unit: &TexturePattern, side: usize) -> Result<TexturePattern> {
    let reps = side.div_ceil(unit.height()).max(side.div_ceil(unit.width())).max(1);
    let tiled = TexturePattern::new(tile_pattern(unit.tensor(), reps, reps)?)?;
    tiled.crop_torus(0, 0, side, side)
}

/// Top-left corner of one training crop of a `side`-pixel raster. Wrapped
/// crops start anywhere; plain crops lie fully inside.
pub fn pixel_window<R: Rng + ?Sized>(rng: &mut R, side: usize, crop: usize, wrap: bool) -> (usize, usize) {
    if wrap {
        (rng.random_range(0..side), rng.random_range(0..side))
    } else {
        (rng.random_range(0..=side - crop), rng.random_range(0..=side - crop))
    }
}

/// Direct pixel optimization of a `side × side` raster. With `wrap` every
/// crop is toroidal at a uniform offset; otherwise it lies fully inside.
/// Pixels are clamped to `[0,1]` after every step.
pub fn optimize_pixels<R: Rng + ?Sized>(
    ctx: &AttackContext<'_>,
    side: usize,
    wrap: bool,
    cfg: &BaselineConfig,
    crop: usize,
    rng: &mut R,
    observer: &mut dyn TrainObserver,
) -> Result<(TexturePattern, Vec<LossReport>)> {
    if crop == 0 || (!wrap && crop > side) {
        return Err(Error::InvalidArgument(format!(
            "crop {crop} does not fit a {side} px patch"
        )));
    }
    let mut pixels = Tensor::from_fn(&[3, side, side], |_| rng.random::<f64>());
    let mut opt = Adam::new(cfg.lr);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let g = Graph::new();
        let leaf = g.leaf(pixels.clone());
        let patches = (0..cfg.batch_size)
            .map(|_| {
                let (r, c) = pixel_window(rng, side, crop, wrap);
                toroidal_crop_var(leaf, r as i64, c as i64, crop, crop)
            })
            .collect::<Result<Vec<Var>>>()?;
        let terms = ctx.energies(Var::stack(&patches), rng)?;
        let adv = adversary_objective_var(terms.energies)?;
        let n = terms.u_obj.len().max(1) as f64;
        let report = LossReport {
            step,
            u_obj: terms.u_obj.iter().sum::<f64>() / n,
            u_tv: terms.u_tv.iter().sum::<f64>() / n,
            energy: adv.item(),
            info: 0.0,
            total: adv.item(),
        };
        check_finite(&report, observer, None)?;
        let grads = g.backward(adv);
        opt.step_tensor(&mut pixels, &grads.get_or_zeros(leaf));
        pixels.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        observer.pixel_step(&report, &pixels)?;
        log.push(report);
    }
    Ok((TexturePattern::new(pixels)?, log))
}

/// Inputs some baselines need beyond the attack context.
#[derive(Default)]
pub struct BaselineInputs<'a> {
    pub generator: Option<&'a Generator>,
    pub z_local: Option<&'a LocalLatentPattern>,
    pub patch: Option<&'a TexturePattern>,
}

/// Produces the texture of `kind`. `texture_side` sizes the tiled, random
/// and generated textures.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline<R: Rng + ?Sized>(
    kind: BaselineKind,
    ctx: Option<&AttackContext<'_>>,
    inputs: &BaselineInputs<'_>,
    cfg: &BaselineConfig,
    crop: usize,
    latent_side: usize,
    rng: &mut R,
    observer: &mut dyn TrainObserver,
) -> Result<TexturePattern> {
    let need_ctx = || ctx.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs a detector and training set")));
    let need_gen = || {
        inputs
            .generator
            .ok_or_else(|| Error::InvalidArgument(format!("{kind} needs a trained generator")))
    };
    match kind {
        BaselineKind::Ega => synthesize_texture(need_gen()?, None, (latent_side, latent_side), rng),
        BaselineKind::TcEga => {
            let unit = inputs
                .z_local
                .ok_or_else(|| Error::InvalidArgument("tc-ega needs an optimized latent unit".into()))?;
            synthesize_texture(need_gen()?, Some(unit), (latent_side, latent_side), rng)
        }
        BaselineKind::Tca => Ok(optimize_pixels(need_ctx()?, cfg.tca_side, true, cfg, crop, rng, observer)?.0),
        BaselineKind::Rca2x => Ok(optimize_pixels(need_ctx()?, cfg.rca2_side, false, cfg, crop, rng, observer)?.0),
        BaselineKind::Rca6x => Ok(optimize_pixels(need_ctx()?, cfg.rca6_side, false, cfg, crop, rng, observer)?.0),
        BaselineKind::TiledPatch => {
            let patch = inputs
                .patch
                .ok_or_else(|| Error::InvalidArgument("tiled-patch needs an input patch file".into()))?;
            let side = inputs
                .generator
                .map(|g| g.output_size(latent_side, latent_side).0)
                .unwrap_or(patch.height() * 4);
            tile_to(patch, side)
        }
        BaselineKind::RandomTexture => {
            let unit = random_color_unit(rng, cfg.random_unit_side, cfg.random_blocks)?;
            let side = inputs
                .generator
                .map(|g| g.output_size(latent_side, latent_side).0)
                .unwrap_or(cfg.random_unit_side * 4);
            tile_to(&unit, side)
        }
    }
}
