use advtex_autograd::{Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::TexturePattern;

/// Closed sampling interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn check(&self, name: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo > self.hi {
            return Err(Error::InvalidArgument(format!(
                "{name} range [{}, {}] is not ordered",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Sampling ranges of the photometric and geometric randomization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EotConfig {
    /// Patch width as a fraction of the target box width.
    pub scale: Range,
    pub contrast: Range,
    pub brightness: Range,
    /// Half-width of the per-pixel uniform noise.
    pub noise_amplitude: Range,
    /// Degrees.
    pub rotation: Range,
}

impl Default for EotConfig {
    fn default() -> Self {
        Self {
            scale: Range::new(0.55 * 0.9, 0.55 * 1.1),
            contrast: Range::new(0.8, 1.2),
            brightness: Range::new(-0.1, 0.1),
            noise_amplitude: Range::point(0.05),
            rotation: Range::new(-10.0, 10.0),
        }
    }
}

impl EotConfig {
    /// Fixed-scale, photometrically neutral configuration.
    pub fn identity(scale: f64) -> Self {
        Self {
            scale: Range::point(scale),
            contrast: Range::point(1.0),
            brightness: Range::point(0.0),
            noise_amplitude: Range::point(0.0),
            rotation: Range::point(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scale.check("scale")?;
        self.contrast.check("contrast")?;
        self.brightness.check("brightness")?;
        self.noise_amplitude.check("noise_amplitude")?;
        self.rotation.check("rotation")?;
        if self.scale.lo <= 0.0 {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        if self.noise_amplitude.lo < 0.0 {
            return Err(Error::InvalidArgument("noise amplitude must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One draw of the transformation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EotParams {
    pub scale: f64,
    pub contrast: f64,
    pub brightness: f64,
    pub noise_amplitude: f64,
    /// Degrees.
    pub rotation: f64,
}

impl EotParams {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            contrast: 1.0,
            brightness: 0.0,
            noise_amplitude: 0.0,
            rotation: 0.0,
        }
    }
}

pub fn sample_eot<R: Rng + ?Sized>(rng: &mut R, cfg: &EotConfig) -> Result<EotParams> {
    cfg.validate()?;
    Ok(EotParams {
        scale: cfg.scale.sample(rng),
        contrast: cfg.contrast.sample(rng),
        brightness: cfg.brightness.sample(rng),
        noise_amplitude: cfg.noise_amplitude.sample(rng),
        rotation: cfg.rotation.sample(rng),
    })
}

fn noise<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], amplitude: f64) -> Tensor {
    if amplitude == 0.0 {
        return Tensor::zeros(shape);
    }
    Tensor::from_fn(shape, |_| rng.random_range(-amplitude..=amplitude))
}

/// Photometric part of the transform on a `[3, h, w]` patch variable:
/// `clamp(contrast · x + brightness + noise, 0, 1)`. Scale and rotation are
/// applied when the patch is composited, see [`super::place_patch`].
pub fn apply_eot_var<'g, R: Rng + ?Sized>(patch: Var<'g>, p: &EotParams, rng: &mut R) -> Var<'g> {
    if p.contrast == 1.0 && p.brightness == 0.0 && p.noise_amplitude == 0.0 {
        return patch;
    }
    let n = patch.graph().constant(noise(rng, &patch.shape(), p.noise_amplitude));
    patch.scale(p.contrast).offset(p.brightness).add(n).clamp(0.0, 1.0)
}

pub fn apply_eot<R: Rng + ?Sized>(patch: &TexturePattern, p: &EotParams, rng: &mut R) -> Result<TexturePattern> {
    let n = noise(rng, patch.tensor().shape(), p.noise_amplitude);
    let out = patch
        .tensor()
        .zip_map(&n, |x, e| (p.contrast * x + p.brightness + e).clamp(0.0, 1.0));
    TexturePattern::new(out)
}
