//! Toroidal tiling math on `[C, H, W]` tensors.
//!
//! A pattern is treated as the unfolded plane of a 2-torus: row `H` wraps to
//! row 0 and column `W` to column 0. Cropping at any offset and any output
//! size therefore yields a window of the infinite periodic tiling, and tiles
//! meet without seams.

use advtex_autograd::{Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};

/// The `C × L × L` latent unit optimized in stage two.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLatentPattern(Tensor);

/// A `C × H × W` latent tensor fed to the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVariable(Tensor);

/// An RGB raster `3 × H × W` with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TexturePattern(Tensor);

fn check_rank3(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[c, h, w] if c > 0 && h > 0 && w > 0 => Ok((c, h, w)),
        s => Err(Error::Shape(format!(
            "{what} must be a non-empty C×H×W tensor, got {s:?}"
        ))),
    }
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} contains NaN or Inf")))
    }
}

impl LocalLatentPattern {
    pub fn new(data: Tensor) -> Result<Self> {
        let (_, h, w) = check_rank3(&data, "local latent pattern")?;
        if h != w {
            return Err(Error::Shape(format!(
                "local latent pattern must be square, got {h}×{w}"
            )));
        }
        check_finite(&data, "local latent pattern")?;
        Ok(Self(data))
    }

    pub fn side(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

impl LatentVariable {
    pub fn new(data: Tensor) -> Result<Self> {
        check_rank3(&data, "latent variable")?;
        check_finite(&data, "latent variable")?;
        Ok(Self(data))
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

impl TexturePattern {
    pub fn new(data: Tensor) -> Result<Self> {
        let (c, _, _) = check_rank3(&data, "texture")?;
        if c != 3 {
            return Err(Error::Shape(format!("texture must have 3 channels, got {c}")));
        }
        if let Some(v) = data.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("texture value {v} outside [0, 1]")));
        }
        Ok(Self(data))
    }

    /// Clamps into `[0, 1]` (NaN becomes 0) before validating.
    pub fn from_clamped(data: Tensor) -> Result<Self> {
        let clamped = data.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::new(clamped)
    }

    pub fn constant(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let plane = height * width;
        Self::new(Tensor::from_fn(&[3, height, width], |i| rgb[i / plane]))
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Window of the periodic tiling of this texture.
    pub fn crop_torus(&self, offset_row: i64, offset_col: i64, rows: usize, cols: usize) -> Result<Self> {
        Ok(Self(toroidal_crop(&self.0, offset_row, offset_col, rows, cols)?))
    }

    pub fn tile(&self, reps_rows: usize, reps_cols: usize) -> Result<Self> {
        Ok(Self(tile_pattern(&self.0, reps_rows, reps_cols)?))
    }
}

/// Flat source indices of a toroidal crop of a `[c, rows, cols]` tensor.
///
/// Element `[k, i, j]` of the crop reads
/// `[k, (offset_row + i) mod rows, (offset_col + j) mod cols]`.
pub fn torus_index(
    shape: (usize, usize, usize),
    offset_row: i64,
    offset_col: i64,
    out_rows: usize,
    out_cols: usize,
) -> Vec<usize> {
    let (c, rows, cols) = shape;
    let r0 = offset_row.rem_euclid(rows as i64) as usize;
    let c0 = offset_col.rem_euclid(cols as i64) as usize;
    let col_index: Vec<usize> = (0..out_cols).map(|j| (c0 + j) % cols).collect();
    let mut index = Vec::with_capacity(c * out_rows * out_cols);
    for k in 0..c {
        for i in 0..out_rows {
            let row_base = (k * rows + (r0 + i) % rows) * cols;
            index.extend(col_index.iter().map(|&j| row_base + j));
        }
    }
    index
}

fn check_out_size(out_rows: usize, out_cols: usize) -> Result<()> {
    if out_rows == 0 || out_cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "output size must be positive, got {out_rows}×{out_cols}"
        )));
    }
    Ok(())
}

/// Crops a `[C, H, W]` pattern as if it were wrapped on a torus. Offsets may
/// be negative or exceed the pattern; the output may be larger than the
/// pattern.
pub fn toroidal_crop(
    pattern: &Tensor,
    offset_row: i64,
    offset_col: i64,
    out_rows: usize,
    out_cols: usize,
) -> Result<Tensor> {
    let shape = check_rank3(pattern, "pattern")?;
    check_out_size(out_rows, out_cols)?;
    let index = torus_index(shape, offset_row, offset_col, out_rows, out_cols);
    let src = pattern.data();
    Ok(Tensor::new(
        &[shape.0, out_rows, out_cols],
        index.into_iter().map(|i| src[i]).collect(),
    ))
}

/// Differentiable toroidal crop of a `[C, H, W]` var.
pub fn toroidal_crop_var<'g>(
    pattern: Var<'g>,
    offset_row: i64,
    offset_col: i64,
    out_rows: usize,
    out_cols: usize,
) -> Result<Var<'g>> {
    let shape = pattern.shape();
    let (c, h, w) = match shape[..] {
        [c, h, w] if c > 0 && h > 0 && w > 0 => (c, h, w),
        _ => return Err(Error::Shape(format!("pattern must be C×H×W, got {shape:?}"))),
    };
    check_out_size(out_rows, out_cols)?;
    let index = torus_index((c, h, w), offset_row, offset_col, out_rows, out_cols);
    Ok(pattern.gather(&[c, out_rows, out_cols], &index))
}

/// Repeats a `[C, H, W]` pattern `reps_rows × reps_cols` times.
pub fn tile_pattern(pattern: &Tensor, reps_rows: usize, reps_cols: usize) -> Result<Tensor> {
    let (c, h, w) = check_rank3(pattern, "pattern")?;
    if reps_rows == 0 || reps_cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "repetitions must be positive, got {reps_rows}×{reps_cols}"
        )));
    }
    let (oh, ow) = (h * reps_rows, w * reps_cols);
    let src = pattern.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for k in 0..c {
        for i in 0..oh {
            let row = &src[(k * h + i % h) * w..(k * h + i % h + 1) * w];
            for _ in 0..reps_cols {
                out.extend_from_slice(row);
            }
        }
    }
    Ok(Tensor::new(&[c, oh, ow], out))
}

/// Builds an `H × W` latent by wrapping `z_local` from offset `(0, 0)`.
pub fn make_latent_from_local(z_local: &LocalLatentPattern, height: usize, width: usize) -> Result<LatentVariable> {
    let t = toroidal_crop(z_local.tensor(), 0, 0, height, width)?;
    LatentVariable::new(t)
}

/// Uniform offsets in `{0, …, side − 1}²`.
pub fn random_toroidal_offsets<R: Rng + ?Sized>(rng: &mut R, pattern_side: usize) -> Result<(usize, usize)> {
    if pattern_side == 0 {
        return Err(Error::InvalidArgument("pattern side must be positive".into()));
    }
    Ok((rng.random_range(0..pattern_side), rng.random_range(0..pattern_side)))
}
