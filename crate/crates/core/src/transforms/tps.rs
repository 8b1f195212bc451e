use std::rc::Rc;

use advtex_autograd::{SparseMap, Var};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::push_bilinear;
use crate::error::{Error, Result};
use crate::torus::TexturePattern;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsConfig {
    pub enabled: bool,
    pub grid_size: usize,
    /// Displacement standard deviation in normalized patch units.
    pub sigma: f64,
}

impl Default for TpsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            grid_size: 5,
            sigma: 0.03,
        }
    }
}

/// Control points and their displacements, both in normalized `(x, y)`
/// patch coordinates with `x` along columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsWarp {
    pub control: Vec<[f64; 2]>,
    pub displacement: Vec<[f64; 2]>,
}

/// `U(r) = r² log r²`, written in terms of `r²`.
pub fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

impl TpsWarp {
    pub fn grid(grid_size: usize) -> Result<Self> {
        if grid_size < 3 {
            return Err(Error::InvalidArgument(format!(
                "TPS grid must be at least 3×3, got {grid_size}"
            )));
        }
        let step = 1.0 / (grid_size - 1) as f64;
        let control = (0..grid_size)
            .flat_map(|i| (0..grid_size).map(move |j| [j as f64 * step, i as f64 * step]))
            .collect::<Vec<_>>();
        let displacement = vec![[0.0; 2]; control.len()];
        Ok(Self { control, displacement })
    }

    pub fn is_identity(&self) -> bool {
        self.displacement.iter().all(|d| d[0] == 0.0 && d[1] == 0.0)
    }

    /// Solves for the interpolating spline.
    pub fn solve(&self) -> Result<TpsSolution> {
        let n = self.control.len();
        if n != self.displacement.len() {
            return Err(Error::Shape(format!(
                "{n} control points but {} displacements",
                self.displacement.len()
            )));
        }
        if n < 3 {
            return Err(Error::NumericDegeneracy("TPS needs at least 3 control points".into()));
        }
        let m = n + 3;
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            let [xi, yi] = self.control[i];
            for j in 0..n {
                let [xj, yj] = self.control[j];
                a[(i, j)] = tps_kernel((xi - xj).powi(2) + (yi - yj).powi(2));
            }
            for (k, v) in [1.0, xi, yi].into_iter().enumerate() {
                a[(i, n + k)] = v;
                a[(n + k, i)] = v;
            }
        }
        let lu = a.clone().lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..m).map(|i| u[(i, i)].abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if max.is_nan() || max <= 0.0 || min / max < 1e-12 {
            return Err(Error::NumericDegeneracy(
                "TPS system is singular; control points are duplicated or collinear".into(),
            ));
        }
        let mut rhs = DMatrix::<f64>::zeros(m, 2);
        for (i, d) in self.displacement.iter().enumerate() {
            rhs[(i, 0)] = d[0];
            rhs[(i, 1)] = d[1];
        }
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::NumericDegeneracy("TPS system could not be solved".into()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDegeneracy("TPS solution is not finite".into()));
        }
        let col = |c: usize| DVector::from_iterator(m, sol.column(c).iter().copied());
        let (sx, sy) = (col(0), col(1));
        Ok(TpsSolution {
            control: self.control.clone(),
            weights: (0..n).map(|i| [sx[i], sy[i]]).collect(),
            affine: [[sx[n], sy[n]], [sx[n + 1], sy[n + 1]], [sx[n + 2], sy[n + 2]]],
        })
    }
}

/// Coefficients of `f(p) = a₀ + a₁ x + a₂ y + Σ wᵢ U(|p − pᵢ|)`.
#[derive(Clone, Debug)]
pub struct TpsSolution {
    control: Vec<[f64; 2]>,
    weights: Vec<[f64; 2]>,
    affine: [[f64; 2]; 3],
}

impl TpsSolution {
    pub fn displacement_at(&self, x: f64, y: f64) -> [f64; 2] {
        let mut out = [
            self.affine[0][0] + self.affine[1][0] * x + self.affine[2][0] * y,
            self.affine[0][1] + self.affine[1][1] * x + self.affine[2][1] * y,
        ];
        for (p, w) in self.control.iter().zip(&self.weights) {
            let u = tps_kernel((x - p[0]).powi(2) + (y - p[1]).powi(2));
            out[0] += w[0] * u;
            out[1] += w[1] * u;
        }
        out
    }
}

pub fn sample_tps<R: Rng + ?Sized>(rng: &mut R, grid_size: usize, sigma: f64) -> Result<TpsWarp> {
    let mut warp = TpsWarp::grid(grid_size)?;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("TPS sigma {sigma}: {e}")))?;
        for d in &mut warp.displacement {
            *d = [normal.sample(rng), normal.sample(rng)];
        }
    } else if sigma < 0.0 || sigma.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "TPS sigma must be nonnegative, got {sigma}"
        )));
    }
    Ok(warp)
}

/// Linear resampling operator of the warp on a `[c, h, w]` raster. Output
/// pixel `q` reads the input at `q + f(q)`, bilinearly, clamped to the edge.
pub fn tps_map(warp: &TpsWarp, channels: usize, height: usize, width: usize) -> Result<SparseMap> {
    let solution = warp.solve()?;
    let hw = height * width;
    let mut coords = Vec::with_capacity(hw);
    for r in 0..height {
        for c in 0..width {
            let x = (c as f64 + 0.5) / width as f64;
            let y = (r as f64 + 0.5) / height as f64;
            let d = solution.displacement_at(x, y);
            coords.push(((y + d[1]) * height as f64 - 0.5, (x + d[0]) * width as f64 - 0.5));
        }
    }
    let mut builder = SparseMap::builder(&[channels, height, width], channels * hw);
    for ch in 0..channels {
        for &(sy, sx) in &coords {
            push_bilinear(&mut builder, ch * hw, height, width, sy, sx);
            builder.end_row();
        }
    }
    Ok(builder.finish())
}

pub fn tps_transform(patch: &TexturePattern, warp: &TpsWarp) -> Result<TexturePattern> {
    let shape = patch.tensor().shape();
    let map = tps_map(warp, shape[0], shape[1], shape[2])?;
    let out = map.apply(patch.tensor().data());
    TexturePattern::from_clamped(advtex_autograd::Tensor::new(shape, out))
}

/// Differentiable warp of a `[c, h, w]` patch variable.
pub fn tps_transform_var<'g>(patch: Var<'g>, warp: &TpsWarp) -> Result<Var<'g>> {
    let shape = patch.shape();
    let [c, h, w] = shape[..] else {
        return Err(Error::Shape(format!("expected C×H×W patch, got {shape:?}")));
    };
    if warp.is_identity() {
        return Ok(patch);
    }
    Ok(patch.sparse(Rc::new(tps_map(warp, c, h, w)?)))
}
