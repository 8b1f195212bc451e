//! Dense numeric kernels behind the graph ops.
//!
//! Convolutions are lowered to im2col + GEMM. Every kernel processes batch
//! elements sequentially in a fixed order so results are bit-reproducible.

use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

pub(crate) fn conv_out_side(input: usize, kernel: usize, g: ConvGeom) -> usize {
    assert!(
        input + 2 * g.pad >= kernel,
        "kernel {kernel} larger than padded input {input}+2*{}",
        g.pad
    );
    (input + 2 * g.pad - kernel) / g.stride + 1
}

/// `c = a (m×k) · b (k×n) + beta·c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a`, `b` and a dense
    // row-major `c` of size m×n; the callers below construct them from the
    // buffer lengths they allocate.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output columns `ox` whose input column `ox·stride + kj − pad` lies in
/// `[0, w)`.
fn valid_cols(w: usize, kj: usize, g: ConvGeom, ow: usize) -> std::ops::Range<usize> {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride);
    let hi = if w + g.pad > kj {
        (w + g.pad - kj).div_ceil(g.stride)
    } else {
        0
    };
    lo.min(ow)..hi.min(ow).max(lo.min(ow))
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    let p = oh * ow;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let valid = valid_cols(w, kj, g, ow);
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    out_row[..valid.start].fill(0.0);
                    out_row[valid.end..].fill(0.0);
                    let first = valid.start * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        out_row[valid.clone()].copy_from_slice(&src[first..first + valid.len()]);
                    } else {
                        for (o, ix) in out_row[valid.clone()].iter_mut().zip((first..).step_by(g.stride)) {
                            *o = src[ix];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    let p = oh * ow;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                let valid = valid_cols(w, kj, g, ow);
                if valid.is_empty() {
                    continue;
                }
                let first = valid.start * g.stride + kj - g.pad;
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let s = &src[oy * ow + valid.start..oy * ow + valid.end];
                    for (v, ix) in s.iter().zip((first..).step_by(g.stride)) {
                        dst[ix] += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &Tensor, weight: &Tensor, g: ConvGeom) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let (o, wc, kh, kw) = weight.dims4();
    assert_eq!(c, wc, "conv2d: input has {c} channels, kernel expects {wc}");
    let oh = conv_out_side(h, kh, g);
    let ow = conv_out_side(w, kw, g);
    let k = c * kh * kw;
    let p = oh * ow;
    let mut out = vec![0.0; n * o * p];
    let mut cols = vec![0.0; k * p];
    for b in 0..n {
        let xb = &x.data()[b * c * h * w..(b + 1) * c * h * w];
        im2col(xb, c, h, w, kh, kw, g, oh, ow, &mut cols);
        gemm(
            o,
            k,
            p,
            weight.data(),
            k as isize,
            1,
            &cols,
            p as isize,
            1,
            0.0,
            &mut out[b * o * p..(b + 1) * o * p],
        );
    }
    Tensor::new(&[n, o, oh, ow], out)
}

/// Returns `(d input, d weight)`; either may be skipped.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    g: ConvGeom,
    need_input: bool,
    need_weight: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (n, c, h, w) = x.dims4();
    let (o, _, kh, kw) = weight.dims4();
    let (_, _, oh, ow) = grad_out.dims4();
    let k = c * kh * kw;
    let p = oh * ow;
    let mut dx = need_input.then(|| vec![0.0; n * c * h * w]);
    let mut dw = need_weight.then(|| vec![0.0; o * k]);
    let mut cols = vec![0.0; k * p];
    for b in 0..n {
        let gb = &grad_out.data()[b * o * p..(b + 1) * o * p];
        if let Some(dw) = dw.as_mut() {
            let xb = &x.data()[b * c * h * w..(b + 1) * c * h * w];
            im2col(xb, c, h, w, kh, kw, g, oh, ow, &mut cols);
            // dW (o×k) += gb (o×p) · colsᵀ (p×k)
            gemm(o, p, k, gb, p as isize, 1, &cols, 1, p as isize, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols (k×p) = Wᵀ (k×o) · gb (o×p)
            gemm(k, o, p, weight.data(), 1, k as isize, gb, p as isize, 1, 0.0, &mut cols);
            col2im_add(
                &cols,
                c,
                h,
                w,
                kh,
                kw,
                g,
                oh,
                ow,
                &mut dx[b * c * h * w..(b + 1) * c * h * w],
            );
        }
    }
    (
        dx.map(|d| Tensor::new(x.shape(), d)),
        dw.map(|d| Tensor::new(weight.shape(), d)),
    )
}

pub(crate) fn matmul_forward(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = dims2(a);
    let (k2, n) = dims2(b);
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), k as isize, 1, b.data(), n as isize, 1, 0.0, &mut out);
    Tensor::new(&[m, n], out)
}

pub(crate) fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = dims2(a);
    let (_, n) = dims2(b);
    let mut da = vec![0.0; m * k];
    // dA (m×k) = G (m×n) · Bᵀ (n×k)
    gemm(
        m,
        n,
        k,
        grad.data(),
        n as isize,
        1,
        b.data(),
        1,
        n as isize,
        0.0,
        &mut da,
    );
    let mut db = vec![0.0; k * n];
    // dB (k×n) = Aᵀ (k×m) · G (m×n)
    gemm(
        k,
        m,
        n,
        a.data(),
        1,
        k as isize,
        grad.data(),
        n as isize,
        1,
        0.0,
        &mut db,
    );
    (Tensor::new(&[m, k], da), Tensor::new(&[k, n], db))
}

fn dims2(t: &Tensor) -> (usize, usize) {
    match t.shape() {
        [m, n] => (*m, *n),
        s => panic!("expected a 2-d tensor, got shape {s:?}"),
    }
}

pub(crate) fn upsample_forward(x: &Tensor, factor: usize) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![0.0; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..oh {
            let srow = &src[(y / factor) * w..(y / factor + 1) * w];
            for (xo, d) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *d = srow[xo / factor];
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub(crate) fn upsample_backward(grad: &Tensor, factor: usize) -> Tensor {
    let (n, c, oh, ow) = grad.dims4();
    let (h, w) = (oh / factor, ow / factor);
    let mut dx = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        let src = &grad.data()[plane * oh * ow..(plane + 1) * oh * ow];
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for xo in 0..ow {
                dst[(y / factor) * w + xo / factor] += src[y * ow + xo];
            }
        }
    }
    Tensor::new(&[n, c, h, w], dx)
}

pub(crate) fn avgpool_forward(x: &Tensor, k: usize) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let (oh, ow) = (h / k, w / k);
    assert!(oh > 0 && ow > 0, "avg_pool window {k} larger than input {h}x{w}");
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += src[(oy * k + dy) * w + ox * k + dx];
                    }
                }
                dst[oy * ow + ox] = acc * norm;
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub(crate) fn avgpool_backward(input_shape: &[usize], grad: &Tensor, k: usize) -> Tensor {
    let (n, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let (_, _, oh, ow) = grad.dims4();
    let norm = 1.0 / (k * k) as f64;
    let mut dx = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        let src = &grad.data()[plane * oh * ow..(plane + 1) * oh * ow];
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let gv = src[oy * ow + ox] * norm;
                for dy in 0..k {
                    for dx in 0..k {
                        dst[(oy * k + dy) * w + ox * k + dx] += gv;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape, dx)
}
