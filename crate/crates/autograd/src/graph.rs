use std::cell::RefCell;
use std::rc::Rc;

use crate::kernels::{self, ConvGeom};
use crate::Tensor;

/// Element-wise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Softplus,
    /// `|x|` with the kink replaced by a C¹ cubic on `(-eps, eps)`; see
    /// [`smooth_abs`].
    SmoothAbs(f64),
    /// Identity on `[lo, hi]`, constant outside; gradient is zero outside.
    Clamp(f64, f64),
    Exp,
    Square,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::SmoothAbs(eps) => smooth_abs(x, eps),
            Unary::Clamp(lo, hi) => x.clamp(lo, hi),
            Unary::Exp => x.exp(),
            Unary::Square => x * x,
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Softplus => sigmoid(x),
            Unary::SmoothAbs(eps) => {
                if x.abs() >= eps {
                    x.signum()
                } else {
                    (4.0 * eps * x - 3.0 * x * x.abs()) / (eps * eps)
                }
            }
            Unary::Clamp(lo, hi) => {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Exp => y,
            Unary::Square => 2.0 * x,
        }
    }
}

/// `|x|` outside `(-eps, eps)` and `x² (2 eps - |x|) / eps²` inside: exactly
/// zero at the origin, exact away from it, continuously differentiable.
pub fn smooth_abs(x: f64, eps: f64) -> f64 {
    let a = x.abs();
    if a >= eps {
        a
    } else {
        x * x * (2.0 * eps - a) / (eps * eps)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Sparse linear map `out[i] = Σ_t weight[t] · x[src[t]]` over the taps of
/// row `i`, stored in CSR layout. Covers bilinear resampling, cropping with
/// wrap-around and nearest lookups.
#[derive(Clone, Debug)]
pub struct SparseMap {
    out_shape: Vec<usize>,
    in_numel: usize,
    row_start: Vec<usize>,
    src: Vec<usize>,
    weight: Vec<f64>,
}

impl SparseMap {
    pub fn builder(out_shape: &[usize], in_numel: usize) -> SparseMapBuilder {
        let rows: usize = out_shape.iter().product();
        let mut row_start = Vec::with_capacity(rows + 1);
        row_start.push(0);
        SparseMapBuilder {
            map: SparseMap {
                out_shape: out_shape.to_vec(),
                in_numel,
                row_start,
                src: Vec::with_capacity(rows * 4),
                weight: Vec::with_capacity(rows * 4),
            },
        }
    }

    /// One tap per output element with unit weight.
    pub fn gather(out_shape: &[usize], in_numel: usize, index: &[usize]) -> SparseMap {
        let mut b = Self::builder(out_shape, in_numel);
        for &i in index {
            b.push(i, 1.0);
            b.end_row();
        }
        b.finish()
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn in_numel(&self) -> usize {
        self.in_numel
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_numel, "sparse map input size");
        self.row_start
            .windows(2)
            .map(|r| (r[0]..r[1]).map(|t| self.weight[t] * x[self.src[t]]).sum())
            .collect()
    }

    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_numel];
        for (i, r) in self.row_start.windows(2).enumerate() {
            for t in r[0]..r[1] {
                dx[self.src[t]] += self.weight[t] * g[i];
            }
        }
        dx
    }
}

pub struct SparseMapBuilder {
    map: SparseMap,
}

impl SparseMapBuilder {
    pub fn push(&mut self, src: usize, weight: f64) {
        debug_assert!(src < self.map.in_numel);
        if weight != 0.0 {
            self.map.src.push(src);
            self.map.weight.push(weight);
        }
    }

    pub fn end_row(&mut self) {
        self.map.row_start.push(self.map.src.len());
    }

    pub fn finish(self) -> SparseMap {
        let rows: usize = self.map.out_shape.iter().product();
        assert_eq!(
            self.map.row_start.len(),
            rows + 1,
            "sparse map built {} rows, shape needs {rows}",
            self.map.row_start.len() - 1
        );
        self.map
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    /// Broadcast a `[C]` vector over axis 1.
    AddBias(usize, usize),
    /// Broadcast a `[C]` vector multiplicatively over axis 1.
    MulChannel(usize, usize),
    Conv2d(usize, usize, ConvGeom),
    Upsample(usize, usize),
    AvgPool(usize, usize),
    Unary(usize, Unary),
    Sum(usize),
    Mean(usize),
    Sparse(usize, Rc<SparseMap>),
    /// `out = base; out[index[i]] = src[i]`.
    Overwrite(usize, usize, Rc<Vec<usize>>),
    Matmul(usize, usize),
    Concat(Vec<usize>, usize),
    Reshape(usize),
    Slice0(usize, usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A tape recording every operation applied to its [`Var`]s.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A value that gradients do not flow into.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is collected by [`Graph::backward`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse-mode sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        assert!(std::ptr::eq(output.graph, self), "var from another graph");
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.numel(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(output.id + 1);
        grads.resize_with(output.id + 1, || None);
        grads[output.id] = Some(Tensor::full(nodes[output.id].value.shape(), 1.0));

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut emit = |target: usize, t: Tensor| {
                if !nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            let need = |target: usize| nodes[target].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    if need(*a) {
                        emit(*a, g.clone());
                    }
                    emit(*b, g);
                }
                Op::Sub(a, b) => {
                    if need(*b) {
                        emit(*b, g.map(|v| -v));
                    }
                    emit(*a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    if need(*a) {
                        emit(*a, g.zip_map(vb, |gv, bv| gv * bv));
                    }
                    if need(*b) {
                        emit(*b, g.zip_map(va, |gv, av| gv * av));
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    emit(*a, g.map(|v| v * s));
                }
                Op::Offset(a) => emit(*a, g),
                Op::AddBias(x, b) => {
                    if need(*b) {
                        let c = nodes[*b].value.numel();
                        emit(*b, reduce_channel(&g, c, |gv, _| gv, None));
                    }
                    emit(*x, g);
                }
                Op::MulChannel(x, s) => {
                    let (vx, vs) = (&nodes[*x].value, &nodes[*s].value);
                    if need(*s) {
                        emit(*s, reduce_channel(&g, vs.numel(), |gv, xv| gv * xv, Some(vx)));
                    }
                    if need(*x) {
                        emit(*x, broadcast_channel(&g, vs, |gv, sv| gv * sv));
                    }
                }
                Op::Conv2d(x, w, geom) => {
                    let (dx, dw) =
                        kernels::conv2d_backward(&nodes[*x].value, &nodes[*w].value, &g, *geom, need(*x), need(*w));
                    if let Some(dx) = dx {
                        emit(*x, dx);
                    }
                    if let Some(dw) = dw {
                        emit(*w, dw);
                    }
                }
                Op::Upsample(x, f) => emit(*x, kernels::upsample_backward(&g, *f)),
                Op::AvgPool(x, k) => emit(*x, kernels::avgpool_backward(nodes[*x].value.shape(), &g, *k)),
                Op::Unary(x, kind) => {
                    let vx = &nodes[*x].value;
                    let vy = &node.value;
                    let d = Tensor::from_fn(vx.shape(), |i| {
                        g.data()[i] * kind.derivative(vx.data()[i], vy.data()[i])
                    });
                    emit(*x, d);
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    emit(*x, Tensor::full(nodes[*x].value.shape(), gv));
                }
                Op::Mean(x) => {
                    let shape = nodes[*x].value.shape();
                    let n: usize = shape.iter().product();
                    emit(*x, Tensor::full(shape, g.item() / n as f64));
                }
                Op::Sparse(x, map) => {
                    let d = map.apply_transpose(g.data());
                    emit(*x, Tensor::new(nodes[*x].value.shape(), d));
                }
                Op::Overwrite(base, src, index) => {
                    if need(*src) {
                        let d: Vec<f64> = index.iter().map(|&i| g.data()[i]).collect();
                        emit(*src, Tensor::new(nodes[*src].value.shape(), d));
                    }
                    if need(*base) {
                        let mut d = g;
                        for &i in index.iter() {
                            d.data_mut()[i] = 0.0;
                        }
                        emit(*base, d);
                    }
                }
                Op::Matmul(a, b) => {
                    let (da, db) = kernels::matmul_backward(&nodes[*a].value, &nodes[*b].value, &g);
                    emit(*a, da);
                    emit(*b, db);
                }
                Op::Concat(parts, axis) => {
                    let shape = node.value.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let total = shape[*axis];
                    let mut offset = 0;
                    for &p in parts {
                        let pv = &nodes[p].value;
                        let len = pv.shape()[*axis];
                        if need(p) {
                            let mut d = Vec::with_capacity(pv.numel());
                            for o in 0..outer {
                                let start = (o * total + offset) * inner;
                                d.extend_from_slice(&g.data()[start..start + len * inner]);
                            }
                            emit(p, Tensor::new(pv.shape(), d));
                        }
                        offset += len;
                    }
                }
                Op::Reshape(x) => {
                    let shape = nodes[*x].value.shape().to_vec();
                    emit(*x, g.reshape(&shape));
                }
                Op::Slice0(x, index) => {
                    let vx = &nodes[*x].value;
                    let inner = g.numel();
                    let mut d = Tensor::zeros(vx.shape());
                    d.data_mut()[index * inner..(index + 1) * inner].copy_from_slice(g.data());
                    emit(*x, d);
                }
            }
        }
        Gradients { grads }
    }
}

fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "channel broadcast needs rank >= 2, got {shape:?}");
    let outer = shape[0];
    let c = shape[1];
    let inner: usize = shape[2..].iter().product();
    (outer, c, inner)
}

fn broadcast_channel(x: &Tensor, v: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (outer, c, inner) = channel_layout(x.shape());
    assert_eq!(v.numel(), c, "channel vector has {} entries, tensor has {c}", v.numel());
    let mut out = x.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for ch in 0..c {
            let s = v.data()[ch];
            let base = (o * c + ch) * inner;
            for e in &mut data[base..base + inner] {
                *e = f(*e, s);
            }
        }
    }
    out
}

fn reduce_channel(g: &Tensor, c: usize, f: impl Fn(f64, f64) -> f64, other: Option<&Tensor>) -> Tensor {
    let (outer, gc, inner) = channel_layout(g.shape());
    assert_eq!(gc, c);
    let mut acc = vec![0.0; c];
    for o in 0..outer {
        for (ch, a) in acc.iter_mut().enumerate() {
            let base = (o * c + ch) * inner;
            for i in base..base + inner {
                let ov = other.map_or(0.0, |t| t.data()[i]);
                *a += f(g.data()[i], ov);
            }
        }
    }
    Tensor::new(&[c], acc)
}

/// Gradients produced by one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the output w.r.t. `var`, or `None` if it does not depend
    /// on it (or `var` is not a gradient leaf).
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but returns zeros for unreached leaves.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a one-element var.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.needs(self.id)
    }

    fn same_graph(&self, other: &Var<'g>) {
        assert!(std::ptr::eq(self.graph, other.graph), "vars from different graphs");
    }

    fn derive(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'g> {
        let rg = inputs.iter().any(|&i| self.graph.needs(i));
        self.graph.push(value, op, rg)
    }

    pub fn add(&self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        self.derive(v, Op::Add(self.id, other.id), &[self.id, other.id])
    }

    pub fn sub(&self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        self.derive(v, Op::Sub(self.id, other.id), &[self.id, other.id])
    }

    pub fn mul(&self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let v = self.value().zip_map(&other.value(), |a, b| a * b);
        self.derive(v, Op::Mul(self.id, other.id), &[self.id, other.id])
    }

    pub fn scale(&self, s: f64) -> Var<'g> {
        let v = self.value().map(|a| a * s);
        self.derive(v, Op::Scale(self.id, s), &[self.id])
    }

    pub fn offset(&self, s: f64) -> Var<'g> {
        let v = self.value().map(|a| a + s);
        self.derive(v, Op::Offset(self.id), &[self.id])
    }

    pub fn neg(&self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn add_bias(&self, bias: Var<'g>) -> Var<'g> {
        self.same_graph(&bias);
        let v = broadcast_channel(&self.value(), &bias.value(), |a, b| a + b);
        self.derive(v, Op::AddBias(self.id, bias.id), &[self.id, bias.id])
    }

    pub fn mul_channel(&self, scale: Var<'g>) -> Var<'g> {
        self.same_graph(&scale);
        let v = broadcast_channel(&self.value(), &scale.value(), |a, b| a * b);
        self.derive(v, Op::MulChannel(self.id, scale.id), &[self.id, scale.id])
    }

    /// 2-d convolution of an `[N, C, H, W]` input with `[O, C, KH, KW]`
    /// weights, zero padding `pad` on every side.
    pub fn conv2d(&self, weight: Var<'g>, stride: usize, pad: usize) -> Var<'g> {
        self.same_graph(&weight);
        let geom = ConvGeom { stride, pad };
        let v = kernels::conv2d_forward(&self.value(), &weight.value(), geom);
        self.derive(v, Op::Conv2d(self.id, weight.id, geom), &[self.id, weight.id])
    }

    /// Nearest-neighbour upsampling of the two trailing axes.
    pub fn upsample_nearest(&self, factor: usize) -> Var<'g> {
        assert!(factor >= 1);
        let v = kernels::upsample_forward(&self.value(), factor);
        self.derive(v, Op::Upsample(self.id, factor), &[self.id])
    }

    /// Non-overlapping `k×k` mean pooling; trailing rows/columns that do
    /// not fill a window are dropped.
    pub fn avg_pool(&self, k: usize) -> Var<'g> {
        assert!(k >= 1);
        let v = kernels::avgpool_forward(&self.value(), k);
        self.derive(v, Op::AvgPool(self.id, k), &[self.id])
    }

    pub fn unary(&self, kind: Unary) -> Var<'g> {
        let v = self.value().map(|x| kind.apply(x));
        self.derive(v, Op::Unary(self.id, kind), &[self.id])
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'g> {
        self.unary(Unary::LeakyRelu(slope))
    }

    pub fn sigmoid(&self) -> Var<'g> {
        self.unary(Unary::Sigmoid)
    }

    pub fn tanh(&self) -> Var<'g> {
        self.unary(Unary::Tanh)
    }

    pub fn softplus(&self) -> Var<'g> {
        self.unary(Unary::Softplus)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'g> {
        self.unary(Unary::Clamp(lo, hi))
    }

    pub fn sum(&self) -> Var<'g> {
        let v = Tensor::scalar(self.value().sum());
        self.derive(v, Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Var<'g> {
        let v = Tensor::scalar(self.value().mean());
        self.derive(v, Op::Mean(self.id), &[self.id])
    }

    pub fn sparse(&self, map: Rc<SparseMap>) -> Var<'g> {
        let x = self.value();
        let v = Tensor::new(map.out_shape(), map.apply(x.data()));
        self.derive(v, Op::Sparse(self.id, map), &[self.id])
    }

    /// Flat gather `out[i] = self[index[i]]`.
    pub fn gather(&self, out_shape: &[usize], index: &[usize]) -> Var<'g> {
        let n = self.value().numel();
        self.sparse(Rc::new(SparseMap::gather(out_shape, n, index)))
    }

    /// Copy of `self` with the flat positions `index` replaced by the
    /// values of `src` (in order). Indices must be distinct.
    pub fn overwrite(&self, index: Rc<Vec<usize>>, src: Var<'g>) -> Var<'g> {
        self.same_graph(&src);
        let s = src.value();
        assert_eq!(index.len(), s.numel(), "overwrite index/src length mismatch");
        let mut v = (*self.value()).clone();
        for (k, &i) in index.iter().enumerate() {
            v.data_mut()[i] = s.data()[k];
        }
        self.derive(v, Op::Overwrite(self.id, src.id, index), &[self.id, src.id])
    }

    pub fn matmul(&self, other: Var<'g>) -> Var<'g> {
        self.same_graph(&other);
        let v = kernels::matmul_forward(&self.value(), &other.value());
        self.derive(v, Op::Matmul(self.id, other.id), &[self.id, other.id])
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'g>], axis: usize) -> Var<'g> {
        assert!(!parts.is_empty(), "concat of zero vars");
        let first = parts[0];
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let mut shape = values[0].shape().to_vec();
        assert!(axis < shape.len());
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            assert_eq!(s.len(), shape.len(), "concat rank mismatch");
            for (d, (&a, &b)) in s.iter().zip(&shape).enumerate() {
                assert!(d == axis || a == b, "concat extent mismatch on axis {d}");
            }
            total += s[axis];
        }
        shape[axis] = total;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let ids: Vec<usize> = parts
            .iter()
            .map(|p| {
                first.same_graph(p);
                p.id
            })
            .collect();
        first.derive(Tensor::new(&shape, data), Op::Concat(ids.clone(), axis), &ids)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'g> {
        let v = (*self.value()).clone().reshape(shape);
        self.derive(v, Op::Reshape(self.id), &[self.id])
    }

    /// Element `index` along the leading axis.
    pub fn select0(&self, index: usize) -> Var<'g> {
        let v = self.value().slice0(index);
        self.derive(v, Op::Slice0(self.id, index), &[self.id])
    }

    /// Stacks equally shaped vars along a new leading axis.
    pub fn stack(parts: &[Var<'g>]) -> Var<'g> {
        let lifted: Vec<Var<'g>> = parts
            .iter()
            .map(|p| {
                let mut s = vec![1];
                s.extend(p.shape());
                p.reshape(&s)
            })
            .collect();
        Var::concat(&lifted, 0)
    }
}
