use std::rc::Rc;

use advtex_autograd::{Adam, Graph, ParamSet, SparseMap, Tensor, Unary, Var};

/// Deterministic pseudo-random fill in [-1, 1].
fn fill(shape: &[usize], seed: u64) -> Tensor {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape, |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

/// Compares the analytic gradient of `f` w.r.t. each input against central
/// differences.
fn check(inputs: &[Tensor], f: impl for<'g> Fn(&[Var<'g>]) -> Var<'g>, tol: f64) {
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&vars);
    let grads = g.backward(out);

    let eval = |ins: &[Tensor]| {
        let g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        f(&vars).item()
    };
    let h = 1e-6;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k]);
        for i in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / (1e-8 + a.abs().max(numeric.abs()).max(1e-3));
            assert!(
                err < tol,
                "input {k} elem {i}: analytic {a} vs numeric {numeric} (rel {err})"
            );
        }
    }
}

#[test]
fn elementwise_ops() {
    let a = fill(&[2, 3], 1);
    let b = fill(&[2, 3], 2);
    check(&[a.clone(), b.clone()], |v| v[0].add(v[1]).mul(v[0]).sum(), 1e-6);
    check(
        &[a.clone(), b.clone()],
        |v| v[0].sub(v[1]).scale(3.0).mul(v[1]).sum(),
        1e-6,
    );
    check(std::slice::from_ref(&a), |v| v[0].offset(0.5).mul(v[0]).mean(), 1e-6);
}

#[test]
fn unary_ops() {
    let a = fill(&[3, 4], 3);
    for kind in [
        Unary::LeakyRelu(0.2),
        Unary::Sigmoid,
        Unary::Tanh,
        Unary::Softplus,
        Unary::SmoothAbs(1e-3),
        Unary::Clamp(-0.5, 0.5),
        Unary::Exp,
        Unary::Square,
    ] {
        check(std::slice::from_ref(&a), |v| v[0].unary(kind).mul(v[0]).sum(), 1e-5);
    }
}

#[test]
fn conv2d_matches_finite_differences() {
    let x = fill(&[2, 3, 5, 6], 4);
    let w = fill(&[4, 3, 3, 3], 5);
    check(&[x.clone(), w.clone()], |v| v[0].conv2d(v[1], 1, 1).square_sum(), 1e-5);
    check(&[x, w], |v| v[0].conv2d(v[1], 2, 1).square_sum(), 1e-5);
}

#[test]
fn conv2d_matches_direct_loop() {
    let x = fill(&[1, 2, 4, 5], 6);
    let w = fill(&[3, 2, 3, 3], 7);
    let g = Graph::new();
    let out = g.constant(x.clone()).conv2d(g.constant(w.clone()), 1, 1).value();
    for o in 0..3 {
        for y in 0..4 {
            for xx in 0..5 {
                let mut acc = 0.0;
                for c in 0..2 {
                    for ki in 0..3 {
                        for kj in 0..3 {
                            let iy = y as isize + ki as isize - 1;
                            let ix = xx as isize + kj as isize - 1;
                            if !(0..4).contains(&iy) || !(0..5).contains(&ix) {
                                continue;
                            }
                            acc += x.data()[(c * 4 + iy as usize) * 5 + ix as usize]
                                * w.data()[((o * 2 + c) * 3 + ki) * 3 + kj];
                        }
                    }
                }
                let got = out.data()[(o * 4 + y) * 5 + xx];
                assert!((got - acc).abs() < 1e-12, "({o},{y},{xx}) {got} vs {acc}");
            }
        }
    }
}

#[test]
fn pooling_upsampling_and_bias() {
    let x = fill(&[2, 2, 4, 4], 8);
    let b = fill(&[2], 9);
    check(std::slice::from_ref(&x), |v| v[0].avg_pool(2).square_sum(), 1e-6);
    check(
        std::slice::from_ref(&x),
        |v| v[0].upsample_nearest(3).square_sum(),
        1e-6,
    );
    check(&[x.clone(), b.clone()], |v| v[0].add_bias(v[1]).square_sum(), 1e-6);
    check(&[x, b], |v| v[0].mul_channel(v[1]).square_sum(), 1e-6);
}

#[test]
fn matmul_concat_reshape_select() {
    let a = fill(&[3, 4], 10);
    let b = fill(&[4, 2], 11);
    check(&[a.clone(), b.clone()], |v| v[0].matmul(v[1]).square_sum(), 1e-6);
    let c = fill(&[3, 2], 12);
    check(
        &[a.clone(), c],
        |v| Var::concat(&[v[0], v[1]], 1).reshape(&[18]).square_sum(),
        1e-6,
    );
    check(std::slice::from_ref(&a), |v| v[0].select0(1).square_sum(), 1e-6);
    check(
        &[a.clone(), a],
        |v| Var::stack(&[v[0], v[1].scale(2.0)]).square_sum(),
        1e-6,
    );
}

#[test]
fn sparse_and_overwrite() {
    let x = fill(&[6], 13);
    let mut b = SparseMap::builder(&[3], 6);
    b.push(0, 0.5);
    b.push(5, 0.5);
    b.end_row();
    b.push(2, 1.0);
    b.end_row();
    b.push(1, 0.25);
    b.push(2, 0.75);
    b.end_row();
    let map = Rc::new(b.finish());
    check(
        std::slice::from_ref(&x),
        |v| v[0].sparse(map.clone()).square_sum(),
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        |v| v[0].gather(&[4], &[5, 5, 0, 3]).square_sum(),
        1e-6,
    );
    let s = fill(&[2], 14);
    let idx = Rc::new(vec![1, 4]);
    check(&[x, s], |v| v[0].overwrite(idx.clone(), v[1]).square_sum(), 1e-6);
}

#[test]
fn frozen_inputs_get_no_gradient() {
    let g = Graph::new();
    let x = g.constant(Tensor::new(&[2], vec![1.0, 2.0]));
    let w = g.leaf(Tensor::new(&[2], vec![3.0, 4.0]));
    let y = x.mul(w).sum();
    let grads = g.backward(y);
    assert!(grads.get(x).is_none());
    assert_eq!(grads.get(w).unwrap().data(), &[1.0, 2.0]);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut params = ParamSet::new();
    params.push("x", Tensor::new(&[2], vec![3.0, -2.0]));
    let mut opt = Adam::new(0.1);
    for _ in 0..500 {
        let g = Graph::new();
        let bound = params.bind(&g);
        let loss = bound.var(0).offset(-1.0).square_sum();
        let grads = g.backward(loss);
        let gs = params.gradients(&bound, &grads);
        opt.step(&mut params, &gs);
    }
    for v in params.get(0).data() {
        assert!((v - 1.0).abs() < 1e-2, "{v}");
    }
}

#[test]
fn adam_with_zero_lr_is_a_no_op() {
    let mut t = Tensor::new(&[3], vec![0.1, 0.2, 0.3]);
    let before = t.clone();
    let mut opt = Adam::new(0.0);
    opt.step_tensor(&mut t, &Tensor::new(&[3], vec![1.0, -1.0, 5.0]));
    assert_eq!(t, before);
}

trait SquareSum<'g> {
    fn square_sum(&self) -> Var<'g>;
}

impl<'g> SquareSum<'g> for Var<'g> {
    fn square_sum(&self) -> Var<'g> {
        self.unary(Unary::Square).sum()
    }
}
