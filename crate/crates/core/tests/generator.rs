mod common;

use advtex_autograd::{Graph, Tensor};
use advtex_core::generator::{
    standard_normal, Activation, AuxNet, AuxNetSpec, Generator, GeneratorSpec, LayerSpec, Padding,
};
use advtex_core::torus::{toroidal_crop, LatentVariable, TexturePattern};
use advtex_core::Error;
use common::oracles::equivariance_error;
use common::rel_err;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build(spec: GeneratorSpec, seed: u64) -> Generator {
    Generator::build(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Window `[r0, r0 + h) × [c0, c0 + w)` of a `[C, H, W]` tensor.
fn window(t: &Tensor, r0: usize, c0: usize, h: usize, w: usize) -> Tensor {
    toroidal_crop(t, r0 as i64, c0 as i64, h, w).unwrap()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.max_abs_diff(b)
}

#[test]
fn full_generator_geometry() {
    let g = build(GeneratorSpec::full(), 0);
    assert_eq!(g.spec().layers.len(), 7);
    assert_eq!(g.expansion(), 36);
    assert_eq!(g.output_size(18, 9), (648, 324));
    let z = g.sample_latent(&mut ChaCha8Rng::seed_from_u64(1), 9, 9).unwrap();
    assert_eq!(z.channels(), 128);
    let out = g.generate(&z).unwrap();
    assert_eq!((out.height(), out.width()), (324, 324));
}

#[test]
fn latent_below_minimum_is_rejected() {
    let g = build(GeneratorSpec::desk(), 0);
    let z = LatentVariable::new(Tensor::zeros(&[16, 8, 9])).unwrap();
    assert!(matches!(g.generate(&z), Err(Error::Shape(_))));
    assert!(g.sample_latent(&mut ChaCha8Rng::seed_from_u64(0), 9, 8).is_err());
}

#[test]
fn non_convolutional_specs_are_rejected() {
    let mut spec = GeneratorSpec::desk();
    spec.layers.insert(2, LayerSpec::Dense { out_features: 10 });
    assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    let mut spec = GeneratorSpec::desk();
    if let LayerSpec::Conv { padding, .. } = &mut spec.layers[1] {
        *padding = Padding::Reflect;
    }
    assert!(matches!(
        Generator::build(spec, &mut ChaCha8Rng::seed_from_u64(0)),
        Err(Error::InvalidSpec(_))
    ));
}

#[test]
fn generation_is_deterministic() {
    let g = build(GeneratorSpec::desk(), 3);
    let z = g.sample_latent(&mut ChaCha8Rng::seed_from_u64(4), 10, 11).unwrap();
    assert_eq!(g.generate(&z).unwrap(), g.generate(&z).unwrap());
}

#[test]
fn spatial_size_law() {
    let g = build(GeneratorSpec::desk(), 0);
    let k = g.expansion();
    let (hmin, wmin) = g.spec().min_latent_side;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in 0..=4 {
        let z = g.sample_latent(&mut rng, hmin + d, wmin + 4 - d).unwrap();
        let out = g.generate(&z).unwrap();
        assert_eq!((out.height(), out.width()), (k * (hmin + d), k * (wmin + 4 - d)));
    }
}

/// The desk layout at a quarter of the width.
fn narrow_spec() -> GeneratorSpec {
    let mut spec = GeneratorSpec::desk();
    spec.latent_channels = 4;
    let last = spec.layers.len() - 1;
    for (i, layer) in spec.layers.iter_mut().enumerate() {
        if let LayerSpec::Conv { out_channels, .. } = layer {
            if i != last {
                *out_channels = (*out_channels / 4).max(2);
            }
        }
    }
    spec
}

#[test]
fn output_stays_in_unit_range() {
    let g = build(narrow_spec(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // 10⁴ latents in batches of 25, with heavy tails to push the squashing.
    for _ in 0..400 {
        let graph = Graph::new();
        let bound = g.params().bind_frozen(&graph);
        let z = graph.constant(standard_normal(&mut rng, &[25, 4, 9, 9]).map(|v| 10.0 * v * v * v));
        let out = g.forward(&bound, z).unwrap().value();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn interior_is_shift_equivariant() {
    let g = build(GeneratorSpec::desk(), 7);
    assert_eq!(g.spec().layers.len(), 7);
    let shifts = [(1, 0), (0, 2), (3, 3), (2, 1)];
    let err = equivariance_error(&g, 8, 12, &shifts);
    assert!(err <= 1e-5, "max abs error {err}");
}

#[test]
fn border_margin_is_needed() {
    // Without the margin the zero-padded border breaks the equality.
    let g = build(GeneratorSpec::desk(), 7);
    let k = g.expansion();
    let big = standard_normal(&mut ChaCha8Rng::seed_from_u64(8), &[16, 13, 13]);
    let a = g
        .generate(&LatentVariable::new(window(&big, 0, 0, 12, 12)).unwrap())
        .unwrap();
    let b = g
        .generate(&LatentVariable::new(window(&big, 1, 1, 12, 12)).unwrap())
        .unwrap();
    let n = 11 * k;
    assert!(max_abs_diff(&window(a.tensor(), k, k, n, n), &window(b.tensor(), 0, 0, n, n)) > 1e-3);
}

#[test]
fn zero_latents_agree_in_the_interior() {
    let g = build(GeneratorSpec::desk(), 9);
    let k = g.expansion();
    let m = g.border_margin();
    let small = g
        .generate(&LatentVariable::new(Tensor::zeros(&[16, 9, 9])).unwrap())
        .unwrap();
    let large = g
        .generate(&LatentVariable::new(Tensor::zeros(&[16, 13, 13])).unwrap())
        .unwrap();
    let n = 9 * k - 2 * m;
    let a = window(small.tensor(), m, m, n, n);
    let b = window(large.tensor(), m + 2 * k, m + 2 * k, n, n);
    assert!(max_abs_diff(&a, &b) <= 1e-5);
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let spec = GeneratorSpec {
        latent_channels: 4,
        min_latent_side: (3, 3),
        layers: vec![
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
                upsample: 2,
                padding: Padding::Zero,
                activation: Activation::Tanh,
            },
            LayerSpec::Conv {
                out_channels: 3,
                kernel: 3,
                upsample: 1,
                padding: Padding::Zero,
                activation: Activation::Identity,
            },
        ],
        output_activation: Default::default(),
    };
    let gen = build(spec, 10);
    let z = standard_normal(&mut ChaCha8Rng::seed_from_u64(11), &[1, 4, 3, 3]);
    let loss = |gen: &Generator| {
        let g = Graph::new();
        let bound = gen.params().bind_frozen(&g);
        gen.forward(&bound, g.constant(z.clone())).unwrap().sum().item()
    };
    let g = Graph::new();
    let bound = gen.params().bind(&g);
    let out = gen.forward(&bound, g.constant(z.clone())).unwrap().sum();
    let analytic = gen.params().gradients(&bound, &g.backward(out));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (p, grad) in analytic.iter().enumerate() {
        for i in 0..grad.numel() {
            let mut plus = gen.clone();
            plus.params_mut().get_mut(p).data_mut()[i] += h;
            let mut minus = gen.clone();
            minus.params_mut().get_mut(p).data_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(grad.data()[i], numeric, 1e-3));
        }
    }
    assert!(worst < 1e-3, "relative error {worst}");
}

fn aux() -> AuxNet {
    AuxNet::build(
        AuxNetSpec::for_generator(&GeneratorSpec::desk()),
        &mut ChaCha8Rng::seed_from_u64(12),
    )
    .unwrap()
}

#[test]
fn aux_scores_are_finite_and_deterministic() {
    let net = aux();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let patch = TexturePattern::new(common::uniform(&mut rng, &[3, 32, 32])).unwrap();
    let z = LatentVariable::new(standard_normal(&mut rng, &[16, 4, 4])).unwrap();
    let s = net.score(&patch, &z).unwrap();
    assert!(s.is_finite());
    assert_eq!(s, net.score(&patch, &z).unwrap());
}

#[test]
fn batched_aux_scores_match_single_calls() {
    let net = aux();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let patches = common::uniform(&mut rng, &[5, 3, 32, 32]);
    let zs = standard_normal(&mut rng, &[5, 16, 4, 4]);
    let g = Graph::new();
    let bound = net.params().bind_frozen(&g);
    let batched = net
        .forward(&bound, g.constant(patches.clone()), g.constant(zs.clone()))
        .unwrap()
        .value();
    for b in 0..5 {
        let p = TexturePattern::new(patches.slice0(b)).unwrap();
        let z = LatentVariable::new(zs.slice0(b)).unwrap();
        assert!((batched.data()[b] - net.score(&p, &z).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn aux_rejects_mismatched_latents() {
    let net = aux();
    let p = TexturePattern::constant(32, 32, [0.5; 3]).unwrap();
    let z = LatentVariable::new(Tensor::zeros(&[8, 4, 4])).unwrap();
    assert!(matches!(net.score(&p, &z), Err(Error::Shape(_))));
}
