#![allow(dead_code)]

pub mod oracles;

use advtex_autograd::Tensor;
use advtex_core::bbox::{BBox, Detection};
use rand::Rng;

/// Pattern whose entries are distinct small integers, so equality checks
/// catch any misplaced element.
pub fn labelled(c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(&[c, h, w], |i| i as f64)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random::<f64>())
}

/// Box with corners inside the unit square.
pub fn random_box<R: Rng + ?Sized>(rng: &mut R) -> BBox {
    let w = rng.random_range(0.05..0.4);
    let h = rng.random_range(0.05..0.4);
    BBox::new(
        rng.random_range(w / 2.0..1.0 - w / 2.0),
        rng.random_range(h / 2.0..1.0 - h / 2.0),
        w,
        h,
    )
}

/// A prediction near `gt`, jittered enough that some fall below IoU 0.5.
pub fn jittered<R: Rng + ?Sized>(rng: &mut R, gt: &BBox) -> BBox {
    BBox::new(
        gt.cx + rng.random_range(-0.3..0.3) * gt.w,
        gt.cy + rng.random_range(-0.3..0.3) * gt.h,
        gt.w * rng.random_range(0.7..1.3),
        gt.h * rng.random_range(0.7..1.3),
    )
}

pub fn det(bbox: BBox, confidence: f64) -> Detection {
    Detection::person(bbox, confidence)
}

/// Largest relative error between two gradients, scaled by the larger
/// magnitude with a floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Checks the gradient of `f` at `x` against central differences with
/// step `h`. Returns the worst relative error.
pub fn gradient_error(
    x: &Tensor,
    f: impl for<'g> Fn(advtex_autograd::Var<'g>) -> advtex_autograd::Var<'g>,
    h: f64,
    floor: f64,
) -> f64 {
    use advtex_autograd::Graph;
    let g = Graph::new();
    let leaf = g.leaf(x.clone());
    let grads = g.backward(f(leaf));
    let analytic = grads.get_or_zeros(leaf);
    let eval = |t: Tensor| {
        let g = Graph::new();
        f(g.constant(t)).item()
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus) - eval(minus)) / (2.0 * h);
        worst = worst.max(rel_err(analytic.data()[i], numeric, floor));
    }
    worst
}

/// Fixed weights that turn a tensor output into a scalar with a
/// non-uniform gradient.
pub fn weights(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| ((i * 37 % 23) as f64 - 11.0) / 11.0)
}

/// Synthetic scenes labelled by the bundled toy detector, as box
/// extraction would label them.
pub fn toy_training_set(seed: u64, n: usize) -> advtex_core::pipeline::TrainingSet {
    use advtex_core::detector::{detect_eval, ToyDetector, NMS_IOU};
    use advtex_core::pipeline::TrainingSet;
    use advtex_core::synthetic::{render_scene, SceneConfig};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let images: Vec<Tensor> = (0..n)
        .map(|_| render_scene(&mut rng, &SceneConfig::default()).image)
        .collect();
    let det = ToyDetector::bundled().unwrap();
    let boxes = detect_eval(&det, &images, 0.5, NMS_IOU).unwrap();
    TrainingSet::from_parts(images, boxes).unwrap()
}
