use advtex_autograd::Tensor;
use advtex_core::bbox::{BBox, Detection};
use advtex_core::evaluation::IOU_MATCH;
use advtex_core::generator::{standard_normal, Generator};
use advtex_core::torus::{tile_pattern, toroidal_crop, LatentVariable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{det, jittered, random_box};

/// Crop of a pattern tiled far enough to cover every requested window.
pub fn tiled_crop(p: &Tensor, r: i64, c: i64, rows: usize, cols: usize) -> Tensor {
    let [ch, h, w] = p.shape()[..] else { unreachable!() };
    let (h, w) = (h as i64, w as i64);
    // Shift the window into the first period, then tile enough copies.
    let (r0, c0) = (r.rem_euclid(h), c.rem_euclid(w));
    let reps_r = ((r0 + rows as i64) / h + 1) as usize;
    let reps_c = ((c0 + cols as i64) / w + 1) as usize;
    let big = tile_pattern(p, reps_r, reps_c).unwrap();
    let (bh, bw) = (big.shape()[1], big.shape()[2]);
    let src = big.data();
    Tensor::from_fn(&[ch, rows, cols], |i| {
        let (k, rest) = (i / (rows * cols), i % (rows * cols));
        let (y, x) = ((rest / cols) as i64 + r0, (rest % cols) as i64 + c0);
        src[(k * bh + y as usize) * bw + x as usize]
    })
}

/// Anisotropic total variation summed by explicit loops.
pub fn tv_oracle(t: &Tensor) -> f64 {
    let [c, h, w] = t.shape()[..] else { unreachable!() };
    let x = |k: usize, i: usize, j: usize| t.data()[(k * h + i) * w + j];
    let mut total = 0.0;
    for k in 0..c {
        for i in 0..h {
            for j in 0..w {
                if i + 1 < h {
                    total += (x(k, i + 1, j) - x(k, i, j)).abs();
                }
                if j + 1 < w {
                    total += (x(k, i, j + 1) - x(k, i, j)).abs();
                }
            }
        }
    }
    total
}

fn crop(t: &Tensor, r0: usize, c0: usize, h: usize, w: usize) -> Tensor {
    toroidal_crop(t, r0 as i64, c0 as i64, h, w).unwrap()
}

/// Interior crops of the outputs for two overlapping latent windows agree
/// once aligned by the shift.
pub fn equivariance_error(g: &Generator, seed: u64, side: usize, shifts: &[(usize, usize)]) -> f64 {
    let k = g.expansion();
    let m = g.border_margin();
    let c = g.spec().latent_channels;
    let big = standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), &[c, side + 3, side + 3]);
    let base = g
        .generate(&LatentVariable::new(crop(&big, 0, 0, side, side)).unwrap())
        .unwrap();
    let mut worst: f64 = 0.0;
    for &(dr, dc) in shifts {
        let shifted = g
            .generate(&LatentVariable::new(crop(&big, dr, dc, side, side)).unwrap())
            .unwrap();
        let (pr, pc) = (dr * k, dc * k);
        let n = side * k;
        let (rows, cols) = (n - 2 * m - pr, n - 2 * m - pc);
        let a = crop(base.tensor(), m + pr, m + pc, rows, cols);
        let b = crop(shifted.tensor(), m, m, rows, cols);
        worst = worst.max(a.max_abs_diff(&b));
    }
    worst
}

/// Ground-truth boxes as a detector's own output would leave them after
/// suppression: no two overlap by more than the NMS IoU.
pub fn separated_truth<R: Rng>(rng: &mut R, n: usize) -> Vec<BBox> {
    let mut out: Vec<BBox> = Vec::new();
    while out.len() < n {
        let b = random_box(rng);
        if out.iter().all(|o| o.iou(&b) <= 0.4) {
            out.push(b);
        }
    }
    out
}

/// Up to eight boxes spread over one to three images.
pub fn ap_fixture<R: Rng>(rng: &mut R) -> (Vec<Vec<Detection>>, Vec<Vec<BBox>>) {
    let images = rng.random_range(1..=3);
    let total_gt = rng.random_range(1..=4);
    let total_pred = rng.random_range(0..=8 - total_gt);
    let mut counts = vec![0; images];
    for _ in 0..total_gt {
        counts[rng.random_range(0..images)] += 1;
    }
    let gt: Vec<Vec<BBox>> = counts.iter().map(|&n| separated_truth(rng, n)).collect();
    let mut preds = vec![Vec::new(); images];
    for _ in 0..total_pred {
        let img = rng.random_range(0..images);
        let conf = rng.random_range(0..20) as f64 / 20.0;
        let bbox = if !gt[img].is_empty() && rng.random_bool(0.7) {
            let target = rng.random_range(0..gt[img].len());
            jittered(rng, &gt[img][target])
        } else {
            random_box(rng)
        };
        preds[img].push(det(bbox, conf));
    }
    (preds, gt)
}

/// Largest number of ground-truth boxes that predictions can cover one to
/// one, found by search over assignments.
pub fn max_matching(preds: &[&Detection], gt: &[BBox], iou: f64) -> usize {
    fn go(preds: &[&Detection], gt: &[BBox], iou: f64, used: u32) -> usize {
        let Some((first, rest)) = preds.split_first() else {
            return 0;
        };
        let mut best = go(rest, gt, iou, used);
        for (k, g) in gt.iter().enumerate() {
            if used >> k & 1 == 0 && first.bbox.iou(g) >= iou {
                best = best.max(1 + go(rest, gt, iou, used | 1 << k));
            }
        }
        best
    }
    go(preds, gt, iou, 0)
}

/// AP where the true-positive count of each ranking prefix is the maximum
/// matching of that prefix.
pub fn exhaustive_ap(preds: &[Vec<Detection>], gt: &[Vec<BBox>], iou: f64) -> f64 {
    let mut ranked: Vec<(usize, usize)> = preds
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
        .collect();
    ranked.sort_by(|a, b| {
        preds[b.0][b.1]
            .confidence
            .total_cmp(&preds[a.0][a.1].confidence)
            .then(a.cmp(b))
    });
    let n_gt: usize = gt.iter().map(Vec::len).sum();
    let tp_at = |k: usize| -> usize {
        (0..gt.len())
            .map(|img| {
                let chosen: Vec<&Detection> = ranked[..k]
                    .iter()
                    .filter(|r| r.0 == img)
                    .map(|r| &preds[r.0][r.1])
                    .collect();
                max_matching(&chosen, &gt[img], iou)
            })
            .sum()
    };
    let tps: Vec<usize> = (0..=ranked.len()).map(tp_at).collect();
    let precision: Vec<f64> = (1..=ranked.len()).map(|k| tps[k] as f64 / k as f64).collect();
    let mut ap = 0.0;
    for k in 1..=ranked.len() {
        if tps[k] > tps[k - 1] {
            let envelope = precision[k - 1..].iter().cloned().fold(0.0, f64::max);
            ap += envelope;
        }
    }
    ap / n_gt as f64
}

pub fn curve_oracle(preds: &[Vec<Detection>], gt: &[Vec<BBox>], t: f64) -> f64 {
    let n_gt: usize = gt.iter().map(Vec::len).sum();
    let mut matched = 0;
    for (p, g) in preds.iter().zip(gt) {
        let kept: Vec<&Detection> = p.iter().filter(|d| d.confidence >= t).collect();
        matched += max_matching(&kept, g, IOU_MATCH);
    }
    matched as f64 / n_gt as f64
}
