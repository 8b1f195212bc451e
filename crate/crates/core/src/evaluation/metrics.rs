use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};

/// IoU at which a prediction counts as a hit.
pub const IOU_MATCH: f64 = 0.5;

/// Confidence thresholds of the mean attack success rate.
pub const MASR_THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// A ranked prediction after matching.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedHit {
    pub confidence: f64,
    pub image: usize,
    pub index: usize,
    pub true_positive: bool,
}

fn check_lengths(predictions: &[Vec<Detection>], ground_truth: &[Vec<BBox>]) -> Result<usize> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prediction lists for {} ground-truth lists",
            predictions.len(),
            ground_truth.len()
        )));
    }
    Ok(ground_truth.iter().map(Vec::len).sum())
}

/// Ranks all predictions by `(confidence desc, image, index)` and greedily
/// matches each to the unmatched ground-truth box of highest IoU, if that
/// IoU is at least `iou_threshold`.
pub fn greedy_match(
    predictions: &[Vec<Detection>],
    ground_truth: &[Vec<BBox>],
    iou_threshold: f64,
) -> Result<Vec<RankedHit>> {
    check_lengths(predictions, ground_truth)?;
    let mut ranked: Vec<(usize, usize)> = predictions
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
        .collect();
    ranked.sort_by(|a, b| {
        let (ca, cb) = (predictions[a.0][a.1].confidence, predictions[b.0][b.1].confidence);
        cb.total_cmp(&ca).then(a.cmp(b))
    });
    let mut taken: Vec<Vec<bool>> = ground_truth.iter().map(|g| vec![false; g.len()]).collect();
    Ok(ranked
        .into_iter()
        .map(|(img, idx)| {
            let det = &predictions[img][idx];
            let mut best: Option<(usize, f64)> = None;
            for (k, gt) in ground_truth[img].iter().enumerate() {
                if taken[img][k] {
                    continue;
                }
                let iou = det.bbox.iou(gt);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((k, iou));
                }
            }
            if let Some((k, _)) = best {
                taken[img][k] = true;
            }
            RankedHit {
                confidence: det.confidence,
                image: img,
                index: idx,
                true_positive: best.is_some(),
            }
        })
        .collect())
}

/// Single-class average precision with all-points interpolation.
pub fn compute_ap(predictions: &[Vec<Detection>], ground_truth: &[Vec<BBox>], iou_threshold: f64) -> Result<f64> {
    let n_gt = check_lengths(predictions, ground_truth)?;
    if n_gt == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one ground-truth box".into(),
        ));
    }
    let hits = greedy_match(predictions, ground_truth, iou_threshold)?;
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (rank, h) in hits.iter().enumerate() {
        tp += h.true_positive as usize;
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    // Precision envelope: running maximum from the right.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let ap = hits
        .iter()
        .zip(&precision)
        .filter(|(h, _)| h.true_positive)
        .map(|(_, p)| p)
        .sum::<f64>()
        / n_gt as f64;
    Ok(ap)
}

/// `(threshold, recall)` pairs: the fraction of ground-truth boxes matched
/// by predictions with confidence at least the threshold.
pub fn recall_confidence_curve(
    predictions: &[Vec<Detection>],
    ground_truth: &[Vec<BBox>],
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let n_gt = check_lengths(predictions, ground_truth)?;
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("thresholds must be sorted ascending".into()));
    }
    if n_gt == 0 {
        return Ok(thresholds.iter().map(|&t| (t, 0.0)).collect());
    }
    let hits = greedy_match(predictions, ground_truth, IOU_MATCH)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let matched = hits.iter().filter(|h| h.confidence >= t && h.true_positive).count();
            (t, matched as f64 / n_gt as f64)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrReport {
    /// `(threshold, attack success rate)`.
    pub per_threshold: Vec<(f64, f64)>,
    pub masr: f64,
    pub images: usize,
}

/// Whether some prediction with confidence `>= threshold` overlaps a
/// ground-truth box with IoU above one half.
pub fn is_detected(predictions: &[Detection], ground_truth: &[BBox], threshold: f64) -> bool {
    predictions
        .iter()
        .filter(|p| p.confidence >= threshold)
        .any(|p| ground_truth.iter().any(|g| p.bbox.iou(g) > IOU_MATCH))
}

/// Attack success rate per threshold and its mean. Images without ground
/// truth are skipped.
pub fn masr(predictions: &[Vec<Detection>], ground_truth: &[Vec<BBox>], thresholds: &[f64]) -> Result<AsrReport> {
    check_lengths(predictions, ground_truth)?;
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("mASR needs at least one threshold".into()));
    }
    let scored: Vec<usize> = (0..ground_truth.len())
        .filter(|&i| !ground_truth[i].is_empty())
        .collect();
    if scored.is_empty() {
        return Err(Error::UndefinedMetric(
            "mASR needs at least one image with ground truth".into(),
        ));
    }
    let per_threshold: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let missed = scored
                .iter()
                .filter(|&&i| !is_detected(&predictions[i], &ground_truth[i], t))
                .count();
            (t, missed as f64 / scored.len() as f64)
        })
        .collect();
    let masr = per_threshold.iter().map(|(_, a)| a).sum::<f64>() / per_threshold.len() as f64;
    Ok(AsrReport {
        per_threshold,
        masr,
        images: scored.len(),
    })
}
