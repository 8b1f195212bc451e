use crate::bbox::Detection;

/// Greedy non-maximum suppression. Boxes are visited by confidence
/// descending with ties broken by input index; a box is dropped when its IoU
/// with an already kept box exceeds `iou_threshold`. Returns kept indices in
/// visiting order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| dets[k].bbox.iou(&dets[i].bbox) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}
