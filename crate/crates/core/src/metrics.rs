//! Average keypoint distance and COCO-style segmentation mAP.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotate::KeypointAnnotation;
use crate::coco::CocoDataset;
use crate::mask::BinaryMask;
use crate::polygon::rasterize_polygons;
use crate::raster::KeypointState;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("both masks are empty")]
    BothEmpty,
    #[error("mask sizes differ: {0:?} vs {1:?}")]
    ShapeMismatch((u32, u32), (u32, u32)),
    #[error("no visible ground-truth keypoints to evaluate")]
    EmptyIntersection,
    #[error("no ground-truth instances")]
    NoGroundTruth,
    #[error("prediction references unknown image {0}")]
    UnknownImage(u64),
    #[error("malformed prediction for image {0}: {1}")]
    MalformedPrediction(u64, String),
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::ShapeMismatch((a.width(), a.height()), (b.width(), b.height())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Err(MetricsError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

// ---------------------------------------------------------------- keypoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointGroundTruth {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub keypoints: Vec<KeypointAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedKeypoint {
    pub name: String,
    pub u: f64,
    pub v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointPrediction {
    pub image_id: u64,
    pub keypoints: Vec<PredictedKeypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AkdConfig {
    /// Distance charged for a missing prediction; the image diagonal when `None`.
    pub missing_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAkd {
    pub mean: f64,
    pub count: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AkdReport {
    pub mean: f64,
    pub count: usize,
    pub per_channel: BTreeMap<String, ChannelAkd>,
}

/// Mean pixel distance between visible ground-truth keypoints and the
/// highest-scoring prediction of the same channel in the same image.
pub fn akd(gt: &[KeypointGroundTruth], preds: &[KeypointPrediction], cfg: &AkdConfig) -> Result<AkdReport, MetricsError> {
    let mut best: BTreeMap<(u64, &str), &PredictedKeypoint> = BTreeMap::new();
    for p in preds {
        for k in &p.keypoints {
            let slot = best.entry((p.image_id, k.name.as_str())).or_insert(k);
            if k.score > slot.score {
                *slot = k;
            }
        }
    }
    let mut sums: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    for g in gt {
        let diagonal = (g.width as f64).hypot(g.height as f64);
        for k in g.keypoints.iter().filter(|k| k.state == KeypointState::Visible) {
            let entry = sums.entry(k.name.clone()).or_default();
            match best.get(&(g.image_id, k.name.as_str())) {
                Some(p) => entry.0 += (p.u - k.u).hypot(p.v - k.v),
                None => {
                    entry.0 += cfg.missing_penalty.unwrap_or(diagonal);
                    entry.2 += 1;
                }
            }
            entry.1 += 1;
        }
    }
    let count: usize = sums.values().map(|s| s.1).sum();
    if count == 0 {
        return Err(MetricsError::EmptyIntersection);
    }
    let total: f64 = sums.values().map(|s| s.0).sum();
    Ok(AkdReport {
        mean: total / count as f64,
        count,
        per_channel: sums
            .into_iter()
            .map(|(name, (sum, n, missing))| (name, ChannelAkd { mean: sum / n as f64, count: n, missing }))
            .collect(),
    })
}

// ---------------------------------------------------------------- segmentation

pub const IOU_THRESHOLDS: usize = 10;
pub const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; IOU_THRESHOLDS] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Detections of one image reduced to scores and their IoU with each ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageIous {
    pub scores: Vec<f64>,
    /// `ious[d][g]`.
    pub ious: Vec<Vec<f64>>,
    pub num_gt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    pub per_threshold: Vec<ThresholdAp>,
    pub num_gt: usize,
    pub num_detections: usize,
}

/// Greedy matching at threshold `t`: detections in descending score order
/// take the unmatched ground truth with the highest IoU ≥ `t`, the lowest
/// index winning ties. Returns the true-positive flag of every detection.
pub fn greedy_match(img: &ImageIous, t: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..img.scores.len()).collect();
    order.sort_by(|&a, &b| img.scores[b].total_cmp(&img.scores[a]));
    let mut taken = vec![false; img.num_gt];
    let mut tp = vec![false; img.scores.len()];
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in img.ious[d].iter().enumerate() {
            if taken[g] || iou < t {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[d] = true;
        }
    }
    tp
}

/// 101-point interpolated AP from `(score, is_tp)` pairs ranked across all images.
pub fn interpolated_ap(ranked: &[(f64, bool)], num_gt: usize) -> f64 {
    if num_gt == 0 || ranked.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (i, &(_, hit)) in ranked.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let sum: f64 = (0..RECALL_POINTS)
        .map(|k| {
            let r = k as f64 / 100.0;
            let at = recall.partition_point(|&x| x < r);
            precision.get(at).copied().unwrap_or(0.0)
        })
        .sum();
    sum / RECALL_POINTS as f64
}

/// mAP over [`iou_thresholds`] from per-image IoU matrices.
pub fn map_from_ious(images: &[ImageIous]) -> Result<MapReport, MetricsError> {
    let num_gt: usize = images.iter().map(|i| i.num_gt).sum();
    if num_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let per_threshold: Vec<ThresholdAp> = iou_thresholds()
        .iter()
        .map(|&t| {
            let mut ranked: Vec<(f64, bool)> = Vec::new();
            for img in images {
                let tp = greedy_match(img, t);
                let mut order: Vec<usize> = (0..img.scores.len()).collect();
                order.sort_by(|&a, &b| img.scores[b].total_cmp(&img.scores[a]));
                ranked.extend(order.into_iter().map(|d| (img.scores[d], tp[d])));
            }
            // stable: equal scores keep image order
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
            ThresholdAp { iou: t, ap: interpolated_ap(&ranked, num_gt) }
        })
        .collect();
    Ok(MapReport {
        map: per_threshold.iter().map(|t| t.ap).sum::<f64>() / IOU_THRESHOLDS as f64,
        per_threshold,
        num_gt,
        num_detections: images.iter().map(|i| i.scores.len()).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationGroundTruth {
    pub image_id: u64,
    pub masks: Vec<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationPrediction {
    pub image_id: u64,
    pub instances: Vec<(BinaryMask, f64)>,
}

fn iou_or_zero(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    match mask_iou(a, b) {
        Err(MetricsError::BothEmpty) => Ok(0.0),
        r => r,
    }
}

/// COCO-style mask mAP (single category).
pub fn coco_map(gt: &[SegmentationGroundTruth], preds: &[SegmentationPrediction]) -> Result<MapReport, MetricsError> {
    use rayon::prelude::*;
    let ids: std::collections::BTreeSet<u64> = gt.iter().map(|g| g.image_id).collect();
    if let Some(p) = preds.iter().find(|p| !ids.contains(&p.image_id)) {
        return Err(MetricsError::UnknownImage(p.image_id));
    }
    let images = gt
        .par_iter()
        .map(|g| {
            let dets: Vec<&(BinaryMask, f64)> =
                preds.iter().filter(|p| p.image_id == g.image_id).flat_map(|p| &p.instances).collect();
            let ious = dets
                .iter()
                .map(|(m, _)| g.masks.iter().map(|gm| iou_or_zero(m, gm)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ImageIous {
                scores: dets.iter().map(|(_, s)| *s).collect(),
                ious,
                num_gt: g.masks.len(),
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    map_from_ious(&images)
}

// ---------------------------------------------------------------- file formats

/// One entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    #[serde(default)]
    pub category_id: u64,
    #[serde(default)]
    pub segmentation: Option<Vec<Vec<f64>>>,
    /// `(x, y, score)` triplets in category keypoint order.
    #[serde(default)]
    pub keypoints: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub score: f64,
}

fn one() -> f64 {
    1.0
}

pub fn keypoint_ground_truth(ds: &CocoDataset) -> Result<Vec<KeypointGroundTruth>, MetricsError> {
    ds.annotations
        .iter()
        .map(|a| {
            let img = ds
                .images
                .iter()
                .find(|i| i.id == a.image_id)
                .ok_or(MetricsError::UnknownImage(a.image_id))?;
            let keypoints = ds
                .keypoints_of(a)
                .map_err(|e| MetricsError::MalformedPrediction(a.image_id, e.to_string()))?;
            Ok(KeypointGroundTruth {
                image_id: a.image_id,
                width: img.width,
                height: img.height,
                keypoints,
            })
        })
        .collect()
}

/// Keypoint predictions from results entries; the third value of each triplet
/// is the channel score and channels scoring ≤ 0 count as not predicted.
/// (Ground-truth visibility flags 0/1/2 therefore act as scores.)
pub fn keypoint_predictions(ds: &CocoDataset, results: &[CocoResult]) -> Result<Vec<KeypointPrediction>, MetricsError> {
    let names = ds.category().map(|c| c.keypoints.clone()).unwrap_or_default();
    results
        .iter()
        .filter_map(|r| r.keypoints.as_ref().map(|k| (r.image_id, k)))
        .map(|(image_id, k)| {
            if k.len() != 3 * names.len() {
                return Err(MetricsError::MalformedPrediction(image_id, "keypoint count".into()));
            }
            Ok(KeypointPrediction {
                image_id,
                keypoints: k
                    .chunks_exact(3)
                    .zip(&names)
                    .filter(|(t, _)| t[2] > 0.0)
                    .map(|(t, n)| PredictedKeypoint { name: n.clone(), u: t[0], v: t[1], score: t[2] })
                    .collect(),
            })
        })
        .collect()
}

pub fn segmentation_ground_truth(ds: &CocoDataset) -> Result<Vec<SegmentationGroundTruth>, MetricsError> {
    Ok(ds
        .images
        .iter()
        .map(|img| SegmentationGroundTruth {
            image_id: img.id,
            masks: ds
                .annotations
                .iter()
                .filter(|a| a.image_id == img.id)
                .map(|a| rasterize_polygons(&a.segmentation, img.width, img.height))
                .collect(),
        })
        .collect())
}

pub fn segmentation_predictions(ds: &CocoDataset, results: &[CocoResult]) -> Result<Vec<SegmentationPrediction>, MetricsError> {
    let mut out: BTreeMap<u64, Vec<(BinaryMask, f64)>> = BTreeMap::new();
    for r in results {
        let Some(seg) = &r.segmentation else { continue };
        let img = ds.images.iter().find(|i| i.id == r.image_id).ok_or(MetricsError::UnknownImage(r.image_id))?;
        out.entry(r.image_id)
            .or_default()
            .push((rasterize_polygons(seg, img.width, img.height), r.score));
    }
    Ok(out
        .into_iter()
        .map(|(image_id, instances)| SegmentationPrediction { image_id, instances })
        .collect())
}

/// Ground truth of `ds` phrased as results: keypoint triplets keep their
/// visibility flag as score, segmentations get score 1.
pub fn ground_truth_as_results(ds: &CocoDataset) -> Vec<CocoResult> {
    ds.annotations
        .iter()
        .map(|a| CocoResult {
            image_id: a.image_id,
            category_id: a.category_id,
            segmentation: Some(a.segmentation.clone()),
            keypoints: Some(a.keypoints.clone()),
            score: 1.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub akd: Option<AkdReport>,
    pub segmentation: Option<MapReport>,
}

/// Plain-text table, one row per report: AKD in pixels and mAP in percent.
pub fn format_table(reports: &[EvaluationReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$} | {:>9} | {:>7}\n", "Method", "AKD (px)", "mAP");
    s.push_str(&format!("{}-+-{}-+-{}\n", "-".repeat(width), "-".repeat(9), "-".repeat(7)));
    for r in reports {
        let akd = r.akd.as_ref().map_or("-".to_string(), |a| format!("{:.1}", a.mean));
        let map = r.segmentation.as_ref().map_or("-".to_string(), |m| format!("{:.1}", 100.0 * m.map));
        s.push_str(&format!("{:<width$} | {:>9} | {:>7}\n", r.name, akd, map));
    }
    if let Some(m) = reports.iter().find_map(|r| r.segmentation.as_ref()) {
        s.push('\n');
        s.push_str("IoU   | AP\n");
        for t in &m.per_threshold {
            s.push_str(&format!("{:.2}  | {:.4}\n", t.iou, t.ap));
        }
    }
    s
}
