//! Depth metrics, instance matching, AP/mAP and per-pixel depth recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{check_dims, plane_induced_depth, CameraIntrinsics, InstanceMap, Mask, PlaneParams, ScalarMap, VectorMap};

pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// Thresholds (meters) of the default recall curve.
pub fn default_recall_thresholds() -> Vec<f64> {
    (1..=12).map(|k| k as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub log_rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Standard depth errors over `valid` pixels; `gt` is the reference.
pub fn depth_metrics(pred: &ScalarMap, gt: &ScalarMap, valid: Option<&Mask>) -> Result<DepthMetricsReport> {
    check_dims(pred, gt, "depth maps")?;
    if let Some(m) = valid {
        check_dims(pred, m, "validity mask")?;
    }
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut log_sq) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for i in 0..gt.data.len() {
        if valid.is_some_and(|m| !m.data[i]) {
            continue;
        }
        let (d, p) = (gt.data[i], pred.data[i]);
        if !(d > 0.0 && p > 0.0) {
            return Err(invalid(format!("depth must be positive on valid pixels (gt {d}, pred {p})")));
        }
        let e = p - d;
        abs_rel += e.abs() / d;
        sq_rel += e * e / d;
        sq += e * e;
        log_sq += (p.ln() - d.ln()).powi(2);
        let ratio = (p / d).max(d / p);
        for (k, w) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *w += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMetric("depth_metrics"));
    }
    let nf = n as f64;
    Ok(DepthMetricsReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        log_rmse: (log_sq / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
    })
}

/// Predicted instance metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredInstance {
    pub id: u16,
    pub score: f64,
    pub class_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub pred: u16,
    pub score: f64,
    /// Matched ground-truth id, `None` for a false positive.
    pub gt: Option<u16>,
    pub iou: f64,
}

/// Pixel counts per id and per (pred, gt) pair.
struct Overlaps {
    pred_area: BTreeMap<u16, usize>,
    gt_area: BTreeMap<u16, usize>,
    inter: BTreeMap<(u16, u16), usize>,
}

impl Overlaps {
    fn new(pred: &InstanceMap, gt: &InstanceMap) -> Self {
        let mut o = Overlaps { pred_area: BTreeMap::new(), gt_area: BTreeMap::new(), inter: BTreeMap::new() };
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            if p > 0 {
                *o.pred_area.entry(p).or_default() += 1;
            }
            if g > 0 {
                *o.gt_area.entry(g).or_default() += 1;
            }
            if p > 0 && g > 0 {
                *o.inter.entry((p, g)).or_default() += 1;
            }
        }
        o
    }

    fn iou(&self, p: u16, g: u16) -> f64 {
        let i = self.inter.get(&(p, g)).copied().unwrap_or(0);
        if i == 0 {
            return 0.0;
        }
        let u = self.pred_area.get(&p).copied().unwrap_or(0) + self.gt_area[&g] - i;
        i as f64 / u as f64
    }
}

fn score_order(preds: &[PredInstance]) -> Vec<PredInstance> {
    let mut sorted = preds.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    sorted
}

fn greedy_match(preds: &[PredInstance], gt_ids: &[u16], overlaps: &Overlaps, iou_min: f64) -> Vec<Match> {
    let mut claimed = vec![false; gt_ids.len()];
    score_order(preds)
        .into_iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (k, &g) in gt_ids.iter().enumerate() {
                if claimed[k] {
                    continue;
                }
                let iou = overlaps.iou(p.id, g);
                // Strictly greater keeps the lower id on ties (gt_ids ascending).
                if iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((k, iou));
                }
            }
            match best {
                Some((k, iou)) => {
                    claimed[k] = true;
                    Match { pred: p.id, score: p.score, gt: Some(gt_ids[k]), iou }
                }
                None => Match { pred: p.id, score: p.score, gt: None, iou: 0.0 },
            }
        })
        .collect()
}

/// Class-agnostic greedy matching in descending score order.
pub fn match_instances(pred: &InstanceMap, preds: &[PredInstance], gt: &InstanceMap, iou_min: f64) -> Result<Vec<Match>> {
    check_dims(pred, gt, "instance maps")?;
    let overlaps = Overlaps::new(pred, gt);
    let gt_ids: Vec<u16> = overlaps.gt_area.keys().copied().collect();
    Ok(greedy_match(preds, &gt_ids, &overlaps, iou_min))
}

/// All-point interpolated AP of matches traced in descending score order.
pub fn average_precision(matches: &[Match], n_gt: usize) -> Result<f64> {
    if n_gt == 0 {
        return Err(Error::EmptyMetric("average_precision"));
    }
    let mut sorted = matches.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(sorted.len());
    let mut precision = Vec::with_capacity(sorted.len());
    for m in &sorted {
        if m.gt.is_some() {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // Precision envelope, then area over recall steps.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub ap: f64,
    pub map: f64,
    pub per_class_ap: BTreeMap<u32, f64>,
    pub matches: Vec<Match>,
}

/// Class-agnostic AP plus mAP over the classes present in the ground truth.
pub fn detection_metrics(
    pred: &InstanceMap,
    preds: &[PredInstance],
    gt: &InstanceMap,
    gt_classes: &BTreeMap<u16, u32>,
    iou_min: f64,
) -> Result<DetectionReport> {
    check_dims(pred, gt, "instance maps")?;
    let overlaps = Overlaps::new(pred, gt);
    let gt_ids: Vec<u16> = overlaps.gt_area.keys().copied().collect();
    let matches = greedy_match(preds, &gt_ids, &overlaps, iou_min);
    let ap = average_precision(&matches, gt_ids.len())?;
    let mut per_class = BTreeMap::new();
    for &g in &gt_ids {
        let class = *gt_classes.get(&g).ok_or_else(|| invalid(format!("ground-truth instance {g} has no class")))?;
        per_class.entry(class).or_insert_with(Vec::new).push(g);
    }
    let mut per_class_ap = BTreeMap::new();
    for (class, ids) in &per_class {
        let class_preds: Vec<PredInstance> = preds.iter().filter(|p| p.class_id == *class).copied().collect();
        let m = greedy_match(&class_preds, ids, &overlaps, iou_min);
        per_class_ap.insert(*class, average_precision(&m, ids.len())?);
    }
    let map = mean_ap(&per_class_ap)?;
    Ok(DetectionReport { ap, map, per_class_ap, matches })
}

/// Unweighted mean of per-class APs.
pub fn mean_ap(per_class_ap: &BTreeMap<u32, f64>) -> Result<f64> {
    if per_class_ap.is_empty() {
        return Err(Error::EmptyMetric("mean_ap"));
    }
    Ok(per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
}

/// Depth errors of ground-truth planar pixels covered by their matched
/// prediction, plus the planar-pixel total; the raw material of a recall curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelDepthErrors {
    /// Sorted ascending.
    pub errors: Vec<f64>,
    pub total: usize,
}

impl PixelDepthErrors {
    /// Pools pixels of several images.
    pub fn merge(parts: &[PixelDepthErrors]) -> Self {
        let mut errors: Vec<f64> = parts.iter().flat_map(|p| p.errors.iter().copied()).collect();
        errors.sort_by(f64::total_cmp);
        Self { errors, total: parts.iter().map(|p| p.total).sum() }
    }

    pub fn recall_curve(&self, thresholds: &[f64]) -> Result<RecallCurve> {
        if thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("recall thresholds must be ascending"));
        }
        if self.total == 0 {
            return Err(Error::EmptyMetric("pixel_recall_curve"));
        }
        let recall = thresholds
            .iter()
            .map(|&t| self.errors.partition_point(|&e| e <= t) as f64 / self.total as f64)
            .collect();
        Ok(RecallCurve { thresholds: thresholds.to_vec(), recall })
    }
}

/// Per-pixel errors behind [`pixel_recall_curve`].
pub fn pixel_depth_errors(
    pred_planes: &VectorMap,
    pred_instances: &InstanceMap,
    preds: &[PredInstance],
    gt_planes: &VectorMap,
    gt_instances: &InstanceMap,
    k: &CameraIntrinsics,
    iou_min: f64,
) -> Result<PixelDepthErrors> {
    check_dims(pred_planes, gt_planes, "plane maps")?;
    check_dims(pred_planes, gt_instances, "ground-truth instances")?;
    let matches = match_instances(pred_instances, preds, gt_instances, iou_min)?;
    let owner: BTreeMap<u16, u16> = matches.iter().filter_map(|m| m.gt.map(|g| (g, m.pred))).collect();
    let w = gt_planes.width;
    let mut total = 0usize;
    let mut errors = Vec::new();
    for (i, &g) in gt_instances.data.iter().enumerate() {
        if g == 0 {
            continue;
        }
        total += 1;
        let Some(&p) = owner.get(&g) else { continue };
        if pred_instances.data[i] != p {
            continue;
        }
        let (u, v) = ((i % w) as f64, (i / w) as f64);
        let gt_plane = PlaneParams(gt_planes.vec3(i).into());
        let pred_plane = PlaneParams(pred_planes.vec3(i).into());
        if let (Ok(d), Ok(d_star)) = (plane_induced_depth(k, &gt_plane, u, v), plane_induced_depth(k, &pred_plane, u, v)) {
            errors.push((d - d_star).abs());
        }
    }
    errors.sort_by(f64::total_cmp);
    Ok(PixelDepthErrors { errors, total })
}

/// Per-pixel depth recall: the share of ground-truth planar pixels that lie in
/// a matched predicted instance whose plane-induced depth is within `τ` of the
/// ground-truth plane-induced depth.
#[allow(clippy::too_many_arguments)]
pub fn pixel_recall_curve(
    pred_planes: &VectorMap,
    pred_instances: &InstanceMap,
    preds: &[PredInstance],
    gt_planes: &VectorMap,
    gt_instances: &InstanceMap,
    k: &CameraIntrinsics,
    thresholds: &[f64],
    iou_min: f64,
) -> Result<RecallCurve> {
    pixel_depth_errors(pred_planes, pred_instances, preds, gt_planes, gt_instances, k, iou_min)?.recall_curve(thresholds)
}
