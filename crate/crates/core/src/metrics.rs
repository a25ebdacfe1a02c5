//! Detection scoring: IoU matching, precision-recall curves, AP, max-F1 and
//! false discovery rate, for single images and pooled over a dataset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compose::GroundTruthBox;
use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// IoU threshold of the reporting operating point.
pub const IOU_MIN: f64 = 0.5;
/// Confidence threshold of the reporting operating point.
pub const CONF_MIN: f64 = 0.3;

/// Axis-aligned box, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }
}

impl From<&GroundTruthBox> for BBox<f64> {
    fn from(b: &GroundTruthBox) -> Self {
        Self::new(b.x, b.y, b.w, b.h)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    #[serde(default)]
    pub image: usize,
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<Match>,
}

/// Matches detections with `objectness > conf_min` against `gts`.
///
/// Detections are visited by descending objectness (earlier index first on
/// ties); each claims the unmatched ground truth of highest IoU if that IoU
/// exceeds `iou_min`, and is a false positive otherwise.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_min: f64,
    conf_min: f64,
) -> MatchResult {
    let mut result = MatchResult::default();
    let outcomes = greedy_outcomes(dets, gts, iou_min, |o| o > conf_min);
    for (d, outcome) in outcomes {
        match outcome {
            Some((g, v)) => {
                result.tp += 1;
                result.matches.push(Match {
                    image: 0,
                    detection: d,
                    ground_truth: g,
                    iou: v,
                });
            }
            None => result.fp += 1,
        }
    }
    result.fn_ = gts.len() - result.tp;
    result
}

/// Visit order: descending objectness, ascending index.
fn visit_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].objectness.total_cmp(&dets[a].objectness).then(a.cmp(&b)));
    order
}

/// Greedy decisions for the included detections, in visit order.
fn greedy_outcomes(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_min: f64,
    include: impl Fn(f64) -> bool,
) -> Vec<(usize, Option<(usize, f64)>)> {
    let gt_boxes: Vec<BBox<f64>> = gts.iter().map(BBox::from).collect();
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::new();
    for d in visit_order(dets) {
        if !include(dets[d].objectness) {
            continue;
        }
        let bb = dets[d].bbox();
        let mut best: Option<(usize, f64)> = None;
        for (g, gb) in gt_boxes.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&bb, gb);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        let hit = best.filter(|&(_, v)| v > iou_min);
        if let Some((g, _)) = hit {
            taken[g] = true;
        }
        out.push((d, hit));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

/// Precision-recall points ordered by descending threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Cumulative counts at each distinct threshold, highest first.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sweep {
    threshold: f64,
    tp: usize,
    fp: usize,
}

/// Sweeps every distinct objectness value of a pooled dataset.
///
/// Greedy matching visits detections in the same order whatever the cut, so
/// the matching at threshold `t` is the prefix of the full matching made of
/// detections with objectness `>= t`. One pass therefore yields every point.
fn sweep(images: &[(&[Detection], &[GroundTruthBox])], iou_min: f64) -> (Vec<Sweep>, usize) {
    let mut decided: Vec<(f64, bool)> = Vec::new();
    let mut n_gt = 0;
    for (dets, gts) in images {
        n_gt += gts.len();
        for (d, hit) in greedy_outcomes(dets, gts, iou_min, |_| true) {
            decided.push((dets[d].objectness, hit.is_some()));
        }
    }
    decided.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<Sweep> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(obj, hit)) in decided.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_value = decided.get(i + 1).is_none_or(|n| n.0 != obj);
        if last_of_value {
            out.push(Sweep {
                threshold: obj,
                tp,
                fp,
            });
        }
    }
    (out, n_gt)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn curve_from(sweeps: &[Sweep], n_gt: usize) -> PrCurve {
    PrCurve {
        points: sweeps
            .iter()
            .map(|s| PrPoint {
                recall: ratio(s.tp, n_gt),
                precision: ratio(s.tp, s.tp + s.fp),
                threshold: s.threshold,
            })
            .collect(),
    }
}

/// Recall is 0 when there is no ground truth.
pub fn pr_curve(dets: &[Detection], gts: &[GroundTruthBox], iou_min: f64) -> PrCurve {
    let (s, n) = sweep(&[(dets, gts)], iou_min);
    curve_from(&s, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Exact area under the monotone precision envelope.
    #[default]
    AllPoints,
    /// Envelope averaged at recall 0, 0.01, ..., 1.
    Points101,
}

/// Average precision of a curve; 0 for an empty curve.
pub fn average_precision(curve: &PrCurve, method: ApMethod) -> f64 {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    // envelope[k] = max precision over points k.. (recall >= recall_k)
    let mut envelope = vec![0.0; pts.len()];
    let mut run: f64 = 0.0;
    for k in (0..pts.len()).rev() {
        run = run.max(pts[k].precision);
        envelope[k] = run;
    }
    match method {
        ApMethod::AllPoints => {
            let mut ap = 0.0;
            let mut prev = 0.0;
            for (k, p) in pts.iter().enumerate() {
                ap += (p.recall - prev) * envelope[k];
                prev = p.recall;
            }
            ap
        }
        ApMethod::Points101 => {
            let total: f64 = (0..=100)
                .map(|i| {
                    let r = i as f64 / 100.0;
                    pts.iter()
                        .position(|p| p.recall >= r)
                        .map_or(0.0, |k| envelope[k])
                })
                .sum();
            total / 101.0
        }
    }
}

/// All-points AP of a curve computed at IoU 0.5.
pub fn ap50(curve: &PrCurve) -> f64 {
    average_precision(curve, ApMethod::AllPoints)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Point {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

impl F1Point {
    const EMPTY: F1Point = F1Point {
        f1: 0.0,
        precision: 0.0,
        recall: 0.0,
        threshold: 1.0,
    };
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Best F1 over the curve; the highest threshold wins ties.
fn best_f1(curve: &PrCurve) -> F1Point {
    let mut best: Option<F1Point> = None;
    for p in &curve.points {
        let f1 = f1_score(p.precision, p.recall);
        if best.is_none_or(|b| f1 > b.f1) {
            best = Some(F1Point {
                f1,
                precision: p.precision,
                recall: p.recall,
                threshold: p.threshold,
            });
        }
    }
    best.unwrap_or(F1Point::EMPTY)
}

pub fn max_f1(dets: &[Detection], gts: &[GroundTruthBox], iou_min: f64) -> F1Point {
    best_f1(&pr_curve(dets, gts, iou_min))
}

/// `FP / (FP + TP)` at IoU > 0.5 and confidence > 0.3; 0 without positives.
pub fn fdr(dets: &[Detection], gts: &[GroundTruthBox]) -> f64 {
    fdr_of(&match_detections(dets, gts, IOU_MIN, CONF_MIN))
}

fn fdr_of(m: &MatchResult) -> f64 {
    ratio(m.fp, m.fp + m.tp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iou_min: f64,
    pub conf_min: f64,
    pub ap_method: ApMethod,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_min: IOU_MIN,
            conf_min: CONF_MIN,
            ap_method: ApMethod::AllPoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub max_f1: f64,
    pub precision_at_max_f1: f64,
    pub recall_at_max_f1: f64,
    pub threshold_at_max_f1: f64,
    pub ap50: f64,
    pub fdr: f64,
    /// Pooled matching at the FDR operating point.
    pub counts: MatchResult,
    pub images: usize,
    pub ground_truths: usize,
    pub detections: usize,
    pub options: EvalOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl MetricsReport {
    /// `max-F1  precision  recall  AP@0.5  FDR`, fixed width.
    pub fn table_row(&self) -> String {
        format!(
            "{:>8.4} {:>10.4} {:>8.4} {:>8.4} {:>8.4}",
            self.max_f1, self.precision_at_max_f1, self.recall_at_max_f1, self.ap50, self.fdr
        )
    }

    pub const TABLE_HEADER: &'static str = "  max-F1  precision   recall   AP@0.5      FDR";
}

/// Pools detections and ground truths over images; matching never crosses
/// images.
pub fn evaluate_dataset(
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<GroundTruthBox>],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if detections.len() != ground_truth.len() {
        return Err(Error::Input(format!(
            "{} detection lists for {} ground-truth lists",
            detections.len(),
            ground_truth.len()
        )));
    }
    for (name, v) in [("iou_min", opts.iou_min), ("conf_min", opts.conf_min)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
        }
    }
    let images: Vec<(&[Detection], &[GroundTruthBox])> = detections
        .iter()
        .zip(ground_truth)
        .map(|(d, g)| (d.as_slice(), g.as_slice()))
        .collect();
    let mut counts = MatchResult::default();
    for (i, (d, g)) in images.iter().enumerate() {
        let m = match_detections(d, g, opts.iou_min, opts.conf_min);
        counts.tp += m.tp;
        counts.fp += m.fp;
        counts.fn_ += m.fn_;
        counts
            .matches
            .extend(m.matches.into_iter().map(|mm| Match { image: i, ..mm }));
    }
    let (sweeps, n_gt) = sweep(&images, opts.iou_min);
    let curve = curve_from(&sweeps, n_gt);
    let best = best_f1(&curve);
    let n_det = detections.iter().map(Vec::len).sum();
    let warning = if images.is_empty() {
        Some("empty dataset".to_string())
    } else if n_gt == 0 {
        Some("no ground truth in dataset".to_string())
    } else {
        None
    };
    Ok(MetricsReport {
        max_f1: best.f1,
        precision_at_max_f1: best.precision,
        recall_at_max_f1: best.recall,
        threshold_at_max_f1: best.threshold,
        ap50: average_precision(&curve, opts.ap_method),
        fdr: fdr_of(&counts),
        counts,
        images: images.len(),
        ground_truths: n_gt,
        detections: n_det,
        options: *opts,
        warning,
    })
}

/// One image of the detections / ground-truth interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image: String,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruthBox>,
}

pub fn save_records(records: &[ImageRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(records).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Evaluates an interchange file's records.
pub fn evaluate_records(records: &[ImageRecord], opts: &EvalOptions) -> Result<MetricsReport> {
    let dets: Vec<_> = records.iter().map(|r| r.detections.clone()).collect();
    let gts: Vec<_> = records.iter().map(|r| r.ground_truth.clone()).collect();
    evaluate_dataset(&dets, &gts, opts)
}
