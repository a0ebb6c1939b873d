//! Detection, segmentation and system-level evaluation metrics.
//!
//! Covers box IoU, greedy precision/recall matching, average precision at
//! IoU 0.5 with all-point interpolation, pixel-level mask mIoU over
//! rasterized polygons, verdict accuracy, and ablation table assembly.
//! Every metric is a deterministic function of its inputs.
//!
//! ```
//! use avi_core::fusion::BoundingBox;
//! use avi_core::metrics::iou_box;
//!
//! let a = BoundingBox::new(0.0, 0.0, 0.5, 1.0).unwrap();
//! let b = BoundingBox::new(0.25, 0.0, 0.5, 1.0).unwrap();
//! // intersection 0.25, union 0.75
//! assert!((iou_box(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
//! ```

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::BoundingBox;
use crate::routing::{Coverage, TaskId};
use crate::rules::{DamageKind, Verdict};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("input list is empty")]
    EmptyInput,
    #[error("ablation modes ran on different populations: {0} vs {1}")]
    ModeMismatch(String, String),
    #[error("iou threshold {0} outside (0,1]")]
    BadThreshold(f64),
}

/// A class-labeled box for evaluation. `score` is present on predictions
/// and absent on ground truth. `image` scopes matching: boxes only match
/// within the same image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    #[serde(default)]
    pub image: String,
    pub class: TaskId,
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Intersection-over-union of two normalized rectangles; 0 when disjoint.
pub fn iou_box(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter / union
}

/// Counting outcome of greedy score-descending matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchStats {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy matching: predictions in descending score order, each one a TP if
/// it overlaps an unmatched same-class ground truth in the same image with
/// IoU >= `iou_thresh` (taking the best-IoU candidate). Degenerate
/// conventions: precision is 0 when there are no predictions, recall 0 when
/// there is no ground truth, F1 0 when either is 0.
pub fn match_and_score(
    preds: &[LabeledBox],
    gts: &[LabeledBox],
    iou_thresh: f64,
) -> Result<MatchStats, MetricsError> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(MetricsError::BadThreshold(iou_thresh));
    }
    let flags = match_flags(preds, gts, iou_thresh);
    let tp = flags.iter().filter(|t| **t).count();
    let fp = preds.len() - tp;
    let fn_ = gts.len() - tp;
    let precision = if preds.is_empty() {
        0.0
    } else {
        tp as f64 / preds.len() as f64
    };
    let recall = if gts.is_empty() {
        0.0
    } else {
        tp as f64 / gts.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MatchStats {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
    })
}

/// Per-prediction TP flags in descending score order, paired with the
/// sorted prediction indices. Shared by PR counting and AP.
fn match_flags(preds: &[LabeledBox], gts: &[LabeledBox], iou_thresh: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = preds[a].score.unwrap_or(0.0);
        let sb = preds[b].score.unwrap_or(0.0);
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    let mut gt_used = vec![false; gts.len()];
    let mut flags_by_rank = Vec::with_capacity(preds.len());
    for &pi in &order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_used[gi] || g.class != p.class || g.image != p.image {
                continue;
            }
            let iou = iou_box(&p.bbox, &g.bbox);
            if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_used[gi] = true;
                flags_by_rank.push(true);
            }
            None => flags_by_rank.push(false),
        }
    }
    flags_by_rank
}

/// Average precision for one class at the given IoU threshold, using
/// all-point interpolation (step area under the precision envelope).
pub fn average_precision(preds: &[LabeledBox], gts: &[LabeledBox], class: &TaskId, iou_thresh: f64) -> f64 {
    let p: Vec<LabeledBox> = preds.iter().filter(|b| &b.class == class).cloned().collect();
    let g: Vec<LabeledBox> = gts.iter().filter(|b| &b.class == class).cloned().collect();
    if g.is_empty() {
        return 0.0;
    }
    let flags = match_flags(&p, &g, iou_thresh);
    let n_gt = g.len() as f64;
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(flags.len()); // (recall, precision)
    for (rank, hit) in flags.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        points.push((tp as f64 / n_gt, tp as f64 / (rank + 1) as f64));
    }
    // precision envelope: max precision at any recall >= r
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (r, _) = points[i];
        if r > prev_recall {
            let envelope = points[i..]
                .iter()
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            ap += (r - prev_recall) * envelope;
            prev_recall = r;
        }
    }
    ap
}

/// Per-class AP at IoU 0.5 plus the unweighted mean over classes present in
/// the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub per_class: IndexMap<TaskId, f64>,
    pub map: f64,
}

pub fn map_at_50(preds: &[LabeledBox], gts: &[LabeledBox]) -> MapResult {
    let mut classes: Vec<TaskId> = Vec::new();
    for g in gts {
        if !classes.contains(&g.class) {
            classes.push(g.class.clone());
        }
    }
    let mut per_class = IndexMap::new();
    for c in &classes {
        per_class.insert(c.clone(), average_precision(preds, gts, c, 0.5));
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    MapResult { per_class, map }
}

/// Default evaluation raster edge for polygon masks.
pub const DEFAULT_RASTER: usize = 512;

/// Class-labeled occupancy raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterMask {
    pub class: DamageKind,
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl RasterMask {
    pub fn empty(class: DamageKind, width: usize, height: usize) -> Self {
        RasterMask {
            class,
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Rasterizes a normalized polygon with the even-odd rule, sampling
    /// pixel centers.
    pub fn from_polygon(class: DamageKind, polygon: &[[f64; 2]], width: usize, height: usize) -> Self {
        let mut mask = RasterMask::empty(class, width, height);
        for y in 0..height {
            let py = (y as f64 + 0.5) / height as f64;
            for x in 0..width {
                let px = (x as f64 + 0.5) / width as f64;
                if point_in_polygon_even_odd(px, py, polygon) {
                    mask.bits[y * width + x] = true;
                }
            }
        }
        mask
    }

    pub fn union_in_place(&mut self, other: &RasterMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }
}

fn point_in_polygon_even_odd(px: f64, py: f64, polygon: &[[f64; 2]]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    for i in 0..n {
        let [x1, y1] = polygon[i];
        let [x2, y2] = polygon[(i + 1) % n];
        if (y1 > py) != (y2 > py) {
            let x_cross = x1 + (py - y1) / (y2 - y1) * (x2 - x1);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Mean pixel IoU over damage classes. Instances of the same class are
/// unioned on each side; classes with an empty prediction-union and
/// gt-union are skipped. Errors when raster dimensions differ.
pub fn mean_iou(preds: &[RasterMask], gts: &[RasterMask]) -> Result<f64, MetricsError> {
    let dims = preds
        .iter()
        .chain(gts)
        .map(|m| (m.width, m.height))
        .collect::<Vec<_>>();
    if let Some(&(w0, h0)) = dims.first() {
        for &(w, h) in &dims {
            if (w, h) != (w0, h0) {
                return Err(MetricsError::DimensionMismatch(w0, h0, w, h));
            }
        }
    }
    let mut ious = Vec::new();
    for class in DamageKind::ALL {
        let union_of = |masks: &[RasterMask]| -> Option<RasterMask> {
            let mut acc: Option<RasterMask> = None;
            for m in masks.iter().filter(|m| m.class == class) {
                match &mut acc {
                    Some(a) => a.union_in_place(m),
                    None => acc = Some(m.clone()),
                }
            }
            acc
        };
        let p = union_of(preds);
        let g = union_of(gts);
        if p.is_none() && g.is_none() {
            continue;
        }
        let (w, h) = dims[0];
        let empty = RasterMask::empty(class, w, h);
        let p = p.unwrap_or_else(|| empty.clone());
        let g = g.unwrap_or(empty);
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in p.bits.iter().zip(&g.bits) {
            if *a && *b {
                inter += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        if union > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    if ious.is_empty() {
        // both sides empty for every class: perfect agreement
        return Ok(1.0);
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Predicted vs ground-truth verdict for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictPair {
    pub predicted: Verdict,
    pub ground_truth: Verdict,
}

/// Fraction of vehicles whose predicted verdict matches the ground truth.
pub fn system_accuracy(pairs: &[VerdictPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = pairs
        .iter()
        .filter(|p| p.predicted == p.ground_truth)
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// The six ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationMode {
    T1,
    T2,
    T3,
    Side,
    NoSeg,
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        AblationMode::T1,
        AblationMode::T2,
        AblationMode::T3,
        AblationMode::Side,
        AblationMode::NoSeg,
        AblationMode::Full,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AblationMode::T1 => "T1 (Front)",
            AblationMode::T2 => "T2 (Top)",
            AblationMode::T3 => "T3 (Rear)",
            AblationMode::Side => "Side",
            AblationMode::NoSeg => "No Seg. (all views)",
            AblationMode::Full => "Full AVI System",
        }
    }

    pub fn parse(s: &str) -> Option<AblationMode> {
        match s {
            "T1" => Some(AblationMode::T1),
            "T2" => Some(AblationMode::T2),
            "T3" => Some(AblationMode::T3),
            "Side" => Some(AblationMode::Side),
            "NoSeg" => Some(AblationMode::NoSeg),
            "Full" => Some(AblationMode::Full),
            _ => None,
        }
    }

    /// Cameras active in this mode.
    pub fn views(&self) -> Vec<crate::routing::CameraId> {
        use crate::routing::CameraId;
        match self {
            AblationMode::T1 => vec![CameraId::T1],
            AblationMode::T2 => vec![CameraId::T2],
            AblationMode::T3 => vec![CameraId::T3],
            AblationMode::Side => CameraId::SIDE.to_vec(),
            AblationMode::NoSeg | AblationMode::Full => CameraId::ALL.to_vec(),
        }
    }

    pub fn segmentation_enabled(&self) -> bool {
        !matches!(self, AblationMode::NoSeg)
    }
}

/// Measured outcome of one ablation mode run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeResult {
    pub mode: AblationMode,
    pub coverage: Coverage,
    pub defect_detection: f64,
    pub mean_latency_ms: f64,
    pub verification_accuracy: f64,
    /// Population identity (seed + size); modes must agree.
    pub population_fingerprint: String,
}

/// Rows in fixed mode order with the published column layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<ModeResult>,
}

/// Orders rows T1, T2, T3, Side, NoSeg, Full and rejects results from
/// different populations.
pub fn ablation_table(results: &[ModeResult]) -> Result<AblationTable, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let fp0 = &results[0].population_fingerprint;
    for r in results {
        if &r.population_fingerprint != fp0 {
            return Err(MetricsError::ModeMismatch(
                fp0.clone(),
                r.population_fingerprint.clone(),
            ));
        }
    }
    let mut rows = Vec::new();
    for mode in AblationMode::ALL {
        if let Some(r) = results.iter().find(|r| r.mode == mode) {
            rows.push(r.clone());
        }
    }
    Ok(AblationTable { rows })
}

impl AblationTable {
    /// Aligned text rendering with the fixed column order.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22}{:>16}{:>15}{:>10}{:>17}\n",
            "Case", "Feat. Cov. (%)", "Def. Det. (%)", "Lat (ms)", "Verif. Acc. (%)"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<22}{:>16}{:>15.1}{:>10.1}{:>17.1}\n",
                r.mode.label(),
                format!("{}/{} = {:.1}", r.coverage.covered, r.coverage.checklist_size, r.coverage.percent()),
                r.defect_detection * 100.0,
                r.mean_latency_ms,
                r.verification_accuracy * 100.0
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn pred(class: &str, bbox: BoundingBox, score: f64) -> LabeledBox {
        LabeledBox {
            image: String::new(),
            class: class.into(),
            bbox,
            score: Some(score),
        }
    }

    fn gt(class: &str, bbox: BoundingBox) -> LabeledBox {
        LabeledBox {
            image: String::new(),
            class: class.into(),
            bbox,
            score: None,
        }
    }

    #[test]
    fn iou_identity_disjoint_and_analytic() {
        let a = bb(0.1, 0.1, 0.3, 0.3);
        assert!((iou_box(&a, &a) - 1.0).abs() < 1e-12);
        let b = bb(0.6, 0.6, 0.2, 0.2);
        assert_eq!(iou_box(&a, &b), 0.0);
        // nested half: intersection 0.5, union 1.0
        let full = bb(0.0, 0.0, 1.0, 1.0);
        let half = bb(0.5, 0.0, 0.5, 1.0);
        assert!((iou_box(&full, &half) - 0.5).abs() < 1e-12);
        // offset halves: intersection 0.25, union 0.75
        let left = bb(0.0, 0.0, 0.5, 1.0);
        let mid = bb(0.25, 0.0, 0.5, 1.0);
        assert!((iou_box(&left, &mid) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let rand_box = |rng: &mut ChaCha8Rng| {
                let w = rng.gen_range(0.05..0.5);
                let h = rng.gen_range(0.05..0.5);
                bb(
                    rng.gen_range(0.0..1.0 - w),
                    rng.gen_range(0.0..1.0 - h),
                    w,
                    h,
                )
            };
            let a = rand_box(&mut rng);
            let b = rand_box(&mut rng);
            let ab = iou_box(&a, &b);
            assert!((ab - iou_box(&b, &a)).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2)), gt("logo", bb(0.5, 0.5, 0.2, 0.2))];
        let p = vec![
            pred("logo", bb(0.1, 0.1, 0.2, 0.2), 0.9),
            pred("logo", bb(0.5, 0.5, 0.2, 0.2), 0.8),
        ];
        let s = match_and_score(&p, &g, 0.5).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (2, 0, 0));
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_predictions_degenerate_convention() {
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2))];
        let s = match_and_score(&[], &g, 0.5).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert_eq!(s.fn_, 1);
    }

    #[test]
    fn class_and_image_mismatches_never_match() {
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2))];
        let p = vec![pred("mascot", bb(0.1, 0.1, 0.2, 0.2), 0.9)];
        let s = match_and_score(&p, &g, 0.5).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (0, 1, 1));

        let mut p2 = vec![pred("logo", bb(0.1, 0.1, 0.2, 0.2), 0.9)];
        p2[0].image = "other".into();
        let s2 = match_and_score(&p2, &g, 0.5).unwrap();
        assert_eq!(s2.tp, 0);
    }

    /// Exhaustive optimal assignment on tiny instances; greedy divergence is
    /// logged, not asserted.
    #[test]
    fn greedy_vs_optimal_assignment_on_small_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut divergences = 0;
        for _ in 0..300 {
            let nb = rng.gen_range(0..4usize);
            let ng = rng.gen_range(0..4usize);
            let rand_box = |rng: &mut ChaCha8Rng| {
                let w = rng.gen_range(0.1..0.5);
                let h = rng.gen_range(0.1..0.5);
                bb(rng.gen_range(0.0..1.0 - w), rng.gen_range(0.0..1.0 - h), w, h)
            };
            let preds: Vec<LabeledBox> = (0..nb)
                .map(|_| pred("logo", rand_box(&mut rng), rng.gen_range(0.0..1.0)))
                .collect();
            let gts: Vec<LabeledBox> = (0..ng).map(|_| gt("logo", rand_box(&mut rng))).collect();
            let s = match_and_score(&preds, &gts, 0.5).unwrap();
            // brute-force max matching over all injective pred->gt maps
            let optimal = brute_force_max_matching(&preds, &gts, 0.5);
            assert!(s.tp <= optimal);
            if s.tp != optimal {
                divergences += 1;
                log::info!("greedy {}, optimal {}", s.tp, optimal);
            }
        }
        // not asserted to be zero; just visible
        let _ = divergences;
    }

    fn brute_force_max_matching(preds: &[LabeledBox], gts: &[LabeledBox], thresh: f64) -> usize {
        fn go(
            pi: usize,
            preds: &[LabeledBox],
            gts: &[LabeledBox],
            used: &mut Vec<bool>,
            thresh: f64,
        ) -> usize {
            if pi == preds.len() {
                return 0;
            }
            let mut best = go(pi + 1, preds, gts, used, thresh);
            for gi in 0..gts.len() {
                if used[gi]
                    || gts[gi].class != preds[pi].class
                    || gts[gi].image != preds[pi].image
                    || iou_box(&preds[pi].bbox, &gts[gi].bbox) < thresh
                {
                    continue;
                }
                used[gi] = true;
                best = best.max(1 + go(pi + 1, preds, gts, used, thresh));
                used[gi] = false;
            }
            best
        }
        go(0, preds, gts, &mut vec![false; gts.len()], thresh)
    }

    #[test]
    fn ap_is_one_for_correct_ranked_predictions() {
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2)), gt("logo", bb(0.5, 0.5, 0.2, 0.2))];
        let p = vec![
            pred("logo", bb(0.1, 0.1, 0.2, 0.2), 0.95),
            pred("logo", bb(0.5, 0.5, 0.2, 0.2), 0.9),
        ];
        assert_eq!(average_precision(&p, &g, &"logo".into(), 0.5), 1.0);
    }

    #[test]
    fn ap_is_zero_without_predictions() {
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2))];
        assert_eq!(average_precision(&[], &g, &"logo".into(), 0.5), 0.0);
    }

    #[test]
    fn ap_interleaved_hit_miss_known_value() {
        // ranked: hit, miss, hit over 2 GT
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2)), gt("logo", bb(0.5, 0.5, 0.2, 0.2))];
        let p = vec![
            pred("logo", bb(0.1, 0.1, 0.2, 0.2), 0.9),
            pred("logo", bb(0.75, 0.1, 0.2, 0.2), 0.8), // matches nothing
            pred("logo", bb(0.5, 0.5, 0.2, 0.2), 0.7),
        ];
        // recall steps: 0.5 at precision 1.0, 1.0 at precision 2/3
        let want = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
        let got = average_precision(&p, &g, &"logo".into(), 0.5);
        assert!((got - want).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn ap_invariant_under_monotone_score_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rand_box = |rng: &mut ChaCha8Rng| {
                let w = rng.gen_range(0.1..0.4);
                let h = rng.gen_range(0.1..0.4);
                bb(rng.gen_range(0.0..1.0 - w), rng.gen_range(0.0..1.0 - h), w, h)
            };
            let gts: Vec<LabeledBox> = (0..rng.gen_range(1..4))
                .map(|_| gt("logo", rand_box(&mut rng)))
                .collect();
            let preds: Vec<LabeledBox> = (0..rng.gen_range(0..5))
                .map(|_| pred("logo", rand_box(&mut rng), rng.gen_range(0.1..0.9)))
                .collect();
            let rescaled: Vec<LabeledBox> = preds
                .iter()
                .map(|p| {
                    let mut q = p.clone();
                    q.score = q.score.map(|s| 0.5 * s + 0.1); // strictly monotone
                    q
                })
                .collect();
            let a = average_precision(&preds, &gts, &"logo".into(), 0.5);
            let b = average_precision(&rescaled, &gts, &"logo".into(), 0.5);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn map_skips_classes_absent_from_gt() {
        let g = vec![gt("logo", bb(0.1, 0.1, 0.2, 0.2))];
        let p = vec![
            pred("logo", bb(0.1, 0.1, 0.2, 0.2), 0.9),
            pred("mascot", bb(0.5, 0.5, 0.2, 0.2), 0.9),
        ];
        let r = map_at_50(&p, &g);
        assert_eq!(r.per_class.len(), 1);
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn mask_identity_and_disjoint() {
        let square = vec![[0.2, 0.2], [0.6, 0.2], [0.6, 0.6], [0.2, 0.6]];
        let m = RasterMask::from_polygon(DamageKind::Scratch, &square, 64, 64);
        assert_eq!(mean_iou(std::slice::from_ref(&m), std::slice::from_ref(&m)).unwrap(), 1.0);
        let far = vec![[0.7, 0.7], [0.9, 0.7], [0.9, 0.9], [0.7, 0.9]];
        let f = RasterMask::from_polygon(DamageKind::Scratch, &far, 64, 64);
        assert_eq!(mean_iou(&[m], &[f]).unwrap(), 0.0);
    }

    #[test]
    fn mask_dimension_mismatch_errors() {
        let a = RasterMask::empty(DamageKind::Dent, 32, 32);
        let b = RasterMask::empty(DamageKind::Dent, 64, 64);
        assert!(matches!(
            mean_iou(&[a], &[b]),
            Err(MetricsError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn random_rasters_match_bit_count_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..150 {
            let rand_mask = |rng: &mut ChaCha8Rng, class: DamageKind| {
                let mut m = RasterMask::empty(class, 32, 32);
                for b in &mut m.bits {
                    *b = rng.gen_bool(0.3);
                }
                m
            };
            let preds = vec![
                rand_mask(&mut rng, DamageKind::Scratch),
                rand_mask(&mut rng, DamageKind::Dent),
            ];
            let gts = vec![
                rand_mask(&mut rng, DamageKind::Scratch),
                rand_mask(&mut rng, DamageKind::Dent),
            ];
            let got = mean_iou(&preds, &gts).unwrap();
            // per-pixel recount oracle
            let mut ious = Vec::new();
            for class in [DamageKind::Scratch, DamageKind::Dent] {
                let p = preds.iter().find(|m| m.class == class).unwrap();
                let g = gts.iter().find(|m| m.class == class).unwrap();
                let mut inter = 0;
                let mut union = 0;
                for i in 0..p.bits.len() {
                    if p.bits[i] && g.bits[i] {
                        inter += 1;
                    }
                    if p.bits[i] || g.bits[i] {
                        union += 1;
                    }
                }
                if union > 0 {
                    ious.push(inter as f64 / union as f64);
                }
            }
            let want = if ious.is_empty() {
                1.0
            } else {
                ious.iter().sum::<f64>() / ious.len() as f64
            };
            assert_eq!(got, want);
        }
    }

    #[test]
    fn system_accuracy_basic_and_empty() {
        let hit = VerdictPair {
            predicted: Verdict::Pass,
            ground_truth: Verdict::Pass,
        };
        let miss = VerdictPair {
            predicted: Verdict::Pass,
            ground_truth: Verdict::Fail,
        };
        assert_eq!(system_accuracy(&[hit, hit]).unwrap(), 1.0);
        assert_eq!(system_accuracy(&[hit, miss]).unwrap(), 0.5);
        assert!(matches!(system_accuracy(&[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn system_accuracy_random_matches_indicator_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let pairs: Vec<VerdictPair> = (0..rng.gen_range(1..50))
                .map(|_| VerdictPair {
                    predicted: if rng.gen_bool(0.5) { Verdict::Pass } else { Verdict::Fail },
                    ground_truth: if rng.gen_bool(0.5) { Verdict::Pass } else { Verdict::Fail },
                })
                .collect();
            let got = system_accuracy(&pairs).unwrap();
            let sum: usize = pairs
                .iter()
                .map(|p| usize::from(p.predicted == p.ground_truth))
                .sum();
            assert_eq!(got, sum as f64 / pairs.len() as f64);
        }
    }

    #[test]
    fn ablation_table_orders_rows_and_checks_population() {
        let mk = |mode, fp: &str| ModeResult {
            mode,
            coverage: Coverage {
                covered: 3,
                checklist_size: 7,
            },
            defect_detection: 0.5,
            mean_latency_ms: 200.0,
            verification_accuracy: 0.9,
            population_fingerprint: fp.to_string(),
        };
        let rows = vec![mk(AblationMode::Full, "a"), mk(AblationMode::T1, "a")];
        let table = ablation_table(&rows).unwrap();
        assert_eq!(table.rows[0].mode, AblationMode::T1);
        assert_eq!(table.rows[1].mode, AblationMode::Full);

        let bad = vec![mk(AblationMode::Full, "a"), mk(AblationMode::T1, "b")];
        assert!(matches!(
            ablation_table(&bad),
            Err(MetricsError::ModeMismatch(..))
        ));
    }
}
