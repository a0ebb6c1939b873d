//! Set-theoretic variant verification and verdict assembly.
//!
//! The rule engine compares the detected feature set against the
//! VIN-derived expectation: missing features are `expected \ detected`,
//! extraneous ones `detected \ expected`. A vehicle passes only when both
//! discrepancy sets and the gated damage set are empty (and, when the OCR
//! and powertrain checks run, both match the manifest).
//!
//! ```
//! use avi_core::routing::RoutingConfig;
//! use avi_core::rules::{compute_discrepancies, decide, Verdict};
//!
//! let table = RoutingConfig::from_toml_str(r#"
//!     checklist = ["logo", "antenna", "roof_rails"]
//!     [assignments]
//!     logo = ["T1"]
//!     antenna = ["T2"]
//!     roof_rails = ["T2", "T3"]
//! "#).unwrap().build().unwrap();
//!
//! let expected = vec!["logo".into(), "antenna".into()];
//! let detected = vec!["logo".into(), "roof_rails".into()];
//! let d = compute_discrepancies(&expected, &detected, &table).unwrap();
//! assert_eq!(d.missing, ["antenna".into()]);
//! assert_eq!(d.extra, ["roof_rails".into()]);
//! assert_eq!(decide(&d, &[]), Verdict::Fail);
//! ```

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusedScores;
use crate::routing::{CameraId, RoutingTable, TaskId};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("task `{0}` is not in the routing vocabulary")]
    UnknownTask(String),
    #[error("damage instance invalid: {0}")]
    BadDamage(String),
}

/// Category of a surface anomaly mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageKind {
    Scratch,
    Dent,
    PaintDeformity,
}

impl DamageKind {
    pub const ALL: [DamageKind; 3] =
        [DamageKind::Scratch, DamageKind::Dent, DamageKind::PaintDeformity];

    pub fn as_str(&self) -> &'static str {
        match self {
            DamageKind::Scratch => "scratch",
            DamageKind::Dent => "dent",
            DamageKind::PaintDeformity => "paint_deformity",
        }
    }
}

/// One segmented damage region from a side camera, stored as a simple
/// polygon in normalized image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageInstance {
    pub camera: CameraId,
    pub kind: DamageKind,
    /// Vertices in order, each `[x, y]` in [0,1]. Must be simple
    /// (non-self-intersecting) with at least three vertices.
    pub polygon: Vec<[f64; 2]>,
    pub score: f64,
    /// Polygon area divided by image area, in (0,1).
    pub area_fraction: f64,
}

impl DamageInstance {
    /// Checks the structural invariants. `damage_views` is the set of
    /// cameras allowed to carry damage evidence (default: the side rig).
    pub fn validate(&self, damage_views: &[CameraId]) -> Result<(), RuleError> {
        if self.polygon.len() < 3 {
            return Err(RuleError::BadDamage(format!(
                "polygon has {} vertices, need >= 3",
                self.polygon.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(RuleError::BadDamage(format!("score {} outside [0,1]", self.score)));
        }
        if !(self.area_fraction > 0.0 && self.area_fraction < 1.0) {
            return Err(RuleError::BadDamage(format!(
                "area_fraction {} outside (0,1)",
                self.area_fraction
            )));
        }
        if !damage_views.contains(&self.camera) {
            return Err(RuleError::BadDamage(format!(
                "camera {} is not a configured damage view",
                self.camera
            )));
        }
        if !polygon_is_simple(&self.polygon) {
            return Err(RuleError::BadDamage("polygon self-intersects".into()));
        }
        Ok(())
    }
}

/// True when no two non-adjacent edges intersect.
fn polygon_is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            // skip adjacent edges (sharing a vertex), including the wrap pair
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a1, a2) = (poly[i], poly[(i + 1) % n]);
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Missing and extraneous feature sets, each in vocabulary order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancies {
    pub missing: Vec<TaskId>,
    pub extra: Vec<TaskId>,
}

impl Discrepancies {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty()
    }
}

/// Final inspection outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// `missing = expected \ detected`, `extra = detected \ expected`, both
/// ordered by the routing vocabulary. Errors if either set strays outside
/// the vocabulary.
pub fn compute_discrepancies(
    expected: &[TaskId],
    detected: &[TaskId],
    table: &RoutingTable,
) -> Result<Discrepancies, RuleError> {
    for t in expected.iter().chain(detected) {
        if !table.contains_task(t) {
            return Err(RuleError::UnknownTask(t.to_string()));
        }
    }
    let mut missing = Vec::new();
    let mut extra = Vec::new();
    for t in table.tasks() {
        let exp = expected.contains(t);
        let det = detected.contains(t);
        if exp && !det {
            missing.push(t.clone());
        }
        if det && !exp {
            extra.push(t.clone());
        }
    }
    Ok(Discrepancies { missing, extra })
}

/// Keeps instances with `score > min_score` and
/// `area_fraction >= min_area_fraction`, preserving order.
pub fn gate_damages(
    raw: &[DamageInstance],
    min_score: f64,
    min_area_fraction: f64,
) -> Vec<DamageInstance> {
    raw.iter()
        .filter(|d| d.score > min_score && d.area_fraction >= min_area_fraction)
        .cloned()
        .collect()
}

/// PASS iff both discrepancy sets and the damage set are empty.
pub fn decide(discrepancies: &Discrepancies, damages: &[DamageInstance]) -> Verdict {
    if discrepancies.is_empty() && damages.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Result of comparing an auxiliary perception output (OCR variant name,
/// ICE/EV classification) against the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCheck {
    pub expected: String,
    pub observed: String,
    pub matched: bool,
}

impl AttributeCheck {
    pub fn new(expected: impl Into<String>, observed: impl Into<String>) -> Self {
        let expected = expected.into();
        let observed = observed.into();
        let matched = expected == observed;
        AttributeCheck {
            expected,
            observed,
            matched,
        }
    }
}

/// Identity and timing context a report is built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleContext {
    pub vehicle_id: String,
    pub vin: String,
    pub trigger_seq: u64,
    pub trigger_timestamp_ms: u64,
}

/// Interpretable per-vehicle inspection report.
///
/// Field order is the serialization order; reports for identical inputs are
/// byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InspectionReport {
    pub vehicle_id: String,
    pub vin: String,
    pub trigger_seq: u64,
    pub verdict: Verdict,
    /// Present only on FAIL; names the dominant failure cause.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub missing: Vec<TaskId>,
    pub extra: Vec<TaskId>,
    pub damages: Vec<DamageInstance>,
    pub fused_scores: IndexMap<TaskId, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant_check: Option<AttributeCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub powertrain_check: Option<AttributeCheck>,
    /// Simulated per-stage latencies in milliseconds, in execution order.
    pub stage_latency_ms: IndexMap<String, f64>,
    pub total_latency_ms: f64,
}

impl InspectionReport {
    /// Re-derives the verdict from the report's own evidence fields; used
    /// as a self-consistency check on serialized reports.
    pub fn derived_verdict(&self) -> Verdict {
        let checks_ok = self.variant_check.as_ref().is_none_or(|c| c.matched)
            && self.powertrain_check.as_ref().is_none_or(|c| c.matched);
        if self.missing.is_empty()
            && self.extra.is_empty()
            && self.damages.is_empty()
            && self.reason.is_none()
            && checks_ok
        {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned human-readable rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        out.push_str(&format!(
            "vehicle {}  vin {}  seq {}\nverdict: {}\n",
            self.vehicle_id, self.vin, self.trigger_seq, verdict
        ));
        if let Some(r) = &self.reason {
            out.push_str(&format!("reason:  {r}\n"));
        }
        let join = |v: &[TaskId]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
            }
        };
        out.push_str(&format!("missing: {}\n", join(&self.missing)));
        out.push_str(&format!("extra:   {}\n", join(&self.extra)));
        out.push_str(&format!("damages: {}\n", self.damages.len()));
        for d in &self.damages {
            out.push_str(&format!(
                "  - {} on {} (score {:.2}, area {:.4}%)\n",
                d.kind.as_str(),
                d.camera,
                d.score,
                d.area_fraction * 100.0
            ));
        }
        if let Some(c) = &self.variant_check {
            out.push_str(&format!(
                "variant ocr: expected `{}` observed `{}` -> {}\n",
                c.expected,
                c.observed,
                if c.matched { "match" } else { "MISMATCH" }
            ));
        }
        if let Some(c) = &self.powertrain_check {
            out.push_str(&format!(
                "powertrain:  expected `{}` observed `{}` -> {}\n",
                c.expected,
                c.observed,
                if c.matched { "match" } else { "MISMATCH" }
            ));
        }
        out.push_str("scores:\n");
        for (t, s) in &self.fused_scores {
            out.push_str(&format!("  {t:<16} {s:.3}\n"));
        }
        out.push_str("latency (ms):\n");
        for (stage, ms) in &self.stage_latency_ms {
            out.push_str(&format!("  {stage:<16} {ms:.1}\n"));
        }
        out.push_str(&format!("  {:<16} {:.1}\n", "total", self.total_latency_ms));
        out
    }
}

/// Assembles the report and derives the verdict from the evidence supplied.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    ctx: &VehicleContext,
    fused_scores: &FusedScores,
    discrepancies: Discrepancies,
    damages: Vec<DamageInstance>,
    variant_check: Option<AttributeCheck>,
    powertrain_check: Option<AttributeCheck>,
    stage_latency_ms: IndexMap<String, f64>,
    total_latency_ms: f64,
) -> InspectionReport {
    let base = decide(&discrepancies, &damages);
    let checks_ok = variant_check.as_ref().is_none_or(|c| c.matched)
        && powertrain_check.as_ref().is_none_or(|c| c.matched);
    let verdict = if base == Verdict::Pass && checks_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let reason = if verdict == Verdict::Fail {
        Some(fail_reason(
            &discrepancies,
            &damages,
            variant_check.as_ref(),
            powertrain_check.as_ref(),
        ))
    } else {
        None
    };
    InspectionReport {
        vehicle_id: ctx.vehicle_id.clone(),
        vin: ctx.vin.clone(),
        trigger_seq: ctx.trigger_seq,
        verdict,
        reason,
        missing: discrepancies.missing,
        extra: discrepancies.extra,
        damages,
        fused_scores: fused_scores.0.clone(),
        variant_check,
        powertrain_check,
        stage_latency_ms,
        total_latency_ms,
    }
}

fn fail_reason(
    d: &Discrepancies,
    damages: &[DamageInstance],
    variant: Option<&AttributeCheck>,
    powertrain: Option<&AttributeCheck>,
) -> String {
    let mut parts = Vec::new();
    if !d.missing.is_empty() {
        parts.push("missing features".to_string());
    }
    if !d.extra.is_empty() {
        parts.push("extraneous features".to_string());
    }
    if !damages.is_empty() {
        parts.push("surface damage".to_string());
    }
    if variant.is_some_and(|c| !c.matched) {
        parts.push("variant name mismatch".to_string());
    }
    if powertrain.is_some_and(|c| !c.matched) {
        parts.push("powertrain mismatch".to_string());
    }
    parts.join(" + ")
}
