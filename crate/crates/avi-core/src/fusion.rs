//! Decision-level evidence fusion.
//!
//! Each assigned view contributes scored detections for a task; the fused
//! task score is the maximum confidence over all views, and a feature counts
//! as detected when that score strictly exceeds the task threshold.
//!
//! ```
//! use avi_core::routing::{RoutingConfig, TaskId, CameraId};
//! use avi_core::fusion::{BoundingBox, Detection, EvidencePool, ThresholdTable, detect_features};
//!
//! let table = RoutingConfig::from_toml_str(
//!     "checklist = [\"antenna\"]\n[assignments]\nantenna = [\"T2\", \"T3\"]\n",
//! ).unwrap().build().unwrap();
//!
//! let mut pool = EvidencePool::new();
//! let bbox = BoundingBox::new(0.4, 0.1, 0.1, 0.2).unwrap();
//! pool.insert(Detection::new(CameraId::T2, "antenna".into(), bbox, 0.62).unwrap(), &table);
//! pool.insert(Detection::new(CameraId::T3, "antenna".into(), bbox, 0.91).unwrap(), &table);
//!
//! let (scores, detected) = detect_features(&pool, &table, &ThresholdTable::uniform(0.5));
//! assert_eq!(scores.get(&TaskId::new("antenna")), Some(0.91));
//! assert_eq!(detected, vec![TaskId::new("antenna")]);
//! ```

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::{CameraId, RoutingError, RoutingTable, TaskId};

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("bounding box violates geometry invariants: x={x} y={y} w={w} h={h}")]
    BadBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("confidence score {0} outside [0,1]")]
    BadScore(f64),
    #[error("threshold {0} outside [0,1]")]
    BadThreshold(f64),
}

/// Axis-aligned rectangle in normalized image coordinates.
///
/// Boxes are resolution-independent: `x`, `y`, `w`, `h` all lie in [0,1]
/// with `x + w <= 1` and `y + h <= 1`, and strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, EvidenceError> {
        let ok = x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0 && x + w <= 1.0 && y + h <= 1.0;
        if !ok {
            return Err(EvidenceError::BadBox { x, y, w, h });
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// One scored bounding box from one camera for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub camera: CameraId,
    pub task: TaskId,
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(
        camera: CameraId,
        task: TaskId,
        bbox: BoundingBox,
        score: f64,
    ) -> Result<Self, EvidenceError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EvidenceError::BadScore(score));
        }
        Ok(Detection {
            camera,
            task,
            bbox,
            score,
        })
    }
}

/// Outcome of inserting a detection into the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Accepted,
    /// The detection's camera is not an assigned view for its task, or the
    /// task is unknown. The evidence is dropped and never influences fusion.
    RejectedUnrouted,
}

/// Per-vehicle store of detections keyed by (task, camera).
///
/// Routing is enforced at insertion: evidence from a view outside the task's
/// assignment is rejected with a logged diagnostic. One writer fills the
/// pool; fusion reads it immutably afterward.
#[derive(Debug, Clone, Default)]
pub struct EvidencePool {
    by_task: IndexMap<TaskId, IndexMap<CameraId, Vec<Detection>>>,
    rejected: usize,
}

impl EvidencePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, det: Detection, table: &RoutingTable) -> InsertOutcome {
        if !table.is_routed(&det.task, det.camera) {
            log::warn!(
                "rejecting detection for task `{}` from unrouted view {} (score {:.3})",
                det.task,
                det.camera,
                det.score
            );
            self.rejected += 1;
            return InsertOutcome::RejectedUnrouted;
        }
        self.by_task
            .entry(det.task.clone())
            .or_default()
            .entry(det.camera)
            .or_default()
            .push(det);
        InsertOutcome::Accepted
    }

    /// All stored detections for `task` across its views, in insertion order
    /// per view.
    pub fn detections(&self, task: &TaskId) -> impl Iterator<Item = &Detection> {
        self.by_task
            .get(task)
            .into_iter()
            .flat_map(|per_view| per_view.values().flatten())
    }

    pub fn detection_count(&self) -> usize {
        self.by_task
            .values()
            .flat_map(|m| m.values())
            .map(Vec::len)
            .sum()
    }

    /// Number of detections rejected by routing enforcement.
    pub fn rejected(&self) -> usize {
        self.rejected
    }
}

/// Per-task decision thresholds with a fallback default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdTable {
    #[serde(default = "default_threshold")]
    pub default: f64,
    #[serde(default)]
    pub per_task: IndexMap<TaskId, f64>,
}

fn default_threshold() -> f64 {
    0.5
}

impl Default for ThresholdTable {
    fn default() -> Self {
        ThresholdTable::uniform(default_threshold())
    }
}

impl ThresholdTable {
    pub fn uniform(tau: f64) -> Self {
        ThresholdTable {
            default: tau,
            per_task: IndexMap::new(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        let t: ThresholdTable = toml::from_str(s)?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), EvidenceError> {
        for tau in std::iter::once(&self.default).chain(self.per_task.values()) {
            if !(0.0..=1.0).contains(tau) {
                return Err(EvidenceError::BadThreshold(*tau));
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, task: &TaskId) -> f64 {
        self.per_task.get(task).copied().unwrap_or(self.default)
    }
}

/// Fused per-task scores. A task with no evidence is absent, which is
/// distinct from a fused score of zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusedScores(pub IndexMap<TaskId, f64>);

impl FusedScores {
    pub fn get(&self, task: &TaskId) -> Option<f64> {
        self.0.get(task).copied()
    }
}

/// Max-pool fusion for one task: the maximum confidence over every detection
/// from the task's assigned views. `None` when no evidence exists.
pub fn fuse_task_score(
    pool: &EvidencePool,
    table: &RoutingTable,
    task: &TaskId,
) -> Result<Option<f64>, RoutingError> {
    if !table.contains_task(task) {
        return Err(RoutingError::UnknownTask(task.to_string()));
    }
    Ok(pool
        .detections(task)
        .map(|d| d.score)
        .fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |m| m.max(s)))
        }))
}

/// Fuses every task in the table and applies strict thresholding: a task is
/// detected iff its fused score exists and exceeds its threshold.
pub fn detect_features(
    pool: &EvidencePool,
    table: &RoutingTable,
    thresholds: &ThresholdTable,
) -> (FusedScores, Vec<TaskId>) {
    let mut scores = FusedScores::default();
    let mut detected = Vec::new();
    for task in table.tasks() {
        let fused = fuse_task_score(pool, table, task).expect("task comes from the table");
        if let Some(s) = fused {
            scores.0.insert(task.clone(), s);
            if s > thresholds.threshold_for(task) {
                detected.push(task.clone());
            }
        }
    }
    (scores, detected)
}
