//! Camera identities and the task-to-view routing table.
//!
//! Every inspection task is observable only from a subset of the eleven rig
//! cameras. The [`RoutingTable`] records that assignment, answers forward
//! (`views_for_task`) and inverse (`tasks_for_view`) queries, and computes
//! checklist coverage for view-restricted ablation runs.
//!
//! ```
//! use avi_core::routing::{CameraId, RoutingConfig};
//!
//! let table = RoutingConfig::from_toml_str(r#"
//!     checklist = ["logo", "antenna", "wheel_type"]
//!     [assignments]
//!     logo = ["T1", "T3"]
//!     antenna = ["T2", "T3"]
//!     wheel_type = ["L1", "R1"]
//! "#).unwrap().build().unwrap();
//!
//! // forward query: where can the antenna be seen?
//! let views = table.views_for_task(&"antenna".into()).unwrap();
//! assert_eq!(views, [CameraId::T2, CameraId::T3]);
//!
//! // restricting the rig to T1 alone covers 1 of 3 checklist items
//! let cov = table.coverage_fraction(&[CameraId::T1]).unwrap();
//! assert_eq!((cov.covered, cov.checklist_size), (1, 3));
//! assert_eq!(cov.percent(), 33.3);
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the eleven rig cameras.
///
/// T1/T2/T3 are the front, top gantry and rear views; L1–L4 and R1–R4 sweep
/// the left and right flanks (fender, door panels, rear quarter, bumper).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CameraId {
    T1,
    T2,
    T3,
    L1,
    L2,
    L3,
    L4,
    R1,
    R2,
    R3,
    R4,
}

impl CameraId {
    /// All eleven cameras in rig order.
    pub const ALL: [CameraId; 11] = [
        CameraId::T1,
        CameraId::T2,
        CameraId::T3,
        CameraId::L1,
        CameraId::L2,
        CameraId::L3,
        CameraId::L4,
        CameraId::R1,
        CameraId::R2,
        CameraId::R3,
        CameraId::R4,
    ];

    /// The eight side-facing cameras (default damage views).
    pub const SIDE: [CameraId; 8] = [
        CameraId::L1,
        CameraId::L2,
        CameraId::L3,
        CameraId::L4,
        CameraId::R1,
        CameraId::R2,
        CameraId::R3,
        CameraId::R4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CameraId::T1 => "T1",
            CameraId::T2 => "T2",
            CameraId::T3 => "T3",
            CameraId::L1 => "L1",
            CameraId::L2 => "L2",
            CameraId::L3 => "L3",
            CameraId::L4 => "L4",
            CameraId::R1 => "R1",
            CameraId::R2 => "R2",
            CameraId::R3 => "R3",
            CameraId::R4 => "R4",
        }
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CameraId {
    type Err = RoutingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CameraId::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RoutingError::UnknownCamera(s.to_string()))
    }
}

/// An inspection task label (e.g. `antenna`, `wheel_type`).
///
/// Labels are case-stable: they are compared exactly as written in the
/// routing config, never folded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(String);

impl TaskId {
    pub fn new(label: impl Into<String>) -> Self {
        TaskId(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId::new(s)
    }
}

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("unknown camera label `{0}`")]
    UnknownCamera(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("coverage requires a non-empty view set")]
    EmptyViews,
    #[error("routing config is invalid: {0}")]
    InvalidConfig(String),
    #[error("failed to read routing config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse routing config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// A single invariant violation found while validating a routing config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownCamera { task: String, label: String },
    DuplicateCamera { task: String, camera: String },
    EmptyAssignment { task: String },
    ChecklistTaskUnassigned { task: String },
    DuplicateChecklistTask { task: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownCamera { task, label } => {
                write!(f, "task `{task}` references unknown camera `{label}`")
            }
            Violation::DuplicateCamera { task, camera } => {
                write!(f, "task `{task}` lists camera `{camera}` more than once")
            }
            Violation::EmptyAssignment { task } => {
                write!(f, "task `{task}` has an empty view assignment")
            }
            Violation::ChecklistTaskUnassigned { task } => {
                write!(f, "checklist task `{task}` has no view assignment")
            }
            Violation::DuplicateChecklistTask { task } => {
                write!(f, "checklist lists task `{task}` more than once")
            }
        }
    }
}

/// Raw routing config as it appears on disk, before validation.
///
/// The file format is TOML: a `checklist` array plus an `[assignments]`
/// table mapping each task to an ordered camera list. Entry order is
/// preserved and is significant for report determinism.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub checklist: Vec<String>,
    pub assignments: IndexMap<String, Vec<String>>,
}

impl RoutingConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, RoutingError> {
        Ok(toml::from_str(s)?)
    }

    /// Checks every routing invariant and returns the violations found.
    /// Violations are data, not failures; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (task, cams) in &self.assignments {
            if cams.is_empty() {
                out.push(Violation::EmptyAssignment { task: task.clone() });
            }
            let mut seen = Vec::new();
            for label in cams {
                match CameraId::from_str(label) {
                    Ok(cam) => {
                        if seen.contains(&cam) {
                            out.push(Violation::DuplicateCamera {
                                task: task.clone(),
                                camera: label.clone(),
                            });
                        }
                        seen.push(cam);
                    }
                    Err(_) => out.push(Violation::UnknownCamera {
                        task: task.clone(),
                        label: label.clone(),
                    }),
                }
            }
        }
        let mut seen_tasks: Vec<&String> = Vec::new();
        for task in &self.checklist {
            if !self.assignments.contains_key(task) {
                out.push(Violation::ChecklistTaskUnassigned { task: task.clone() });
            }
            if seen_tasks.contains(&task) {
                out.push(Violation::DuplicateChecklistTask { task: task.clone() });
            }
            seen_tasks.push(task);
        }
        out
    }

    /// Validates and builds the immutable [`RoutingTable`].
    pub fn build(&self) -> Result<RoutingTable, RoutingError> {
        let violations = self.validate();
        if !violations.is_empty() {
            let msg = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(RoutingError::InvalidConfig(msg));
        }
        let mut assignments = IndexMap::new();
        for (task, cams) in &self.assignments {
            let views: Vec<CameraId> = cams
                .iter()
                .map(|l| CameraId::from_str(l))
                .collect::<Result<_, _>>()?;
            assignments.insert(TaskId::new(task.clone()), views);
        }
        let checklist = self.checklist.iter().map(TaskId::new).collect();
        Ok(RoutingTable {
            assignments,
            checklist,
        })
    }
}

/// Exact checklist coverage: how many checklist tasks have at least one
/// assigned view inside a given view subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub covered: usize,
    pub checklist_size: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.checklist_size as f64
    }

    /// Percentage rounded to one decimal, as rendered in ablation tables.
    pub fn percent(&self) -> f64 {
        (self.fraction() * 1000.0).round() / 10.0
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} ({:.1}%)",
            self.covered,
            self.checklist_size,
            self.percent()
        )
    }
}

/// Immutable task-to-view assignment table plus the variant checklist.
///
/// Built once from a validated [`RoutingConfig`]; safe for unrestricted
/// concurrent reads afterward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    assignments: IndexMap<TaskId, Vec<CameraId>>,
    checklist: Vec<TaskId>,
}

impl RoutingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RoutingError> {
        let text = std::fs::read_to_string(path)?;
        RoutingConfig::from_toml_str(&text)?.build()
    }

    /// All tasks with an assignment, in config order. This is the task
    /// vocabulary for the run.
    pub fn tasks(&self) -> impl Iterator<Item = &TaskId> {
        self.assignments.keys()
    }

    pub fn checklist(&self) -> &[TaskId] {
        &self.checklist
    }

    pub fn contains_task(&self, task: &TaskId) -> bool {
        self.assignments.contains_key(task)
    }

    /// The configured view set V_t for a task, in config order.
    pub fn views_for_task(&self, task: &TaskId) -> Result<&[CameraId], RoutingError> {
        self.assignments
            .get(task)
            .map(|v| v.as_slice())
            .ok_or_else(|| RoutingError::UnknownTask(task.to_string()))
    }

    /// Inverse index: every task whose assignment contains `view`, in
    /// config order. Empty result is legal.
    pub fn tasks_for_view(&self, view: CameraId) -> Vec<TaskId> {
        self.assignments
            .iter()
            .filter(|(_, cams)| cams.contains(&view))
            .map(|(t, _)| t.clone())
            .collect()
    }

    /// True when `camera` is one of the assigned views for `task`.
    pub fn is_routed(&self, task: &TaskId, camera: CameraId) -> bool {
        self.assignments
            .get(task)
            .map(|cams| cams.contains(&camera))
            .unwrap_or(false)
    }

    /// Fraction of checklist tasks observable from `views`.
    pub fn coverage_fraction(&self, views: &[CameraId]) -> Result<Coverage, RoutingError> {
        if views.is_empty() {
            return Err(RoutingError::EmptyViews);
        }
        let covered = self
            .checklist
            .iter()
            .filter(|t| {
                self.assignments
                    .get(*t)
                    .map(|cams| cams.iter().any(|c| views.contains(c)))
                    .unwrap_or(false)
            })
            .count();
        Ok(Coverage {
            covered,
            checklist_size: self.checklist.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_default() -> RoutingTable {
        RoutingConfig::from_toml_str(include_str!("../../../configs/table1.cfg"))
            .unwrap()
            .build()
            .unwrap()
    }

    fn table4() -> RoutingTable {
        RoutingConfig::from_toml_str(include_str!("../../../configs/table4.cfg"))
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn eleven_distinct_cameras_and_parse_rejects_others() {
        let mut seen: Vec<CameraId> = CameraId::ALL.to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 11);
        for c in CameraId::ALL {
            assert_eq!(CameraId::from_str(c.as_str()).unwrap(), c);
        }
        assert!(CameraId::from_str("T4").is_err());
        assert!(CameraId::from_str("t1").is_err());
        assert!(CameraId::from_str("").is_err());
    }

    #[test]
    fn views_for_task_matches_table1() {
        let table = paper_default();
        assert_eq!(
            table.views_for_task(&"antenna".into()).unwrap(),
            &[CameraId::T2, CameraId::T3]
        );
        assert_eq!(
            table.views_for_task(&"wheel_type".into()).unwrap(),
            &[CameraId::L1, CameraId::R1]
        );
    }

    #[test]
    fn views_for_task_single_entry_identity() {
        let cfg = RoutingConfig {
            checklist: vec!["t".into()],
            assignments: [("t".to_string(), vec!["T1".to_string()])]
                .into_iter()
                .collect(),
        };
        let table = cfg.build().unwrap();
        assert_eq!(table.views_for_task(&"t".into()).unwrap(), &[CameraId::T1]);
    }

    #[test]
    fn views_for_task_unknown_task_errors() {
        let table = paper_default();
        let err = table.views_for_task(&"spoiler".into()).unwrap_err();
        assert!(err.to_string().contains("spoiler"));
    }

    #[test]
    fn tasks_for_view_t2_matches_table1() {
        let table = paper_default();
        let tasks = table.tasks_for_view(CameraId::T2);
        assert_eq!(
            tasks,
            vec![
                TaskId::new("antenna"),
                TaskId::new("roof_rails"),
                TaskId::new("rear_wiper")
            ]
        );
    }

    #[test]
    fn tasks_for_view_empty_assignments() {
        let cfg = RoutingConfig {
            checklist: vec![],
            assignments: IndexMap::new(),
        };
        let table = cfg.build().unwrap();
        assert!(table.tasks_for_view(CameraId::T1).is_empty());
    }

    #[test]
    fn coverage_table4_single_views() {
        let table = table4();
        let c = table.coverage_fraction(&[CameraId::T2]).unwrap();
        assert_eq!((c.covered, c.checklist_size), (3, 7));
        assert!((c.percent() - 42.9).abs() < 1e-9);
    }

    #[test]
    fn coverage_full_rig_is_one() {
        for table in [paper_default(), table4()] {
            let c = table.coverage_fraction(&CameraId::ALL).unwrap();
            assert_eq!(c.covered, c.checklist_size);
            assert_eq!(c.fraction(), 1.0);
        }
    }

    #[test]
    fn coverage_rejects_empty_views() {
        let table = paper_default();
        assert!(matches!(
            table.coverage_fraction(&[]),
            Err(RoutingError::EmptyViews)
        ));
    }

    #[test]
    fn shipped_configs_have_no_violations() {
        for text in [
            include_str!("../../../configs/table1.cfg"),
            include_str!("../../../configs/table4.cfg"),
        ] {
            let cfg = RoutingConfig::from_toml_str(text).unwrap();
            assert!(cfg.validate().is_empty());
        }
    }

    #[test]
    fn unassigned_checklist_task_is_one_violation() {
        let cfg = RoutingConfig {
            checklist: vec!["ghost".into()],
            assignments: IndexMap::new(),
        };
        let violations = cfg.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(
            violations[0],
            Violation::ChecklistTaskUnassigned {
                task: "ghost".into()
            }
        );
    }

    // Independent re-check of each invariant, used as the fuzzing oracle.
    fn oracle_violations(cfg: &RoutingConfig) -> Vec<Violation> {
        let mut out = Vec::new();
        for (task, cams) in &cfg.assignments {
            if cams.is_empty() {
                out.push(Violation::EmptyAssignment { task: task.clone() });
            }
            for (i, label) in cams.iter().enumerate() {
                if CameraId::ALL.iter().all(|c| c.as_str() != label) {
                    out.push(Violation::UnknownCamera {
                        task: task.clone(),
                        label: label.clone(),
                    });
                } else if cams[..i].contains(label) {
                    out.push(Violation::DuplicateCamera {
                        task: task.clone(),
                        camera: label.clone(),
                    });
                }
            }
        }
        for (i, task) in cfg.checklist.iter().enumerate() {
            if !cfg.assignments.contains_key(task) {
                out.push(Violation::ChecklistTaskUnassigned { task: task.clone() });
            }
            if cfg.checklist[..i].contains(task) {
                out.push(Violation::DuplicateChecklistTask { task: task.clone() });
            }
        }
        out
    }

    fn camera_label() -> impl Strategy<Value = String> {
        prop_oneof![
            prop::sample::select(CameraId::ALL.to_vec()).prop_map(|c| c.as_str().to_string()),
            "[A-Z][0-9]".prop_map(|s| s),
        ]
    }

    fn arb_config() -> impl Strategy<Value = RoutingConfig> {
        let task = prop::sample::select(vec![
            "logo",
            "mascot",
            "antenna",
            "roof_rails",
            "rear_wiper",
            "wheel_type",
            "bumper",
        ]);
        let assignment = prop::collection::vec(camera_label(), 0..4);
        let assignments = prop::collection::vec((task.clone(), assignment), 0..6).prop_map(|v| {
            let mut m = IndexMap::new();
            for (t, cams) in v {
                m.entry(t.to_string()).or_insert(cams);
            }
            m
        });
        let checklist = prop::collection::vec(task, 0..6)
            .prop_map(|v| v.into_iter().map(str::to_string).collect());
        (checklist, assignments).prop_map(|(checklist, assignments)| RoutingConfig {
            checklist,
            assignments,
        })
    }

    proptest! {
        #[test]
        fn fuzzed_validation_matches_oracle(cfg in arb_config()) {
            let mut got = cfg.validate();
            let mut want = oracle_violations(&cfg);
            let key = |v: &Violation| format!("{v:?}");
            got.sort_by_key(key);
            want.sort_by_key(key);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn forward_and_inverse_index_agree(cfg in arb_config()) {
            if let Ok(table) = cfg.build() {
                for view in CameraId::ALL {
                    let tasks = table.tasks_for_view(view);
                    for t in table.tasks() {
                        let fwd = table.views_for_task(t).unwrap().contains(&view);
                        prop_assert_eq!(fwd, tasks.contains(t));
                    }
                }
            }
        }

        #[test]
        fn coverage_monotone_under_view_inclusion(
            cfg in arb_config(),
            mask in prop::collection::vec(any::<bool>(), 11),
        ) {
            if let Ok(table) = cfg.build() {
                let small: Vec<CameraId> = CameraId::ALL
                    .iter()
                    .zip(&mask)
                    .filter(|(_, keep)| **keep)
                    .map(|(c, _)| *c)
                    .collect();
                if !small.is_empty() && !table.checklist().is_empty() {
                    let c_small = table.coverage_fraction(&small).unwrap();
                    let c_all = table.coverage_fraction(&CameraId::ALL).unwrap();
                    prop_assert!(c_small.covered <= c_all.covered);
                }
            }
        }

        #[test]
        fn coverage_matches_brute_force(
            cfg in arb_config(),
            mask in prop::collection::vec(any::<bool>(), 11),
        ) {
            if let Ok(table) = cfg.build() {
                let views: Vec<CameraId> = CameraId::ALL
                    .iter()
                    .zip(&mask)
                    .filter(|(_, keep)| **keep)
                    .map(|(c, _)| *c)
                    .collect();
                if !views.is_empty() {
                    let got = table.coverage_fraction(&views).unwrap();
                    let mut covered = 0;
                    for t in table.checklist() {
                        let vt = table.views_for_task(t).unwrap();
                        if views.iter().any(|v| vt.contains(v)) {
                            covered += 1;
                        }
                    }
                    prop_assert_eq!(got.covered, covered);
                }
            }
        }
    }
}
