//! Variant-aware vehicle inspection engine.
//!
//! An end-of-line inspection station photographs each vehicle from eleven
//! fixed cameras, detects variant-defining features and surface damage in
//! the frames, fuses the per-view detections into one score per checklist
//! task, and compares the detected feature set against the vehicle's
//! VIN-keyed build manifest. The verdict is PASS only when nothing expected
//! is missing, nothing unexpected is present, and no damage survives the
//! confidence gate.
//!
//! The crate is organized around that flow:
//!
//! * [`routing`] — camera vocabulary and the task-to-camera routing table.
//! * [`fusion`] — evidence pools and cross-view max-pool score fusion.
//! * [`rules`] — set-difference discrepancy logic, damage gating, reports.
//! * [`manifest`] — VINs, variant specs, and the JSONL manifest database.
//! * [`evidence`] — the on-disk evidence snapshot format.
//! * [`orientation`] — binary-mask principal-axis alignment checks.
//! * [`perception`] — deterministic synthetic perception backends.
//! * [`pipeline`] — virtual-time latency and throughput simulation.
//! * [`metrics`] — detection/segmentation metrics and ablation tables.
//! * [`sim`] — synthetic fleet generation and end-to-end runs.
//!
//! ```
//! use avi_core::fusion::{BoundingBox, Detection, EvidencePool, ThresholdTable};
//! use avi_core::routing::{CameraId, RoutingConfig};
//!
//! let table = RoutingConfig::from_toml_str(r#"
//!     checklist = ["antenna"]
//!     [assignments]
//!     antenna = ["T2", "T3"]
//! "#).unwrap().build().unwrap();
//!
//! let bbox = BoundingBox::new(0.4, 0.4, 0.1, 0.1).unwrap();
//! let mut pool = EvidencePool::new();
//! pool.insert(Detection::new(CameraId::T2, "antenna".into(), bbox.clone(), 0.62).unwrap(), &table);
//! pool.insert(Detection::new(CameraId::T3, "antenna".into(), bbox, 0.91).unwrap(), &table);
//!
//! let (scores, detected) = avi_core::fusion::detect_features(
//!     &pool, &table, &ThresholdTable::default());
//! assert_eq!(scores.get(&"antenna".into()), Some(0.91));
//! assert_eq!(detected.len(), 1);
//! ```

pub mod evidence;
pub mod fusion;
pub mod manifest;
pub mod metrics;
pub mod orientation;
pub mod perception;
pub mod pipeline;
pub mod routing;
pub mod rules;
pub mod sim;
