//! On-disk evidence snapshot for one vehicle.
//!
//! One JSON document per vehicle: identity, trigger time, native camera
//! resolution, the raw detections, segmented damage instances, and the
//! optional classifier/OCR outputs. Bounding boxes are normalized, so the
//! schema is resolution-independent; the native resolution is recorded for
//! traceability only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Detection, EvidencePool};
use crate::manifest::Powertrain;
use crate::routing::{CameraId, RoutingTable};
use crate::rules::DamageInstance;

#[derive(Debug, Error)]
pub enum EvidenceFileError {
    #[error("failed to read evidence file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse evidence (line {line}, column {column}): {source}")]
    Parse {
        line: usize,
        column: usize,
        source: serde_json::Error,
    },
}

/// Native sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        // rig cameras are 4K UHD
        Resolution {
            width: 3840,
            height: 2160,
        }
    }
}

/// Complete evidence snapshot for one triggered vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceFile {
    pub vehicle_id: String,
    pub vin: String,
    pub trigger_timestamp_ms: u64,
    #[serde(default)]
    pub resolution: Resolution,
    /// Cameras that delivered a frame for this trigger. Absent means the
    /// full rig captured; an explicit partial list marks an incomplete
    /// snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras_present: Option<Vec<CameraId>>,
    pub detections: Vec<Detection>,
    pub damages: Vec<DamageInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powertrain_pred: Option<Powertrain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_variant: Option<String>,
}

impl EvidenceFile {
    pub fn from_json(text: &str) -> Result<Self, EvidenceFileError> {
        serde_json::from_str(text).map_err(|source| EvidenceFileError::Parse {
            line: source.line(),
            column: source.column(),
            source,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, EvidenceFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("evidence serializes")
    }

    /// True when every rig camera delivered a frame.
    pub fn snapshot_complete(&self) -> bool {
        match &self.cameras_present {
            None => true,
            Some(present) => CameraId::ALL.iter().all(|c| present.contains(c)),
        }
    }

    /// Cameras missing from the snapshot, rig order.
    pub fn missing_cameras(&self) -> Vec<CameraId> {
        match &self.cameras_present {
            None => vec![],
            Some(present) => CameraId::ALL
                .iter()
                .copied()
                .filter(|c| !present.contains(c))
                .collect(),
        }
    }

    /// Loads the detections into an evidence pool, enforcing routing.
    /// Returns the pool; rejected detections are counted on the pool.
    pub fn into_pool(&self, table: &RoutingTable) -> EvidencePool {
        let mut pool = EvidencePool::new();
        for det in &self.detections {
            pool.insert(det.clone(), table);
        }
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::BoundingBox;
    use crate::routing::RoutingConfig;

    fn table() -> RoutingTable {
        RoutingConfig::from_toml_str(include_str!("../../../configs/table1.cfg"))
            .unwrap()
            .build()
            .unwrap()
    }

    fn sample() -> EvidenceFile {
        EvidenceFile {
            vehicle_id: "veh-0001".into(),
            vin: "WAUZZZ8V5KA000001".into(),
            trigger_timestamp_ms: 1_000,
            resolution: Resolution::default(),
            cameras_present: None,
            detections: vec![Detection::new(
                CameraId::T2,
                "antenna".into(),
                BoundingBox::new(0.4, 0.1, 0.1, 0.2).unwrap(),
                0.93,
            )
            .unwrap()],
            damages: vec![],
            powertrain_pred: Some(Powertrain::Ice),
            ocr_variant: Some("GT Line".into()),
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let e = sample();
        let json = e.to_json();
        let parsed = EvidenceFile::from_json(&json).unwrap();
        assert_eq!(parsed, e);
        assert_eq!(parsed.to_json(), json);
    }

    #[test]
    fn parse_error_carries_position() {
        let err = EvidenceFile::from_json("{ broken").unwrap_err();
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn snapshot_completeness() {
        let mut e = sample();
        assert!(e.snapshot_complete());
        e.cameras_present = Some(CameraId::ALL.to_vec());
        assert!(e.snapshot_complete());
        e.cameras_present = Some(vec![CameraId::T1, CameraId::T2]);
        assert!(!e.snapshot_complete());
        assert!(e.missing_cameras().contains(&CameraId::L1));
    }

    #[test]
    fn into_pool_enforces_routing() {
        let mut e = sample();
        e.detections.push(
            Detection::new(
                CameraId::L3, // not a view for antenna
                "antenna".into(),
                BoundingBox::new(0.1, 0.1, 0.1, 0.1).unwrap(),
                0.99,
            )
            .unwrap(),
        );
        let pool = e.into_pool(&table());
        assert_eq!(pool.detection_count(), 1);
        assert_eq!(pool.rejected(), 1);
    }
}
