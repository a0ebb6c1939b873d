//! Pluggable perception interface and deterministic synthetic backends.
//!
//! Real deployments plug detector backends in behind [`PerceptionBackend`];
//! the simulation harness substitutes seeded stochastic stubs. Every stub is
//! a pure function of (inputs, seed): the per-vehicle stream seed is
//! `SHA-256(master_seed_le || vehicle_id || label)`, so vehicles can be
//! synthesized concurrently and in any order without changing the output.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evidence::{EvidenceFile, Resolution};
use crate::fusion::{BoundingBox, Detection};
use crate::manifest::{Powertrain, Vin};
use crate::routing::{RoutingTable, TaskId};
use crate::rules::DamageInstance;

/// The contract a real model backend must satisfy: given a frame reference
/// and the tasks routed to that view, produce detections and damage masks.
pub trait PerceptionBackend {
    fn infer(
        &self,
        frame: &FrameRef,
        tasks: &[TaskId],
    ) -> (Vec<Detection>, Vec<DamageInstance>);
}

/// Reference to one captured frame (no pixel data in the engine).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub vehicle_id: String,
    pub camera: crate::routing::CameraId,
    pub trigger_seq: u64,
}

/// Simulation oracle: the vehicle as actually built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthVehicle {
    pub vehicle_id: String,
    pub vin: Vin,
    pub true_features: Vec<TaskId>,
    pub true_damages: Vec<DamageInstance>,
    pub powertrain: Powertrain,
    pub variant_name: String,
}

/// Location/spread score family, truncated to [0,1].
///
/// Samples are drawn from Normal(mean, spread) and clamped into [0,1];
/// spread 0 degenerates to the constant `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDist {
    pub mean: f64,
    pub spread: f64,
}

impl ScoreDist {
    pub fn constant(v: f64) -> Self {
        ScoreDist {
            mean: v,
            spread: 0.0,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.spread == 0.0 {
            return self.mean.clamp(0.0, 1.0);
        }
        let n = Normal::new(self.mean, self.spread).expect("spread >= 0");
        n.sample(rng).clamp(0.0, 1.0)
    }
}

/// Stochastic model of the synthetic detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Probability that a true feature is detected on each assigned view.
    #[serde(default = "one")]
    pub default_tpr: f64,
    #[serde(default)]
    pub tpr: indexmap::IndexMap<TaskId, f64>,
    /// Probability of a false detection per (task, view) pair.
    #[serde(default)]
    pub default_fpr: f64,
    #[serde(default)]
    pub fpr: indexmap::IndexMap<TaskId, f64>,
    #[serde(default = "default_hit_score")]
    pub hit_score: ScoreDist,
    #[serde(default = "default_false_score")]
    pub false_score: ScoreDist,
    /// Probability that a true damage instance is dropped.
    #[serde(default)]
    pub damage_miss_rate: f64,
    /// Master seed for the whole synthetic run.
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_hit_score() -> ScoreDist {
    ScoreDist {
        mean: 0.9,
        spread: 0.05,
    }
}

fn default_false_score() -> ScoreDist {
    ScoreDist {
        mean: 0.35,
        spread: 0.15,
    }
}

impl NoiseProfile {
    /// Noise-free profile: every true feature detected everywhere with
    /// score 1.0, no false alarms, no damage misses.
    pub fn noise_free(seed: u64) -> Self {
        NoiseProfile {
            default_tpr: 1.0,
            tpr: indexmap::IndexMap::new(),
            default_fpr: 0.0,
            fpr: indexmap::IndexMap::new(),
            hit_score: ScoreDist::constant(1.0),
            false_score: ScoreDist::constant(0.0),
            damage_miss_rate: 0.0,
            seed,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn tpr_for(&self, task: &TaskId) -> f64 {
        self.tpr.get(task).copied().unwrap_or(self.default_tpr)
    }

    pub fn fpr_for(&self, task: &TaskId) -> f64 {
        self.fpr.get(task).copied().unwrap_or(self.default_fpr)
    }

    pub fn validate(&self) -> Result<(), String> {
        let rates = [self.default_tpr, self.default_fpr, self.damage_miss_rate]
            .into_iter()
            .chain(self.tpr.values().copied())
            .chain(self.fpr.values().copied());
        for r in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("rate {r} outside [0,1]"));
            }
        }
        if self.hit_score.spread < 0.0 || self.false_score.spread < 0.0 {
            return Err("score spread must be >= 0".into());
        }
        Ok(())
    }
}

/// Derives a deterministic per-vehicle stream seed from the master seed.
pub fn derive_stream_seed(master_seed: u64, vehicle_id: &str, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(vehicle_id.as_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

fn stream_rng(master_seed: u64, vehicle_id: &str, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_stream_seed(master_seed, vehicle_id, label))
}

/// Synthesizes a noisy evidence snapshot for one vehicle.
///
/// For each true feature `t` and each assigned view `v`, a hit is emitted
/// with probability `TPR_t`; independently, for every (task, view) pair a
/// false alarm is emitted with probability `FPR_t`. True damages are
/// dropped with the damage miss rate. Output is fully determined by
/// `(vehicle, routing, noise.seed)`.
pub fn synthesize_evidence(
    vehicle: &GroundTruthVehicle,
    routing: &RoutingTable,
    noise: &NoiseProfile,
) -> EvidenceFile {
    let mut rng = stream_rng(noise.seed, &vehicle.vehicle_id, "evidence");
    let mut detections = Vec::new();
    for task in routing.tasks() {
        let views = routing.views_for_task(task).expect("task from table");
        let is_true = vehicle.true_features.contains(task);
        for &view in views {
            if is_true && rng.gen_bool(noise.tpr_for(task)) {
                let score = noise.hit_score.sample(&mut rng);
                detections.push(make_detection(view, task, score, &mut rng));
            }
            if rng.gen_bool(noise.fpr_for(task)) {
                let score = noise.false_score.sample(&mut rng);
                detections.push(make_detection(view, task, score, &mut rng));
            }
        }
    }
    let mut damages = Vec::new();
    for d in &vehicle.true_damages {
        if !rng.gen_bool(noise.damage_miss_rate) {
            damages.push(d.clone());
        }
    }
    EvidenceFile {
        vehicle_id: vehicle.vehicle_id.clone(),
        vin: vehicle.vin.to_string(),
        trigger_timestamp_ms: 0,
        resolution: Resolution::default(),
        cameras_present: None,
        detections,
        damages,
        powertrain_pred: None,
        ocr_variant: None,
    }
}

fn make_detection(
    view: crate::routing::CameraId,
    task: &TaskId,
    score: f64,
    rng: &mut impl Rng,
) -> Detection {
    let w = rng.gen_range(0.05..0.3);
    let h = rng.gen_range(0.05..0.3);
    let x = rng.gen_range(0.0..(1.0 - w));
    let y = rng.gen_range(0.0..(1.0 - h));
    Detection::new(view, task.clone(), BoundingBox::new(x, y, w, h).unwrap(), score)
        .expect("generated detection is valid")
}

/// ICE/EV classifier stub: returns the true powertrain, flipped with
/// probability `error_rate`.
pub fn classify_powertrain_stub(
    vehicle: &GroundTruthVehicle,
    error_rate: f64,
    seed: u64,
) -> Powertrain {
    let mut rng = stream_rng(seed, &vehicle.vehicle_id, "powertrain");
    if rng.gen_bool(error_rate) {
        vehicle.powertrain.flipped()
    } else {
        vehicle.powertrain
    }
}

/// OCR stub: returns the true variant name, or with probability
/// `corruption_rate` the name with one character substituted.
pub fn ocr_variant_stub(vehicle: &GroundTruthVehicle, corruption_rate: f64, seed: u64) -> String {
    let mut rng = stream_rng(seed, &vehicle.vehicle_id, "ocr");
    let name = &vehicle.variant_name;
    if name.is_empty() || !rng.gen_bool(corruption_rate) {
        return name.clone();
    }
    let chars: Vec<char> = name.chars().collect();
    let idx = rng.gen_range(0..chars.len());
    let mut corrupted = chars.clone();
    loop {
        let replacement = char::from(rng.gen_range(b'A'..=b'Z'));
        if replacement != chars[idx] {
            corrupted[idx] = replacement;
            break;
        }
    }
    corrupted.into_iter().collect()
}
