//! Per-vehicle orchestration under a virtual clock.
//!
//! The engine models the line as a discrete-event simulation: a trigger
//! fires, all cameras capture, the perception stages run logically in
//! parallel, the fusion barrier waits for every assigned view, and the rule
//! engine emits the report. All timestamps are virtual milliseconds; wall
//! clock never leaks into a trace.
//!
//! ```
//! use avi_core::pipeline::StageLatencyModel;
//!
//! // parallel perception: the slowest branch (segmentation) dominates,
//! // so end to end is 25 + 245 + 10 + 5 = 285 ms
//! let model = StageLatencyModel::from_toml_str(r#"
//!     capture_ms = 25.0
//!     branding_ms = 160.0
//!     variant_features_ms = 175.0
//!     segmentation_ms = 245.0
//!     classification_ms = 120.0
//!     ocr_ms = 150.0
//!     fusion_ms = 10.0
//!     rule_engine_ms = 5.0
//!     composition = "parallel"
//! "#).unwrap();
//! model.validate().unwrap();
//! ```

use indexmap::IndexMap;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::EvidenceFile;
use crate::fusion::{detect_features, EvidencePool, FusedScores, ThresholdTable};
use crate::manifest::{ManifestDb, Vin};
use crate::perception::derive_stream_seed;
use crate::routing::{CameraId, RoutingTable};
use crate::rules::{
    build_report, compute_discrepancies, gate_damages, AttributeCheck, Discrepancies,
    InspectionReport, VehicleContext,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("cadence must be positive")]
    BadCadence,
    #[error("failed to read latency config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse latency config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Light-beam trigger firing for one vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerEvent {
    /// Strictly increasing per run.
    pub seq: u64,
    pub timestamp_ms: u64,
    pub vehicle_id: String,
}

/// How concurrent perception stages compose into the critical path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageComposition {
    /// Stages overlap; the slowest one bounds the stage block.
    #[default]
    Parallel,
    /// Stages run back to back.
    Serial,
}

/// Simulated latency for each pipeline stage, in milliseconds.
///
/// `jitter` maps stage name to a uniform half-width: the sampled latency is
/// `base ± jitter`, never below zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatencyModel {
    pub capture_ms: f64,
    pub branding_ms: f64,
    pub variant_features_ms: f64,
    pub segmentation_ms: f64,
    pub classification_ms: f64,
    pub ocr_ms: f64,
    pub fusion_ms: f64,
    pub rule_engine_ms: f64,
    #[serde(default)]
    pub jitter: IndexMap<String, f64>,
    #[serde(default)]
    pub composition: StageComposition,
}

impl StageLatencyModel {
    pub fn zero() -> Self {
        StageLatencyModel {
            capture_ms: 0.0,
            branding_ms: 0.0,
            variant_features_ms: 0.0,
            segmentation_ms: 0.0,
            classification_ms: 0.0,
            ocr_ms: 0.0,
            fusion_ms: 0.0,
            rule_engine_ms: 0.0,
            jitter: IndexMap::new(),
            composition: StageComposition::Parallel,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PipelineError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.capture_ms,
            self.branding_ms,
            self.variant_features_ms,
            self.segmentation_ms,
            self.classification_ms,
            self.ocr_ms,
            self.fusion_ms,
            self.rule_engine_ms,
        ];
        for v in all.into_iter().chain(self.jitter.values().copied()) {
            if v < 0.0 || !v.is_finite() {
                return Err(format!("latency value {v} must be a finite non-negative number"));
            }
        }
        Ok(())
    }

    fn sample(&self, stage: &str, base: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.jitter.get(stage).copied().unwrap_or(0.0) {
            j if j > 0.0 => (base + rng.gen_range(-j..=j)).max(0.0),
            _ => base,
        }
    }
}

/// One executed stage interval on the virtual timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInterval {
    pub stage: String,
    pub start_ms: f64,
    pub end_ms: f64,
}

/// Virtual-time record for one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrace {
    pub vehicle_id: String,
    pub seq: u64,
    pub trigger_ms: f64,
    pub stages: Vec<StageInterval>,
    pub verdict_ms: f64,
    pub e2e_ms: f64,
}

/// Aggregate trace for a streamed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub vehicles: Vec<VehicleTrace>,
    pub cadence_ms: Option<f64>,
    pub elapsed_ms: f64,
    pub throughput_per_min: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl RunTrace {
    /// Delimited export, one stage interval per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vehicle_id,seq,stage,start_ms,end_ms\n");
        for v in &self.vehicles {
            for s in &v.stages {
                out.push_str(&format!(
                    "{},{},{},{:.3},{:.3}\n",
                    v.vehicle_id, v.seq, s.stage, s.start_ms, s.end_ms
                ));
            }
        }
        out
    }
}

/// Latency quantile summary, recomputable from the raw trace rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub per_stage_mean_ms: IndexMap<String, f64>,
}

/// Everything `run_vehicle` needs besides the evidence itself. Shared data
/// is borrowed immutably, so vehicles can be processed concurrently.
pub struct PipelineConfig<'a> {
    pub routing: &'a RoutingTable,
    pub thresholds: &'a ThresholdTable,
    pub manifest: &'a ManifestDb,
    pub latency: &'a StageLatencyModel,
    pub damage_min_score: f64,
    pub damage_min_area_fraction: f64,
    /// Cameras active in this run; `None` means the full rig. Ablation
    /// modes restrict this set.
    pub active_views: Option<Vec<CameraId>>,
    /// When false the segmentation branch is disabled and damage evidence
    /// is ignored.
    pub segmentation_enabled: bool,
    /// Seed for latency jitter sampling.
    pub seed: u64,
}

impl<'a> PipelineConfig<'a> {
    pub fn new(
        routing: &'a RoutingTable,
        thresholds: &'a ThresholdTable,
        manifest: &'a ManifestDb,
        latency: &'a StageLatencyModel,
    ) -> Self {
        PipelineConfig {
            routing,
            thresholds,
            manifest,
            latency,
            damage_min_score: 0.5,
            damage_min_area_fraction: 0.0005,
            active_views: None,
            segmentation_enabled: true,
            seed: 0,
        }
    }

    fn view_active(&self, cam: CameraId) -> bool {
        self.active_views
            .as_ref()
            .map(|v| v.contains(&cam))
            .unwrap_or(true)
    }
}

/// Runs the full per-vehicle flow and returns the report plus its virtual
/// timeline.
pub fn run_vehicle(
    trigger: &TriggerEvent,
    evidence: &EvidenceFile,
    cfg: &PipelineConfig<'_>,
) -> (InspectionReport, VehicleTrace) {
    let mut rng = ChaCha8Rng::from_seed(derive_stream_seed(
        cfg.seed,
        &trigger.vehicle_id,
        "latency",
    ));
    let t0 = trigger.timestamp_ms as f64;
    let lat = cfg.latency;
    let mut stages = Vec::new();

    let capture = lat.sample("capture", lat.capture_ms, &mut rng);
    stages.push(StageInterval {
        stage: "capture".into(),
        start_ms: t0,
        end_ms: t0 + capture,
    });
    let ctx = VehicleContext {
        vehicle_id: trigger.vehicle_id.clone(),
        vin: evidence.vin.clone(),
        trigger_seq: trigger.seq,
        trigger_timestamp_ms: trigger.timestamp_ms,
    };

    // capture gate: a missing frame aborts perception
    if !evidence.snapshot_complete() {
        let rule = lat.sample("rule_engine", lat.rule_engine_ms, &mut rng);
        let start = t0 + capture;
        stages.push(StageInterval {
            stage: "rule_engine".into(),
            start_ms: start,
            end_ms: start + rule,
        });
        let report = fail_report(&ctx, "capture incomplete", &stages, t0);
        let trace = close_trace(trigger, stages, t0);
        return (report, trace);
    }

    let spec = match Vin::parse(&evidence.vin)
        .ok()
        .and_then(|vin| cfg.manifest.lookup(&vin).ok())
    {
        Some(spec) => spec.clone(),
        None => {
            let rule = lat.sample("rule_engine", lat.rule_engine_ms, &mut rng);
            let start = t0 + capture;
            stages.push(StageInterval {
                stage: "rule_engine".into(),
                start_ms: start,
                end_ms: start + rule,
            });
            let report = fail_report(&ctx, "manifest missing", &stages, t0);
            let trace = close_trace(trigger, stages, t0);
            return (report, trace);
        }
    };

    // perception block: logically concurrent stages after capture
    let p_start = t0 + capture;
    let mut block: Vec<(&str, f64)> = vec![
        ("branding", lat.sample("branding", lat.branding_ms, &mut rng)),
        (
            "variant_features",
            lat.sample("variant_features", lat.variant_features_ms, &mut rng),
        ),
        (
            "classification",
            lat.sample("classification", lat.classification_ms, &mut rng),
        ),
        ("ocr", lat.sample("ocr", lat.ocr_ms, &mut rng)),
    ];
    if cfg.segmentation_enabled {
        block.push((
            "segmentation",
            lat.sample("segmentation", lat.segmentation_ms, &mut rng),
        ));
    }
    let block_span = match lat.composition {
        StageComposition::Parallel => block.iter().map(|(_, d)| *d).fold(0.0, f64::max),
        StageComposition::Serial => block.iter().map(|(_, d)| *d).sum(),
    };
    let mut cursor = p_start;
    for (name, dur) in &block {
        let start = match lat.composition {
            StageComposition::Parallel => p_start,
            StageComposition::Serial => cursor,
        };
        stages.push(StageInterval {
            stage: (*name).into(),
            start_ms: start,
            end_ms: start + dur,
        });
        cursor = start + dur;
    }

    // fusion barrier: all assigned views observed, then max-pool
    let mut pool = EvidencePool::new();
    for det in &evidence.detections {
        if cfg.view_active(det.camera) {
            pool.insert(det.clone(), cfg.routing);
        }
    }
    let (fused, detected) = detect_features(&pool, cfg.routing, cfg.thresholds);
    let f_start = p_start + block_span;
    let fusion = lat.sample("fusion", lat.fusion_ms, &mut rng);
    stages.push(StageInterval {
        stage: "fusion".into(),
        start_ms: f_start,
        end_ms: f_start + fusion,
    });

    // rule engine
    let discrepancies = compute_discrepancies(&spec.features, &detected, cfg.routing)
        .unwrap_or_else(|_| Discrepancies {
            missing: spec.features.clone(),
            extra: vec![],
        });
    let damages = if cfg.segmentation_enabled {
        let visible: Vec<_> = evidence
            .damages
            .iter()
            .filter(|d| cfg.view_active(d.camera))
            .cloned()
            .collect();
        gate_damages(&visible, cfg.damage_min_score, cfg.damage_min_area_fraction)
    } else {
        vec![]
    };
    let variant_check = evidence
        .ocr_variant
        .as_ref()
        .map(|observed| AttributeCheck::new(spec.variant.clone(), observed.clone()));
    let powertrain_check = evidence
        .powertrain_pred
        .map(|observed| AttributeCheck::new(spec.powertrain.as_str(), observed.as_str()));

    let r_start = f_start + fusion;
    let rule = lat.sample("rule_engine", lat.rule_engine_ms, &mut rng);
    stages.push(StageInterval {
        stage: "rule_engine".into(),
        start_ms: r_start,
        end_ms: r_start + rule,
    });

    let stage_latency: IndexMap<String, f64> = stages
        .iter()
        .map(|s| (s.stage.clone(), s.end_ms - s.start_ms))
        .collect();
    let total = r_start + rule - t0;
    let report = build_report(
        &ctx,
        &fused,
        discrepancies,
        damages,
        variant_check,
        powertrain_check,
        stage_latency,
        total,
    );
    let trace = close_trace(trigger, stages, t0);
    (report, trace)
}

fn fail_report(
    ctx: &VehicleContext,
    reason: &str,
    stages: &[StageInterval],
    t0: f64,
) -> InspectionReport {
    let stage_latency: IndexMap<String, f64> = stages
        .iter()
        .map(|s| (s.stage.clone(), s.end_ms - s.start_ms))
        .collect();
    let total = stages.last().map(|s| s.end_ms - t0).unwrap_or(0.0);
    let mut report = build_report(
        ctx,
        &FusedScores::default(),
        Discrepancies::default(),
        vec![],
        None,
        None,
        stage_latency,
        total,
    );
    report.verdict = crate::rules::Verdict::Fail;
    report.reason = Some(reason.to_string());
    report
}

fn close_trace(trigger: &TriggerEvent, stages: Vec<StageInterval>, t0: f64) -> VehicleTrace {
    let verdict_ms = stages.last().map(|s| s.end_ms).unwrap_or(t0);
    VehicleTrace {
        vehicle_id: trigger.vehicle_id.clone(),
        seq: trigger.seq,
        trigger_ms: t0,
        stages,
        verdict_ms,
        e2e_ms: verdict_ms - t0,
    }
}

/// Streams a population through the line at a fixed trigger cadence.
///
/// Vehicles overlap (the next trigger can fire before the previous verdict),
/// but reports are emitted in trigger order. Elapsed time for throughput is
/// the stream's total occupancy: `n` cadence slots, extended by any
/// processing tail; a single vehicle degenerates to its own end-to-end
/// latency.
pub fn run_stream(
    evidences: &[EvidenceFile],
    cadence_ms: f64,
    cfg: &PipelineConfig<'_>,
) -> Result<(Vec<InspectionReport>, RunTrace), PipelineError> {
    if cadence_ms <= 0.0 {
        return Err(PipelineError::BadCadence);
    }
    let mut reports = Vec::with_capacity(evidences.len());
    let mut vehicles = Vec::with_capacity(evidences.len());
    for (i, ev) in evidences.iter().enumerate() {
        let trigger = TriggerEvent {
            seq: i as u64 + 1,
            timestamp_ms: (i as f64 * cadence_ms) as u64,
            vehicle_id: ev.vehicle_id.clone(),
        };
        let (report, trace) = run_vehicle(&trigger, ev, cfg);
        reports.push(report);
        vehicles.push(trace);
    }
    let trace = finish_trace(vehicles, Some(cadence_ms));
    Ok((reports, trace))
}

fn finish_trace(vehicles: Vec<VehicleTrace>, cadence_ms: Option<f64>) -> RunTrace {
    let n = vehicles.len();
    let last_verdict = vehicles.iter().map(|v| v.verdict_ms).fold(0.0, f64::max);
    let elapsed_ms = if n <= 1 {
        vehicles.first().map(|v| v.e2e_ms).unwrap_or(0.0)
    } else {
        match cadence_ms {
            Some(c) => (n as f64 * c).max(last_verdict),
            None => last_verdict,
        }
    };
    let throughput_per_min = if elapsed_ms > 0.0 {
        n as f64 / (elapsed_ms / 60_000.0)
    } else {
        0.0
    };
    let mut e2e: Vec<f64> = vehicles.iter().map(|v| v.e2e_ms).collect();
    e2e.sort_by(f64::total_cmp);
    RunTrace {
        p50_ms: nearest_rank(&e2e, 0.50),
        p95_ms: nearest_rank(&e2e, 0.95),
        vehicles,
        cadence_ms,
        elapsed_ms,
        throughput_per_min,
    }
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Recomputes quantiles and per-stage means from the raw trace rows.
pub fn measure_latency_budget(trace: &RunTrace) -> Result<LatencySummary, PipelineError> {
    if trace.vehicles.is_empty() {
        return Err(PipelineError::EmptyTrace);
    }
    let mut e2e: Vec<f64> = trace.vehicles.iter().map(|v| v.e2e_ms).collect();
    e2e.sort_by(f64::total_cmp);
    let mut sums: IndexMap<String, (f64, usize)> = IndexMap::new();
    for v in &trace.vehicles {
        for s in &v.stages {
            let entry = sums.entry(s.stage.clone()).or_insert((0.0, 0));
            entry.0 += s.end_ms - s.start_ms;
            entry.1 += 1;
        }
    }
    Ok(LatencySummary {
        p50_ms: nearest_rank(&e2e, 0.50),
        p95_ms: nearest_rank(&e2e, 0.95),
        max_ms: *e2e.last().unwrap(),
        per_stage_mean_ms: sums
            .into_iter()
            .map(|(k, (sum, n))| (k, sum / n as f64))
            .collect(),
    })
}
