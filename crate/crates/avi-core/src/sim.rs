//! Desk-scale simulation harness: synthetic fleet generation, streamed
//! pipeline runs, and ablation mode execution.
//!
//! A population is generated deterministically from a seed: each vehicle
//! gets a variant drawn from a small template set, an optional build error
//! (a feature deviating from its manifest), and optional surface damage.
//! The manifest is generated alongside, so the ground-truth verdict of every
//! vehicle is known exactly.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evidence::EvidenceFile;
use crate::fusion::ThresholdTable;
use crate::manifest::{ManifestDb, Powertrain, VariantSpec, Vin};
use crate::metrics::{system_accuracy, AblationMode, ModeResult, VerdictPair};
use crate::perception::{
    classify_powertrain_stub, ocr_variant_stub, synthesize_evidence, GroundTruthVehicle,
    NoiseProfile,
};
use crate::pipeline::{run_stream, PipelineConfig, RunTrace, StageLatencyModel};
use crate::routing::{CameraId, RoutingTable, TaskId};
use crate::rules::{DamageInstance, DamageKind, InspectionReport, Verdict};

/// Knobs for synthetic fleet generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    pub seed: u64,
    /// Probability that a vehicle's build deviates from its manifest by one
    /// feature (dropped or added).
    #[serde(default = "default_build_error_rate")]
    pub build_error_rate: f64,
    /// Probability that a vehicle carries one or two true damages.
    #[serde(default = "default_damage_rate")]
    pub damage_rate: f64,
}

fn default_build_error_rate() -> f64 {
    0.1
}

fn default_damage_rate() -> f64 {
    0.15
}

/// Generated fleet plus its manifest.
#[derive(Debug, Clone)]
pub struct Population {
    pub vehicles: Vec<GroundTruthVehicle>,
    pub manifest: ManifestDb,
    /// Identity of this population: seed and size. Ablation modes must run
    /// on the same fingerprint.
    pub fingerprint: String,
}

struct VariantTemplate {
    model: &'static str,
    name: &'static str,
    powertrain: Powertrain,
    /// Indices into the checklist to drop from the full feature set.
    drop: &'static [usize],
}

const TEMPLATES: [VariantTemplate; 4] = [
    VariantTemplate {
        model: "M1",
        name: "Base",
        powertrain: Powertrain::Ice,
        drop: &[3, 4],
    },
    VariantTemplate {
        model: "M1",
        name: "GT Line",
        powertrain: Powertrain::Ice,
        drop: &[],
    },
    VariantTemplate {
        model: "M2",
        name: "Comfort",
        powertrain: Powertrain::Ice,
        drop: &[4],
    },
    VariantTemplate {
        model: "M2",
        name: "E-Drive",
        powertrain: Powertrain::Ev,
        drop: &[2],
    },
];

/// Deterministically generates a fleet and its manifest from the seed.
pub fn generate_population(cfg: &PopulationConfig, routing: &RoutingTable) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let checklist: Vec<TaskId> = routing.checklist().to_vec();
    let mut vehicles = Vec::with_capacity(cfg.size);
    let mut specs = Vec::with_capacity(cfg.size);
    for i in 0..cfg.size {
        let template = &TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
        let expected: Vec<TaskId> = checklist
            .iter()
            .enumerate()
            .filter(|(idx, _)| !template.drop.contains(idx))
            .map(|(_, t)| t.clone())
            .collect();
        let vin = Vin::parse(&format!("AV1{i:014}")).expect("generated VIN is well-formed");
        specs.push(VariantSpec {
            vin: vin.clone(),
            model: template.model.into(),
            variant: template.name.into(),
            powertrain: template.powertrain,
            features: expected.clone(),
            metadata: Default::default(),
        });

        // build errors make the as-built feature set deviate from the manifest
        let mut true_features = expected.clone();
        if rng.gen_bool(cfg.build_error_rate) {
            let missing: Vec<TaskId> = checklist
                .iter()
                .filter(|t| !true_features.contains(t))
                .cloned()
                .collect();
            let can_add = !missing.is_empty();
            if can_add && (true_features.is_empty() || rng.gen_bool(0.5)) {
                true_features.push(missing[rng.gen_range(0..missing.len())].clone());
            } else if !true_features.is_empty() {
                let idx = rng.gen_range(0..true_features.len());
                true_features.remove(idx);
            }
        }

        let mut true_damages = Vec::new();
        if rng.gen_bool(cfg.damage_rate) {
            for _ in 0..rng.gen_range(1..=2) {
                true_damages.push(random_damage(&mut rng));
            }
        }

        vehicles.push(GroundTruthVehicle {
            vehicle_id: format!("veh-{i:05}"),
            vin,
            true_features,
            true_damages,
            powertrain: template.powertrain,
            variant_name: template.name.into(),
        });
    }
    let manifest = ManifestDb::from_records(specs).expect("generated manifest is valid");
    Population {
        vehicles,
        manifest,
        fingerprint: format!("seed={};size={}", cfg.seed, cfg.size),
    }
}

fn random_damage(rng: &mut ChaCha8Rng) -> DamageInstance {
    let camera = CameraId::SIDE[rng.gen_range(0..CameraId::SIDE.len())];
    let kind = DamageKind::ALL[rng.gen_range(0..DamageKind::ALL.len())];
    let w = rng.gen_range(0.03..0.08);
    let h = rng.gen_range(0.03..0.08);
    let x = rng.gen_range(0.1..0.9 - w);
    let y = rng.gen_range(0.1..0.9 - h);
    DamageInstance {
        camera,
        kind,
        polygon: vec![[x, y], [x + w, y], [x + w, y + h], [x, y + h]],
        score: rng.gen_range(0.75..0.99),
        area_fraction: w * h,
    }
}

/// Ground truth: PASS iff the as-built feature set equals the manifest and
/// the vehicle carries no true damage.
pub fn ground_truth_verdict(vehicle: &GroundTruthVehicle, manifest: &ManifestDb) -> Verdict {
    let expected = match manifest.expected_features(&vehicle.vin) {
        Ok(f) => f,
        Err(_) => return Verdict::Fail,
    };
    let same_set = expected.len() == vehicle.true_features.len()
        && expected.iter().all(|t| vehicle.true_features.contains(t));
    if same_set && vehicle.true_damages.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Per-run simulation options.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub cadence_ms: f64,
    pub noise: NoiseProfile,
    /// `None` runs the full system.
    pub mode: Option<AblationMode>,
    pub classifier_error_rate: f64,
    pub ocr_corruption_rate: f64,
    /// Attach the classifier/OCR stub outputs to the evidence so the rule
    /// engine checks them.
    pub attach_checks: bool,
}

impl SimOptions {
    pub fn noise_free(cadence_ms: f64, seed: u64) -> Self {
        SimOptions {
            cadence_ms,
            noise: NoiseProfile::noise_free(seed),
            mode: None,
            classifier_error_rate: 0.0,
            ocr_corruption_rate: 0.0,
            attach_checks: true,
        }
    }
}

/// Everything a simulation run produces.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub reports: Vec<InspectionReport>,
    pub trace: RunTrace,
    pub pairs: Vec<VerdictPair>,
    pub acc_sys: f64,
    /// Fraction of true damage instances reported; 1.0 when the population
    /// carries no damage at all.
    pub defect_recall: f64,
}

/// Synthesizes evidence for the whole population and streams it through the
/// pipeline.
pub fn run_simulation(
    population: &Population,
    routing: &RoutingTable,
    thresholds: &ThresholdTable,
    latency: &StageLatencyModel,
    opts: &SimOptions,
) -> SimOutcome {
    let evidences: Vec<EvidenceFile> = population
        .vehicles
        .iter()
        .map(|v| {
            let mut e = synthesize_evidence(v, routing, &opts.noise);
            if opts.attach_checks {
                e.powertrain_pred = Some(classify_powertrain_stub(
                    v,
                    opts.classifier_error_rate,
                    opts.noise.seed,
                ));
                e.ocr_variant = Some(ocr_variant_stub(v, opts.ocr_corruption_rate, opts.noise.seed));
            }
            e
        })
        .collect();

    let mut cfg = PipelineConfig::new(routing, thresholds, &population.manifest, latency);
    cfg.seed = opts.noise.seed;
    if let Some(mode) = opts.mode {
        cfg.active_views = Some(mode.views());
        cfg.segmentation_enabled = mode.segmentation_enabled();
    }
    let (reports, trace) =
        run_stream(&evidences, opts.cadence_ms, &cfg).expect("cadence is positive");

    let pairs: Vec<VerdictPair> = population
        .vehicles
        .iter()
        .zip(&reports)
        .map(|(v, r)| VerdictPair {
            predicted: r.verdict,
            ground_truth: ground_truth_verdict(v, &population.manifest),
        })
        .collect();
    let acc_sys = system_accuracy(&pairs).unwrap_or(0.0);

    let true_damage_count: usize = population.vehicles.iter().map(|v| v.true_damages.len()).sum();
    let reported_damage_count: usize = reports.iter().map(|r| r.damages.len()).sum();
    let defect_recall = if true_damage_count == 0 {
        1.0
    } else {
        reported_damage_count as f64 / true_damage_count as f64
    };

    SimOutcome {
        reports,
        trace,
        pairs,
        acc_sys,
        defect_recall,
    }
}

/// Runs one ablation mode over the population and collects its table row.
pub fn run_ablation_mode(
    population: &Population,
    routing: &RoutingTable,
    thresholds: &ThresholdTable,
    latency: &StageLatencyModel,
    base_opts: &SimOptions,
    mode: AblationMode,
) -> ModeResult {
    let mut opts = base_opts.clone();
    opts.mode = Some(mode);
    let outcome = run_simulation(population, routing, thresholds, latency, &opts);
    let coverage = routing
        .coverage_fraction(&mode.views())
        .expect("mode view set is non-empty");
    let mean_latency_ms = if outcome.trace.vehicles.is_empty() {
        0.0
    } else {
        outcome.trace.vehicles.iter().map(|v| v.e2e_ms).sum::<f64>()
            / outcome.trace.vehicles.len() as f64
    };
    ModeResult {
        mode,
        coverage,
        defect_detection: outcome.defect_recall,
        mean_latency_ms,
        verification_accuracy: outcome.acc_sys,
        population_fingerprint: population.fingerprint.clone(),
    }
}

/// Structured summary emitted by simulation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub vehicles: usize,
    pub cadence_ms: f64,
    pub acc_sys: f64,
    pub defect_recall: f64,
    pub throughput_per_min: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub manifest_fingerprint: String,
}

impl RunSummary {
    pub fn from_outcome(
        population: &Population,
        opts: &SimOptions,
        outcome: &SimOutcome,
    ) -> RunSummary {
        RunSummary {
            seed: opts.noise.seed,
            vehicles: population.vehicles.len(),
            cadence_ms: opts.cadence_ms,
            acc_sys: outcome.acc_sys,
            defect_recall: outcome.defect_recall,
            throughput_per_min: outcome.trace.throughput_per_min,
            p50_ms: outcome.trace.p50_ms,
            p95_ms: outcome.trace.p95_ms,
            manifest_fingerprint: population.manifest.fingerprint().to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
