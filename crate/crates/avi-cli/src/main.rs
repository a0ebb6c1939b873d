//! `avi` — command-line front end for the inspection engine.
//!
//! Exit codes: 0 = success (and PASS for `inspect`), 1 = FAIL verdict,
//! 2 = operational error (bad config, missing file, invalid input).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use avi_core::evidence::EvidenceFile;
use avi_core::fusion::ThresholdTable;
use avi_core::manifest::ManifestDb;
use avi_core::metrics::{
    ablation_table, map_at_50, mean_iou, AblationMode, LabeledBox, RasterMask, DEFAULT_RASTER,
};
use avi_core::perception::NoiseProfile;
use avi_core::pipeline::{run_vehicle, PipelineConfig, StageLatencyModel, TriggerEvent};
use avi_core::routing::RoutingTable;
use avi_core::rules::{DamageKind, Verdict};
use avi_core::sim::{
    generate_population, run_ablation_mode, run_simulation, PopulationConfig, RunSummary,
    SimOptions,
};

#[derive(Parser)]
#[command(name = "avi", version, about = "Variant-aware vehicle inspection engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect one vehicle from an evidence snapshot.
    Inspect {
        /// Routing table (TOML: checklist + camera assignments).
        #[arg(long)]
        routing: PathBuf,
        /// VIN-keyed variant manifest (JSONL).
        #[arg(long)]
        manifest: PathBuf,
        /// Evidence snapshot (JSON).
        #[arg(long)]
        evidence: PathBuf,
        /// Detection thresholds (TOML); defaults to a uniform 0.5.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Stage latency model (TOML); defaults to zero latency.
        #[arg(long)]
        latency: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write the report here in addition to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a routing table and report per-mode camera coverage.
    Validate {
        #[arg(long)]
        routing: PathBuf,
        /// Optionally cross-check a manifest's feature vocabulary.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run a synthetic fleet through the virtual-time pipeline.
    Simulate {
        #[arg(long)]
        routing: PathBuf,
        #[arg(long)]
        latency: PathBuf,
        /// Perception noise profile (TOML); defaults to noise-free.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        vehicles: usize,
        /// Trigger cadence in milliseconds.
        #[arg(long, default_value_t = 18_000.0)]
        cadence_ms: f64,
        /// Overrides the seed from the noise profile.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        build_error_rate: f64,
        #[arg(long, default_value_t = 0.15)]
        damage_rate: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write per-vehicle stage timings here as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write every inspection report here as pretty JSON lines.
        #[arg(long)]
        reports_out: Option<PathBuf>,
    },
    /// Run every camera-subset ablation mode over one fleet.
    Ablate {
        #[arg(long)]
        routing: PathBuf,
        #[arg(long)]
        latency: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        vehicles: usize,
        #[arg(long, default_value_t = 18_000.0)]
        cadence_ms: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        build_error_rate: f64,
        #[arg(long, default_value_t = 0.15)]
        damage_rate: f64,
        /// Restrict to a subset of modes (t1, t2, t3, side, noseg, full).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Score predicted boxes against ground truth (mAP at IoU 0.5).
    EvalBoxes {
        /// JSON array of labeled boxes with scores.
        #[arg(long)]
        preds: PathBuf,
        /// JSON array of labeled boxes without scores.
        #[arg(long)]
        gts: PathBuf,
    },
    /// Score predicted damage polygons against ground truth (mean IoU).
    EvalMasks {
        /// JSON array of {class, polygon} records.
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        /// Rasterization edge in pixels.
        #[arg(long, default_value_t = DEFAULT_RASTER)]
        raster: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Inspect {
            routing,
            manifest,
            evidence,
            thresholds,
            latency,
            format,
            out,
            seed,
        } => {
            let routing = RoutingTable::load(&routing).map_err(|e| e.to_string())?;
            let thresholds = load_thresholds(thresholds.as_deref())?;
            let latency = load_latency(latency.as_deref())?;
            let manifest =
                ManifestDb::ingest(&manifest, Some(&routing)).map_err(|e| e.to_string())?;
            let evidence = EvidenceFile::load(&evidence).map_err(|e| e.to_string())?;

            let mut cfg = PipelineConfig::new(&routing, &thresholds, &manifest, &latency);
            cfg.seed = seed;
            let trigger = TriggerEvent {
                seq: 1,
                timestamp_ms: evidence.trigger_timestamp_ms,
                vehicle_id: evidence.vehicle_id.clone(),
            };
            let (report, _trace) = run_vehicle(&trigger, &evidence, &cfg);
            let rendered = match format {
                Format::Text => report.render_text(),
                Format::Json => report.to_json(),
            };
            println!("{rendered}");
            if let Some(path) = out {
                std::fs::write(&path, report.to_json()).map_err(|e| e.to_string())?;
            }
            Ok(match report.verdict {
                Verdict::Pass => ExitCode::SUCCESS,
                Verdict::Fail => ExitCode::from(1),
            })
        }
        Command::Validate { routing, manifest } => {
            let table = RoutingTable::load(&routing).map_err(|e| e.to_string())?;
            println!("routing table OK: {} tasks, {} checklist items",
                table.tasks().count(), table.checklist().len());
            for mode in AblationMode::ALL {
                let cov = table
                    .coverage_fraction(&mode.views())
                    .map_err(|e| e.to_string())?;
                println!(
                    "  {:<20} coverage {}/{} = {:.1}%",
                    mode.label(),
                    cov.covered,
                    cov.checklist_size,
                    cov.percent()
                );
            }
            if let Some(path) = manifest {
                let db = ManifestDb::ingest(&path, Some(&table)).map_err(|e| e.to_string())?;
                println!("manifest OK: {} records, fingerprint {}", db.len(), db.fingerprint());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            routing,
            latency,
            noise,
            thresholds,
            vehicles,
            cadence_ms,
            seed,
            build_error_rate,
            damage_rate,
            format,
            trace_out,
            reports_out,
        } => {
            let routing = RoutingTable::load(&routing).map_err(|e| e.to_string())?;
            let thresholds = load_thresholds(thresholds.as_deref())?;
            let latency = StageLatencyModel::load(&latency).map_err(|e| e.to_string())?;
            let opts = sim_options(noise.as_deref(), seed, cadence_ms)?;
            let pop = generate_population(
                &PopulationConfig {
                    size: vehicles,
                    seed: opts.noise.seed,
                    build_error_rate,
                    damage_rate,
                },
                &routing,
            );
            let outcome = run_simulation(&pop, &routing, &thresholds, &latency, &opts);
            let summary = RunSummary::from_outcome(&pop, &opts, &outcome);
            match format {
                Format::Json => println!("{}", summary.to_json()),
                Format::Text => {
                    println!("vehicles:            {}", summary.vehicles);
                    println!("cadence:             {:.0} ms", summary.cadence_ms);
                    println!("system accuracy:     {:.4}", summary.acc_sys);
                    println!("defect recall:       {:.4}", summary.defect_recall);
                    println!("throughput:          {:.4} vehicles/min", summary.throughput_per_min);
                    println!("latency p50/p95:     {:.1} / {:.1} ms", summary.p50_ms, summary.p95_ms);
                    println!("manifest fingerprint {}", summary.manifest_fingerprint);
                }
            }
            if let Some(path) = trace_out {
                std::fs::write(&path, outcome.trace.to_csv()).map_err(|e| e.to_string())?;
            }
            if let Some(path) = reports_out {
                let mut body = String::new();
                for r in &outcome.reports {
                    body.push_str(&serde_json::to_string(r).map_err(|e| e.to_string())?);
                    body.push('\n');
                }
                std::fs::write(&path, body).map_err(|e| e.to_string())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate {
            routing,
            latency,
            noise,
            thresholds,
            vehicles,
            cadence_ms,
            seed,
            build_error_rate,
            damage_rate,
            modes,
            format,
        } => {
            let routing = RoutingTable::load(&routing).map_err(|e| e.to_string())?;
            let thresholds = load_thresholds(thresholds.as_deref())?;
            let latency = StageLatencyModel::load(&latency).map_err(|e| e.to_string())?;
            let opts = sim_options(noise.as_deref(), seed, cadence_ms)?;
            let pop = generate_population(
                &PopulationConfig {
                    size: vehicles,
                    seed: opts.noise.seed,
                    build_error_rate,
                    damage_rate,
                },
                &routing,
            );
            let selected: Vec<AblationMode> = match modes {
                None => AblationMode::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|n| AblationMode::parse(n).ok_or_else(|| format!("unknown mode `{n}`")))
                    .collect::<Result<_, _>>()?,
            };
            let rows: Vec<_> = selected
                .iter()
                .map(|&m| run_ablation_mode(&pop, &routing, &thresholds, &latency, &opts, m))
                .collect();
            let table = ablation_table(&rows).map_err(|e| e.to_string())?;
            match format {
                Format::Text => println!("{}", table.render_text()),
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&table).map_err(|e| e.to_string())?
                ),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalBoxes { preds, gts } => {
            let preds: Vec<LabeledBox> = read_json(&preds)?;
            let gts: Vec<LabeledBox> = read_json(&gts)?;
            let result = map_at_50(&preds, &gts);
            println!(
                "{}",
                serde_json::to_string_pretty(&result).map_err(|e| e.to_string())?
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalMasks { preds, gts, raster } => {
            let preds = read_polygons(&preds, raster)?;
            let gts = read_polygons(&gts, raster)?;
            let miou = mean_iou(&preds, &gts).map_err(|e| e.to_string())?;
            println!("{{\n  \"mean_iou\": {miou}\n}}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_thresholds(path: Option<&std::path::Path>) -> Result<ThresholdTable, String> {
    let table = match path {
        None => ThresholdTable::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
            ThresholdTable::from_toml_str(&text).map_err(|e| e.to_string())?
        }
    };
    table.validate().map_err(|e| e.to_string())?;
    Ok(table)
}

fn load_latency(path: Option<&std::path::Path>) -> Result<StageLatencyModel, String> {
    match path {
        None => Ok(StageLatencyModel::zero()),
        Some(p) => StageLatencyModel::load(p).map_err(|e| e.to_string()),
    }
}

fn sim_options(
    noise: Option<&std::path::Path>,
    seed: Option<u64>,
    cadence_ms: f64,
) -> Result<SimOptions, String> {
    let mut profile = match noise {
        None => NoiseProfile::noise_free(0),
        Some(p) => NoiseProfile::load(p).map_err(|e| e.to_string())?,
    };
    profile.validate()?;
    if let Some(s) = seed {
        profile.seed = s;
    }
    let mut opts = SimOptions::noise_free(cadence_ms, profile.seed);
    opts.noise = profile;
    Ok(opts)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[derive(serde::Deserialize)]
struct PolygonRecord {
    class: DamageKind,
    polygon: Vec<[f64; 2]>,
}

fn read_polygons(path: &std::path::Path, raster: usize) -> Result<Vec<RasterMask>, String> {
    let records: Vec<PolygonRecord> = read_json(path)?;
    Ok(records
        .into_iter()
        .map(|r| RasterMask::from_polygon(r.class, &r.polygon, raster, raster))
        .collect())
}
