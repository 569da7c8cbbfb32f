//! Command-line surface: compile, dump, evaluate, and synth.
//!
//! Exit codes form the scripting contract: 0 = success and all gates pass,
//! 2 = an evaluation gate failed, 3 = input or validation error (including
//! unknown flags), 4 = internal error. Logs go to standard error; machine
//! output goes to files only.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::compiler::{self, read_asset, LoadedConfig};
use crate::ema::{write_ag500_pos, write_ema_csv};
use crate::eval::{self, GateOutcome, PhaseStatus, ReportDoc, ScalarMetric};
use crate::ik::dump_targets;
use crate::mesh::parse_obj;
use crate::synth::{self, Scenario, SynthParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE_FAILURE: i32 = 2;
pub const EXIT_INPUT_ERROR: i32 = 3;
pub const EXIT_INTERNAL_ERROR: i32 = 4;

#[derive(Parser)]
#[command(
    name = "glossa",
    version,
    about = "Articulatory animation model compiler and evaluation harness",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile an animated model asset from a config file
    Compile {
        /// Compile config (TOML, `config-v1`)
        config: PathBuf,
        /// Asset manifest output path (a sibling `.bin` is written too)
        #[arg(long)]
        out: PathBuf,
        /// Directory for report.json plus per-metric CSV/SVG files
        #[arg(long)]
        report_dir: PathBuf,
    },
    /// Dump solved IK targets from an asset to an EMA data file
    Dump {
        /// Asset manifest path
        asset: PathBuf,
        /// Output format
        #[arg(long, value_enum)]
        format: DumpFormat,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the evaluation procedures against a compiled asset
    Evaluate {
        /// Asset manifest path
        asset: PathBuf,
        /// Palate mesh (OBJ) for contact/penetration analysis
        #[arg(long)]
        palate: Option<PathBuf>,
        /// Reference tongue mesh (OBJ) for pose similarity
        #[arg(long)]
        reference_mesh: Option<PathBuf>,
        /// Clip frame compared against the reference mesh
        #[arg(long)]
        frame: Option<usize>,
        /// Directory for report.json plus per-metric CSV/SVG files
        #[arg(long)]
        report_dir: PathBuf,
        /// Max target-to-surface distance, mm
        #[arg(long, default_value_t = 1.0)]
        distance_gate: f64,
        /// Max palate penetration depth, mm
        #[arg(long, default_value_t = 0.2)]
        penetration_gate: f64,
        /// Proximity counted as palate contact, mm
        #[arg(long, default_value_t = 0.5)]
        contact_eps: f64,
        /// Max symmetric surface distance to the reference mesh, mm
        #[arg(long, default_value_t = 2.0)]
        similarity_gate: f64,
        /// Interior surface samples per triangle for similarity stats
        #[arg(long, default_value_t = 4)]
        samples_per_triangle: usize,
        /// Offset into the low-discrepancy sample sequence
        #[arg(long, default_value_t = 0)]
        sample_offset: u64,
    },
    /// Generate a synthetic fixture scenario
    Synth {
        /// One of: bind, fk-roundtrip, penetrate, two-link
        scenario: String,
        /// Output directory (created if needed)
        #[arg(long)]
        out_dir: PathBuf,
        /// Frame count
        #[arg(long, default_value_t = 500)]
        frames: usize,
        /// Seed for the scenario's deterministic randomness
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DumpFormat {
    /// Canonical `ema-csv v1`
    Csv,
    /// Articulograph-compatible binary `.pos` (+ `.meta.json` sidecar)
    Pos,
}

/// Parses arguments and runs a command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_INPUT_ERROR
                }
            };
        }
    };
    match cli.command {
        Command::Compile {
            config,
            out,
            report_dir,
        } => cmd_compile(&config, &out, &report_dir),
        Command::Dump { asset, format, out } => cmd_dump(&asset, format, &out),
        Command::Evaluate {
            asset,
            palate,
            reference_mesh,
            frame,
            report_dir,
            distance_gate,
            penetration_gate,
            contact_eps,
            similarity_gate,
            samples_per_triangle,
            sample_offset,
        } => cmd_evaluate(&EvaluateArgs {
            asset,
            palate,
            reference_mesh,
            frame,
            report_dir,
            distance_gate,
            penetration_gate,
            contact_eps,
            similarity_gate,
            samples_per_triangle,
            sample_offset,
        }),
        Command::Synth {
            scenario,
            out_dir,
            frames,
            seed,
        } => cmd_synth(&scenario, &out_dir, frames, seed),
    }
}

fn status_str(status: PhaseStatus) -> &'static str {
    match status {
        PhaseStatus::Passed => "passed",
        PhaseStatus::GateFailed => "gate-failed",
        PhaseStatus::Error => "error",
        PhaseStatus::Skipped => "skipped",
    }
}

fn cmd_compile(config_path: &Path, out: &Path, report_dir: &Path) -> i32 {
    let loaded = match LoadedConfig::from_path(config_path) {
        Ok(loaded) => loaded,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    let outcome = compiler::compile(&loaded, Some(out));
    for phase in &outcome.report.phases {
        eprintln!(
            "phase {:<9} {:<11} {:>8.3}s  {}",
            phase.name,
            status_str(phase.status),
            phase.duration_s,
            phase.detail
        );
    }
    if let Err(e) = eval::generate_report(&outcome.report.doc(), &outcome.report.series, report_dir)
    {
        eprintln!("error: failed to write report: {e}");
        return EXIT_INPUT_ERROR;
    }
    match (&outcome.error, outcome.report.gate_failed()) {
        (Some(e), _) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                EXIT_INTERNAL_ERROR
            } else {
                EXIT_INPUT_ERROR
            }
        }
        (None, true) => {
            eprintln!("compile failed: evaluation gates not met (see report)");
            EXIT_GATE_FAILURE
        }
        (None, false) => EXIT_OK,
    }
}

fn cmd_dump(asset_path: &Path, format: DumpFormat, out: &Path) -> i32 {
    let asset = match read_asset(asset_path) {
        Ok(asset) => asset,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    let dumped = match dump_targets(
        &asset.armature,
        &asset.clip,
        &asset.targets.topology,
        asset.clip.frame_rate_hz,
    ) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INTERNAL_ERROR;
        }
    };
    let result = match format {
        DumpFormat::Csv => std::fs::write(out, write_ema_csv(&dumped)),
        DumpFormat::Pos => {
            let bytes = match write_ag500_pos(&dumped) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_INTERNAL_ERROR;
                }
            };
            // Channel count and rate travel out-of-band, as a sidecar.
            let sidecar = serde_json::json!({
                "channels": dumped.coil_ids().len(),
                "rate_hz": dumped.sample_rate_hz(),
                "coil_ids": dumped.coil_ids(),
            });
            let mut meta = out.as_os_str().to_owned();
            meta.push(".meta.json");
            std::fs::write(out, bytes).and_then(|_| {
                std::fs::write(
                    PathBuf::from(meta),
                    format!("{}\n", serde_json::to_string_pretty(&sidecar).unwrap()),
                )
            })
        }
    };
    if let Err(e) = result {
        eprintln!("error: {}: {e}", out.display());
        return EXIT_INPUT_ERROR;
    }
    eprintln!(
        "dumped {} frames x {} coils to {}",
        dumped.frame_count(),
        dumped.coil_ids().len(),
        out.display()
    );
    EXIT_OK
}

struct EvaluateArgs {
    asset: PathBuf,
    palate: Option<PathBuf>,
    reference_mesh: Option<PathBuf>,
    frame: Option<usize>,
    report_dir: PathBuf,
    distance_gate: f64,
    penetration_gate: f64,
    contact_eps: f64,
    similarity_gate: f64,
    samples_per_triangle: usize,
    sample_offset: u64,
}

fn load_obj(path: &Path) -> Result<crate::mesh::TriMesh, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_obj(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_evaluate(args: &EvaluateArgs) -> i32 {
    let asset = match read_asset(&args.asset) {
        Ok(asset) => asset,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    if args.reference_mesh.is_some() && args.frame.is_none() {
        eprintln!("error: --reference-mesh requires --frame");
        return EXIT_INPUT_ERROR;
    }

    let mut doc = ReportDoc::new(args.sample_offset);
    doc.provenance.insert(
        "asset_config_sha256".into(),
        asset.provenance.config_sha256.clone(),
    );
    doc.provenance
        .insert("tool_version".into(), compiler::TOOL_VERSION.into());
    let mut series = Vec::new();

    match eval::target_surface_distance(&asset) {
        Ok(distance_series) => {
            for s in &distance_series {
                doc.gates
                    .push(GateOutcome::max_of(&s.name, s, args.distance_gate));
            }
            series.extend(distance_series);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT_ERROR;
        }
    }

    if let Some(palate_path) = &args.palate {
        let palate = match load_obj(palate_path) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT_ERROR;
            }
        };
        match eval::palate_contact(&asset, &palate, args.contact_eps) {
            Ok((contact, penetration)) => {
                doc.gates.push(GateOutcome::max_of(
                    "palate_penetration",
                    &penetration,
                    args.penetration_gate,
                ));
                series.push(contact);
                series.push(penetration);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT_ERROR;
            }
        }
    }

    if let Some(reference_path) = &args.reference_mesh {
        let reference = match load_obj(reference_path) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT_ERROR;
            }
        };
        let frame = args.frame.expect("checked above");
        let stats = eval::deformed_mesh(&asset, compiler::MeshRole::Tongue, frame).and_then(
            |deformed| {
                eval::pose_similarity(
                    &deformed,
                    &reference,
                    args.samples_per_triangle,
                    args.sample_offset,
                )
            },
        );
        match stats {
            Ok(stats) => {
                for (name, value) in [
                    ("pose_similarity.mean", stats.mean),
                    ("pose_similarity.max", stats.max),
                    ("pose_similarity.rms", stats.rms),
                ] {
                    doc.scalars.push(ScalarMetric {
                        name: name.into(),
                        unit: "mm".into(),
                        value,
                    });
                }
                doc.gates.push(GateOutcome::scalar(
                    "pose_similarity",
                    "pose_similarity.max",
                    stats.max,
                    args.similarity_gate,
                ));
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT_ERROR;
            }
        }
    }

    doc.add_series_summaries(&series);
    for gate in &doc.gates {
        eprintln!(
            "gate {:<28} {}  (measured {:.6} vs threshold {})",
            gate.name,
            if gate.pass { "pass" } else { "FAIL" },
            gate.measured,
            gate.threshold
        );
    }
    if let Err(e) = eval::generate_report(&doc, &series, &args.report_dir) {
        eprintln!("error: failed to write report: {e}");
        return EXIT_INPUT_ERROR;
    }
    if doc.all_gates_pass() {
        EXIT_OK
    } else {
        EXIT_GATE_FAILURE
    }
}

fn cmd_synth(scenario: &str, out_dir: &Path, frames: usize, seed: u64) -> i32 {
    let scenario: Scenario = match scenario.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    match synth::generate(scenario, &SynthParams { frames, seed }, out_dir) {
        Ok(output) => {
            for file in &output.files {
                eprintln!("wrote {}", file.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT_ERROR
        }
    }
}
