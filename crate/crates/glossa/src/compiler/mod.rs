//! The model compiler: ingest, rig, solve, evaluate, and package as
//! explicit build-lifecycle phases.
//!
//! Phases run in order — validate, rig, solve, evaluate, package — and the
//! pipeline stops at the first hard failure or failed evaluation gate. A
//! report is always produced; an asset only when every phase passes. A
//! failed compile never leaves an asset file at the target path.
//!
//! Compilation is deterministic: the same config and input bytes produce a
//! byte-identical asset and report. Phase durations are kept for logging
//! but never serialized.

mod asset;
mod config;

pub use asset::{
    buffer_path, read_asset, write_asset, AnimatedModelAsset, AssetError, CoilMarker, InputHash,
    MeshRole, MeshSkin, NamedMesh, Provenance, ASSET_VERSION,
};
pub use config::{
    CompileConfig, CoilSpec, EmaFormat, EmaSource, EvaluationParams, GateThresholds, LoadedConfig,
    MeshPaths, RegistrationConfig, RigParams, ValidationParams, CONFIG_VERSION,
};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Isometry3, Point3};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ema::{self, Articulator, CoilRole, EmaError, EmaTrajectory};
use crate::eval::{
    self, EvalError, GateOutcome, MetricSeries, PhaseStatus, PhaseSummary, ReportDoc, ScalarMetric,
};
use crate::ik::{self, AnimationClip, IkError, TargetSequence, TargetWeights};
use crate::mesh::{parse_obj, MeshError, TriMesh};
use crate::rig::{
    build_jaw_armature, build_tongue_armature, compute_skin_weights, Armature, RigError,
    SkinWeights, JAW_BONE_ID,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    MeshFile { path: String, source: MeshError },
    #[error(transparent)]
    Ema(#[from] EmaError),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

impl CompileError {
    /// True for failures that indicate a bug or corrupted state rather
    /// than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            CompileError::Ik(IkError::Numerical(_)) | CompileError::Asset(AssetError::Invalid(_))
        )
    }
}

/// One lifecycle phase outcome. The duration is diagnostic only and never
/// serialized into the report.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub name: String,
    pub status: PhaseStatus,
    pub detail: String,
    pub duration_s: f64,
}

/// Everything the compile produced besides the asset itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleReport {
    pub phases: Vec<PhaseReport>,
    pub gates: Vec<GateOutcome>,
    pub series: Vec<MetricSeries>,
    pub scalars: Vec<ScalarMetric>,
    pub seed: u64,
    pub provenance: BTreeMap<String, String>,
}

impl LifecycleReport {
    pub fn all_gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn gate_failed(&self) -> bool {
        self.phases.iter().any(|p| p.status == PhaseStatus::GateFailed)
    }

    pub fn error_phase(&self) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.status == PhaseStatus::Error)
    }

    /// The canonical serializable document (deterministic; no timings).
    pub fn doc(&self) -> ReportDoc {
        let mut doc = ReportDoc::new(self.seed);
        doc.phases = self
            .phases
            .iter()
            .map(|p| PhaseSummary {
                name: p.name.clone(),
                status: p.status,
                detail: p.detail.clone(),
            })
            .collect();
        doc.gates = self.gates.clone();
        doc.scalars = self.scalars.clone();
        doc.add_series_summaries(&self.series);
        doc.provenance = self.provenance.clone();
        doc
    }
}

#[derive(Debug)]
pub struct CompileOutcome {
    /// Present only when every phase passed.
    pub asset: Option<AnimatedModelAsset>,
    pub report: LifecycleReport,
    /// The hard failure that stopped the pipeline, if any.
    pub error: Option<CompileError>,
}

const PHASES: [&str; 5] = ["validate", "rig", "solve", "evaluate", "package"];

/// Runs the full lifecycle. When `out_manifest` is given, the package
/// phase writes the asset there (manifest + sibling `.bin`).
pub fn compile(loaded: &LoadedConfig, out_manifest: Option<&Path>) -> CompileOutcome {
    let mut report = LifecycleReport {
        phases: Vec::new(),
        gates: Vec::new(),
        series: Vec::new(),
        scalars: Vec::new(),
        seed: loaded.config.evaluation.sample_offset,
        provenance: BTreeMap::new(),
    };
    report
        .provenance
        .insert("config_sha256".into(), loaded.sha256.clone());
    report
        .provenance
        .insert("tool_version".into(), TOOL_VERSION.into());

    let mut pipeline = Pipeline::new(&loaded.config, &loaded.sha256);
    let mut error = None;
    let mut gate_failed = false;

    for (i, phase) in PHASES.iter().enumerate() {
        if error.is_some() || gate_failed {
            report.phases.push(PhaseReport {
                name: phase.to_string(),
                status: PhaseStatus::Skipped,
                detail: String::new(),
                duration_s: 0.0,
            });
            continue;
        }
        let started = Instant::now();
        let result = match i {
            0 => pipeline.validate(),
            1 => pipeline.rig(),
            2 => pipeline.solve(),
            3 => pipeline.evaluate(&mut report),
            _ => pipeline.package(out_manifest),
        };
        let duration_s = started.elapsed().as_secs_f64();
        match result {
            Ok((status, detail)) => {
                if status == PhaseStatus::GateFailed {
                    gate_failed = true;
                }
                report.phases.push(PhaseReport {
                    name: phase.to_string(),
                    status,
                    detail,
                    duration_s,
                });
            }
            Err(e) => {
                report.phases.push(PhaseReport {
                    name: phase.to_string(),
                    status: PhaseStatus::Error,
                    detail: e.to_string(),
                    duration_s,
                });
                error = Some(e);
            }
        }
    }

    for hash in &pipeline.input_hashes {
        report
            .provenance
            .insert(format!("input.{}", hash.name), hash.sha256.clone());
    }

    CompileOutcome {
        asset: if error.is_none() && !gate_failed {
            pipeline.asset
        } else {
            None
        },
        report,
        error,
    }
}

type PhaseResult = Result<(PhaseStatus, String), CompileError>;

struct Pipeline<'a> {
    config: &'a CompileConfig,
    config_sha256: &'a str,
    input_hashes: Vec<InputHash>,
    trajectory: Option<EmaTrajectory>,
    tongue: Option<TriMesh>,
    mandible: Option<TriMesh>,
    maxilla: Option<TriMesh>,
    palate: Option<TriMesh>,
    reference: Option<TriMesh>,
    registration: Isometry3<f64>,
    roles: Vec<CoilRole>,
    armature: Option<Armature>,
    skins: Vec<MeshSkin>,
    markers: Vec<CoilMarker>,
    targets: Option<TargetSequence>,
    clip: Option<AnimationClip>,
    asset: Option<AnimatedModelAsset>,
}

impl<'a> Pipeline<'a> {
    fn new(config: &'a CompileConfig, config_sha256: &'a str) -> Self {
        Self {
            config,
            config_sha256,
            input_hashes: Vec::new(),
            trajectory: None,
            tongue: None,
            mandible: None,
            maxilla: None,
            palate: None,
            reference: None,
            registration: Isometry3::identity(),
            roles: Vec::new(),
            armature: None,
            skins: Vec::new(),
            markers: Vec::new(),
            targets: None,
            clip: None,
            asset: None,
        }
    }

    fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CompileError> {
        let bytes = std::fs::read(path).map_err(|e| CompileError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.input_hashes.push(InputHash {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn load_mesh(&mut self, path: &Path) -> Result<TriMesh, CompileError> {
        let bytes = self.read_input(path)?;
        parse_obj(&bytes).map_err(|e| CompileError::MeshFile {
            path: path.display().to_string(),
            source: e,
        })
    }

    fn validate(&mut self) -> PhaseResult {
        self.config.validate()?;
        self.registration = self.config.registration.isometry()?;
        self.roles = self.config.roles();

        let ema_bytes = self.read_input(&self.config.ema.path.clone())?;
        let raw = match self.config.ema.format {
            EmaFormat::Csv => ema::parse_ema_csv(&ema_bytes)?,
            EmaFormat::Pos => ema::parse_ag500_pos(
                &ema_bytes,
                self.config.ema.channels.expect("validated"),
                self.config.ema.rate_hz.expect("validated"),
            )?,
        };

        self.tongue = Some(self.load_mesh(&self.config.meshes.tongue.clone())?);
        self.mandible = Some(self.load_mesh(&self.config.meshes.mandible.clone())?);
        self.maxilla = Some(self.load_mesh(&self.config.meshes.maxilla.clone())?);
        self.palate = Some(self.load_mesh(&self.config.meshes.palate.clone())?);
        if let Some(reference) = self.config.evaluation.reference_mesh.clone() {
            self.reference = Some(self.load_mesh(&reference)?);
        }

        for role in &self.roles {
            if raw.coil_index(&role.coil_id).is_none() {
                return Err(CompileError::Validation(format!(
                    "coil `{}` from the role map is missing from the EMA trajectory",
                    role.coil_id
                )));
            }
        }

        let summary = ema::validate(
            &raw,
            self.config.validation.max_rms_mm,
            self.config.validation.max_gap_frames,
        );
        if !summary.pass {
            return Err(CompileError::Validation(format!(
                "dropout run of {} frames exceeds max_gap_frames = {}",
                summary.max_run_len, self.config.validation.max_gap_frames
            )));
        }
        let mut prepared = summary.apply(&raw);
        let needs_all_valid = self.config.validation.smooth_window.is_some()
            || self.config.validation.resample_hz.is_some();
        if needs_all_valid && !summary.flagged.is_empty() {
            prepared = ema::interpolate_gaps(&prepared, self.config.validation.max_gap_frames)?;
        }
        if let Some(window) = self.config.validation.smooth_window {
            prepared = ema::smooth(&prepared, window)?;
        }
        if let Some(rate) = self.config.validation.resample_hz {
            prepared = ema::resample(&prepared, rate)?;
        }

        let detail = format!(
            "{} coils, {} frames at {} Hz; {} samples rms-flagged, longest dropout {} frames",
            prepared.coil_ids().len(),
            prepared.frame_count(),
            prepared.sample_rate_hz(),
            summary.flagged.len(),
            summary.max_run_len
        );
        self.trajectory = Some(prepared);
        Ok((PhaseStatus::Passed, detail))
    }

    /// First frame where every rigged coil is valid; bind positions are
    /// taken there.
    fn bind_frame(&self, trajectory: &EmaTrajectory, rigged: &[usize]) -> Result<usize, CompileError> {
        (0..trajectory.frame_count())
            .find(|&f| rigged.iter().all(|&c| trajectory.sample(f, c).valid))
            .ok_or_else(|| {
                CompileError::Validation("no frame has valid samples for every rigged coil".into())
            })
    }

    fn rig(&mut self) -> PhaseResult {
        let trajectory = self.trajectory.as_ref().expect("validate ran");
        let mut tongue_roles: Vec<&CoilRole> = self
            .roles
            .iter()
            .filter(|r| r.articulator == Articulator::Tongue)
            .collect();
        tongue_roles.sort_by_key(|r| r.chain_index.unwrap_or(usize::MAX));
        let jaw_role = self.roles.iter().find(|r| r.articulator == Articulator::Jaw);

        let mut rigged_indices = Vec::new();
        for role in tongue_roles.iter().copied().chain(jaw_role) {
            rigged_indices.push(trajectory.coil_index(&role.coil_id).expect("validated"));
        }
        let bind_frame = self.bind_frame(trajectory, &rigged_indices)?;

        let tongue_binds: Vec<Point3<f64>> = tongue_roles
            .iter()
            .map(|r| {
                let c = trajectory.coil_index(&r.coil_id).expect("validated");
                self.registration * trajectory.sample(bind_frame, c).position
            })
            .collect();
        let tongue_armature =
            build_tongue_armature(&tongue_binds, self.config.rig.root_offset_mm)?;

        let mut parts: Vec<Armature> = vec![tongue_armature.clone()];
        if let Some(jaw) = jaw_role {
            let hinge = self.config.rig.hinge_point.ok_or_else(|| {
                CompileError::Config("a jaw coil is rigged but rig.hinge_point is not set".into())
            })?;
            let c = trajectory.coil_index(&jaw.coil_id).expect("validated");
            let jaw_bind = self.registration * trajectory.sample(bind_frame, c).position;
            parts.push(build_jaw_armature(
                &jaw_bind,
                &Point3::new(hinge[0], hinge[1], hinge[2]),
            )?);
        }
        let part_refs: Vec<&Armature> = parts.iter().collect();
        let armature = Armature::merge(&part_refs)?;

        // Tongue weights are computed against the tongue chain alone so the
        // jaw bone never influences tongue vertices; ids stay valid after
        // the merge.
        let tongue_mesh = self.tongue.as_ref().expect("validate ran");
        let mut skins = vec![MeshSkin {
            mesh_name: "tongue".into(),
            weights: compute_skin_weights(
                tongue_mesh,
                &tongue_armature,
                self.config.rig.falloff_sigma_mm,
            )?,
        }];
        if jaw_role.is_some() {
            let mandible = self.mandible.as_ref().expect("validate ran");
            skins.push(MeshSkin {
                mesh_name: "mandible".into(),
                weights: SkinWeights::rigid(mandible.vertices().len(), JAW_BONE_ID),
            });
        }

        let mut markers = Vec::new();
        for role in &self.roles {
            let c = trajectory.coil_index(&role.coil_id).expect("validated");
            let sample = trajectory.sample(bind_frame, c);
            if sample.valid {
                markers.push(CoilMarker {
                    coil_id: role.coil_id.clone(),
                    articulator: role.articulator,
                    chain_index: role.chain_index,
                    position: self.registration * sample.position,
                });
            }
        }

        let detail = format!(
            "{} bones ({} tongue chain{}), bind frame {}, sigma {} mm",
            armature.len(),
            tongue_binds.len(),
            if jaw_role.is_some() { " + jaw" } else { "" },
            bind_frame,
            self.config.rig.falloff_sigma_mm
        );
        self.armature = Some(armature);
        self.skins = skins;
        self.markers = markers;
        Ok((PhaseStatus::Passed, detail))
    }

    fn solve(&mut self) -> PhaseResult {
        let armature = self.armature.as_ref().expect("rig ran");
        let trajectory = self.trajectory.as_ref().expect("validate ran");
        let mut ik_config = self.config.ik.clone();
        ik_config.joint_limits = self.config.ik.joint_limits.clone();
        let sequence = ik::attach_targets(
            armature,
            &self.roles,
            trajectory,
            &self.registration,
            TargetWeights::default(),
        )?;
        let clip = ik::solve_sequence(armature, &sequence, &ik_config)?;

        let frames = clip.frame_count();
        let converged = clip
            .residuals_mm
            .iter()
            .filter(|&&r| r <= ik_config.tolerance_mm)
            .count();
        let max_residual = clip.residuals_mm.iter().cloned().fold(0.0, f64::max);
        let mean_iterations =
            clip.iterations.iter().map(|&i| i as f64).sum::<f64>() / frames as f64;
        let held = clip.held.iter().filter(|&&h| h).count();
        let detail = format!(
            "{frames} frames, {converged} converged, max residual {max_residual:.6} mm, mean iterations {mean_iterations:.2}, {held} held"
        );
        self.targets = Some(sequence);
        self.clip = Some(clip);
        Ok((PhaseStatus::Passed, detail))
    }

    fn evaluate(&mut self, report: &mut LifecycleReport) -> PhaseResult {
        let asset = AnimatedModelAsset {
            meshes: vec![
                NamedMesh {
                    name: "tongue".into(),
                    role: MeshRole::Tongue,
                    mesh: self.tongue.clone().expect("validate ran"),
                },
                NamedMesh {
                    name: "mandible".into(),
                    role: MeshRole::Mandible,
                    mesh: self.mandible.clone().expect("validate ran"),
                },
                NamedMesh {
                    name: "maxilla".into(),
                    role: MeshRole::Maxilla,
                    mesh: self.maxilla.clone().expect("validate ran"),
                },
            ],
            armature: self.armature.clone().expect("rig ran"),
            skins: self.skins.clone(),
            clip: self.clip.clone().expect("solve ran"),
            targets: self.targets.clone().expect("solve ran"),
            markers: self.markers.clone(),
            provenance: Provenance {
                config_sha256: self.config_sha256.to_string(),
                inputs: self.input_hashes.clone(),
                tool_version: TOOL_VERSION.into(),
            },
        };

        let distance_series = eval::target_surface_distance(&asset)?;
        for series in &distance_series {
            report.gates.push(GateOutcome::max_of(
                &series.name,
                series,
                self.config.gates.distance_mm,
            ));
        }
        report.series.extend(distance_series);

        let palate = self.palate.as_ref().expect("validate ran");
        let (contact, penetration) =
            eval::palate_contact(&asset, palate, self.config.gates.contact_eps_mm)?;
        report.gates.push(GateOutcome::max_of(
            "palate_penetration",
            &penetration,
            self.config.gates.penetration_mm,
        ));
        report.series.push(contact);
        report.series.push(penetration);

        if let Some(reference) = &self.reference {
            let frame = self.config.evaluation.reference_frame.expect("validated");
            let deformed = eval::deformed_mesh(&asset, MeshRole::Tongue, frame)?;
            let stats = eval::pose_similarity(
                &deformed,
                reference,
                self.config.evaluation.samples_per_triangle,
                self.config.evaluation.sample_offset,
            )?;
            for (name, value) in [
                ("pose_similarity.mean", stats.mean),
                ("pose_similarity.max", stats.max),
                ("pose_similarity.rms", stats.rms),
            ] {
                report.scalars.push(ScalarMetric {
                    name: name.into(),
                    unit: "mm".into(),
                    value,
                });
            }
            report.gates.push(GateOutcome::scalar(
                "pose_similarity",
                "pose_similarity.max",
                stats.max,
                self.config.gates.similarity_mm,
            ));
        }

        self.asset = Some(asset);
        let failed: Vec<&str> = report
            .gates
            .iter()
            .filter(|g| !g.pass)
            .map(|g| g.name.as_str())
            .collect();
        if failed.is_empty() {
            Ok((
                PhaseStatus::Passed,
                format!("{} gates passed", report.gates.len()),
            ))
        } else {
            Ok((
                PhaseStatus::GateFailed,
                format!("failed gates: {}", failed.join(", ")),
            ))
        }
    }

    fn package(&mut self, out_manifest: Option<&Path>) -> PhaseResult {
        let asset = self.asset.as_ref().expect("evaluate ran");
        match out_manifest {
            Some(path) => {
                write_asset(asset, path)?;
                let manifest_len = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
                let blob_len = std::fs::metadata(buffer_path(path))
                    .map(|m| m.len())
                    .unwrap_or(0);
                Ok((
                    PhaseStatus::Passed,
                    format!(
                        "wrote {} ({manifest_len} B manifest, {blob_len} B buffers)",
                        path.display()
                    ),
                ))
            }
            None => Ok((
                PhaseStatus::Passed,
                "asset built; no output path requested".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests;
