//! Compile configuration: a versioned TOML document (`config-v1`).
//!
//! Paths are resolved relative to the config file's directory. Every
//! default recorded here is overridable in the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ema::{Articulator, CoilRole};
use crate::ik::IkConfig;

use super::CompileError;

pub const CONFIG_VERSION: &str = "config-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileConfig {
    pub version: String,
    pub meshes: MeshPaths,
    pub ema: EmaSource,
    /// Coil id to articulator role.
    pub coils: BTreeMap<String, CoilSpec>,
    #[serde(default)]
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub rig: RigParams,
    #[serde(default)]
    pub ik: IkConfig,
    #[serde(default)]
    pub validation: ValidationParams,
    #[serde(default)]
    pub gates: GateThresholds,
    #[serde(default)]
    pub evaluation: EvaluationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPaths {
    pub tongue: PathBuf,
    pub mandible: PathBuf,
    pub maxilla: PathBuf,
    pub palate: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmaFormat {
    Csv,
    Pos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaSource {
    pub path: PathBuf,
    pub format: EmaFormat,
    /// Channel count for `.pos` input (out-of-band metadata).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    /// Sample rate for `.pos` input, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    pub articulator: Articulator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Translation, mm.
    pub translation: [f64; 3],
    /// Unit quaternion (w, x, y, z).
    pub rotation: [f64; 4],
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

impl RegistrationConfig {
    pub fn isometry(&self) -> Result<Isometry3<f64>, CompileError> {
        let q = Quaternion::new(
            self.rotation[0],
            self.rotation[1],
            self.rotation[2],
            self.rotation[3],
        );
        if q.norm() < 1e-6 {
            return Err(CompileError::Config(
                "registration rotation quaternion is near zero".into(),
            ));
        }
        Ok(Isometry3::from_parts(
            Translation3::new(self.translation[0], self.translation[1], self.translation[2]),
            UnitQuaternion::new_normalize(q),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigParams {
    /// Gaussian skin-weight falloff, mm.
    pub falloff_sigma_mm: f64,
    /// Tongue root bone length behind the rearmost coil, mm.
    pub root_offset_mm: f64,
    /// Jaw hinge landmark (condyle approximation); required when a jaw
    /// coil is rigged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hinge_point: Option<[f64; 3]>,
}

impl Default for RigParams {
    fn default() -> Self {
        Self {
            falloff_sigma_mm: 5.0,
            root_offset_mm: 10.0,
            hinge_point: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationParams {
    /// Samples with rms above this are flagged invalid, mm.
    pub max_rms_mm: f64,
    /// Longest tolerated invalid run, frames.
    pub max_gap_frames: usize,
    /// Optional odd moving-average window applied before solving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth_window: Option<usize>,
    /// Optional resample rate applied before solving, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_hz: Option<f64>,
}

impl Default for ValidationParams {
    fn default() -> Self {
        Self {
            max_rms_mm: 0.3,
            max_gap_frames: 5,
            smooth_window: None,
            resample_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    /// Max coil-target-to-surface distance over all frames, mm.
    pub distance_mm: f64,
    /// Max palate penetration depth over all frames, mm.
    pub penetration_mm: f64,
    /// Proximity counted as palate contact, mm.
    pub contact_eps_mm: f64,
    /// Max symmetric surface distance against the reference mesh, mm.
    pub similarity_mm: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self {
            distance_mm: 1.0,
            penetration_mm: 0.2,
            contact_eps_mm: 0.5,
            similarity_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationParams {
    /// Interior surface samples per triangle for similarity statistics.
    pub samples_per_triangle: usize,
    /// Offset into the low-discrepancy sample sequence; recorded in reports.
    pub sample_offset: u64,
    /// Reference tongue mesh for pose-similarity evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_mesh: Option<PathBuf>,
    /// Clip frame compared against the reference mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_frame: Option<usize>,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        Self {
            samples_per_triangle: 4,
            sample_offset: 0,
            reference_mesh: None,
            reference_frame: None,
        }
    }
}

/// A parsed config plus the SHA-256 of its raw bytes (the provenance hash).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: CompileConfig,
    pub sha256: String,
}

impl CompileConfig {
    /// Coil roles in deterministic solve order: tongue coils by chain
    /// index, then jaw, then the rest alphabetically.
    pub fn roles(&self) -> Vec<CoilRole> {
        let mut roles: Vec<CoilRole> = self
            .coils
            .iter()
            .map(|(id, spec)| CoilRole {
                coil_id: id.clone(),
                articulator: spec.articulator,
                chain_index: spec.chain_index,
            })
            .collect();
        roles.sort_by_key(|r| match r.articulator {
            Articulator::Tongue => (0, r.chain_index.unwrap_or(usize::MAX), r.coil_id.clone()),
            Articulator::Jaw => (1, 0, r.coil_id.clone()),
            Articulator::Reference => (2, 0, r.coil_id.clone()),
            Articulator::Other => (3, 0, r.coil_id.clone()),
        });
        roles
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if self.version != CONFIG_VERSION {
            return Err(CompileError::Config(format!(
                "unsupported config version `{}` (expected `{CONFIG_VERSION}`)",
                self.version
            )));
        }
        for (name, path) in [
            ("tongue", &self.meshes.tongue),
            ("mandible", &self.meshes.mandible),
            ("maxilla", &self.meshes.maxilla),
            ("palate", &self.meshes.palate),
            ("ema", &self.ema.path),
        ] {
            if path.as_os_str().is_empty() {
                return Err(CompileError::Config(format!("{name} path is empty")));
            }
        }
        if self.ema.format == EmaFormat::Pos && (self.ema.channels.is_none() || self.ema.rate_hz.is_none()) {
            return Err(CompileError::Config(
                "pos input requires `channels` and `rate_hz`".into(),
            ));
        }
        let thresholds = [
            ("distance_mm", self.gates.distance_mm),
            ("penetration_mm", self.gates.penetration_mm),
            ("contact_eps_mm", self.gates.contact_eps_mm),
            ("similarity_mm", self.gates.similarity_mm),
            ("falloff_sigma_mm", self.rig.falloff_sigma_mm),
            ("root_offset_mm", self.rig.root_offset_mm),
            ("max_rms_mm", self.validation.max_rms_mm),
            ("tolerance_mm", self.ik.tolerance_mm),
            ("damping_lambda", self.ik.damping_lambda),
        ];
        for (name, value) in thresholds {
            if !value.is_finite() || value <= 0.0 {
                return Err(CompileError::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.ik.max_iterations == 0 {
            return Err(CompileError::Config("max_iterations must be >= 1".into()));
        }
        let mut chain_indices = std::collections::BTreeSet::new();
        for (id, spec) in &self.coils {
            if spec.articulator == Articulator::Tongue {
                let chain = spec.chain_index.ok_or_else(|| {
                    CompileError::Config(format!("tongue coil `{id}` needs a chain_index"))
                })?;
                if !chain_indices.insert(chain) {
                    return Err(CompileError::Config(format!(
                        "duplicate tongue chain_index {chain}"
                    )));
                }
            }
        }
        if self.evaluation.reference_mesh.is_some() && self.evaluation.reference_frame.is_none() {
            return Err(CompileError::Config(
                "reference_mesh requires reference_frame".into(),
            ));
        }
        if self.evaluation.samples_per_triangle == 0 {
            return Err(CompileError::Config(
                "samples_per_triangle must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Resolves every path in the config relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.meshes.tongue);
        resolve(&mut self.meshes.mandible);
        resolve(&mut self.meshes.maxilla);
        resolve(&mut self.meshes.palate);
        resolve(&mut self.ema.path);
        if let Some(reference) = &mut self.evaluation.reference_mesh {
            if reference.is_relative() {
                *reference = base.join(&reference);
            }
        }
    }
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, CompileError> {
        let bytes = std::fs::read(path).map_err(|e| CompileError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| CompileError::Config(format!("config is not UTF-8: {e}")))?;
        let mut config: CompileConfig = toml::from_str(text)
            .map_err(|e| CompileError::Config(format!("config parse error: {e}")))?;
        config.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(Self {
            config,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}
