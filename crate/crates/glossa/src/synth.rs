//! Deterministic synthetic fixtures: desk-scale scenes exercising the full
//! pipeline without any recorded corpus data.
//!
//! Each scenario writes meshes (OBJ), an EMA trajectory (canonical CSV),
//! and a compile config into an output directory; `penetrate` additionally
//! writes a directly-constructed asset with an exactly known palate
//! penetration, plus the palate mesh to evaluate it against. Identical
//! parameters produce byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compiler::{
    write_asset, AnimatedModelAsset, AssetError, CoilMarker, CoilSpec, CompileConfig, EmaFormat,
    EmaSource, EvaluationParams, GateThresholds, MeshPaths, MeshRole, MeshSkin, NamedMesh,
    Provenance, RegistrationConfig, RigParams, ValidationParams, TOOL_VERSION,
};
use crate::ema::{write_ema_csv, Articulator, CoilSample, EmaError, EmaTrajectory};
use crate::ik::{AnimationClip, IkConfig, TargetBinding, TargetFrame, TargetSequence, TargetTopology};
use crate::mesh::{write_obj, MeshError, TriMesh};
use crate::rig::{
    build_jaw_armature, build_tongue_armature, compute_skin_weights, forward_kinematics, Armature,
    Pose, RigError,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown scenario `{0}` (expected bind, fk-roundtrip, penetrate, or two-link)")]
    UnknownScenario(String),
    #[error("scenario needs at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Ema(#[from] EmaError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("config serialization: {0}")]
    Toml(#[from] toml::ser::Error),
}

/// The available synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Static targets at bind pose for every frame.
    Bind,
    /// Smooth sinusoidal joint motion; EMA recorded from FK effectors.
    FkRoundtrip,
    /// A trajectory crossing a flat palate at a known frame and depth,
    /// plus a compile fixture whose evaluation gate fails.
    Penetrate,
    /// Planar analytic two-link IK case.
    TwoLink,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Bind,
        Scenario::FkRoundtrip,
        Scenario::Penetrate,
        Scenario::TwoLink,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Bind => "bind",
            Scenario::FkRoundtrip => "fk-roundtrip",
            Scenario::Penetrate => "penetrate",
            Scenario::TwoLink => "two-link",
        }
    }
}

impl FromStr for Scenario {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bind" => Ok(Scenario::Bind),
            "fk-roundtrip" => Ok(Scenario::FkRoundtrip),
            "penetrate" => Ok(Scenario::Penetrate),
            "two-link" => Ok(Scenario::TwoLink),
            other => Err(SynthError::UnknownScenario(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub frames: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { frames: 500, seed: 0 }
    }
}

/// Paths produced by [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Compile config, when the scenario produces compile inputs.
    pub config: Option<PathBuf>,
    /// Directly-constructed asset manifest (`penetrate` only).
    pub asset: Option<PathBuf>,
    /// Palate mesh to evaluate the constructed asset against.
    pub eval_palate: Option<PathBuf>,
    /// Everything written, in write order.
    pub files: Vec<PathBuf>,
}

/// The fixed EMA sample rate used by all scenarios, Hz.
pub const SYNTH_RATE_HZ: f64 = 200.0;

/// The constructed penetrate clip crosses the palate at exactly this frame
/// and depth.
pub const PENETRATE_FRAME: usize = 10;
pub const PENETRATE_DEPTH_MM: f64 = 0.3;

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, SynthError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.files.push(path.clone());
        Ok(path)
    }
}

/// Generates the named scenario into `out_dir` (created if needed).
pub fn generate(
    scenario: Scenario,
    params: &SynthParams,
    out_dir: &Path,
) -> Result<SynthOutput, SynthError> {
    let min_frames = match scenario {
        Scenario::Penetrate => PENETRATE_FRAME + 3,
        _ => 2,
    };
    if params.frames < min_frames {
        return Err(SynthError::TooFewFrames {
            need: min_frames,
            got: params.frames,
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| SynthError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut w = Writer {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    match scenario {
        Scenario::Bind => vocal_tract_scene(&mut w, params, None, 25.0),
        Scenario::FkRoundtrip => vocal_tract_scene(&mut w, params, Some(0.06..0.10), 25.0),
        Scenario::Penetrate => penetrate_scene(&mut w, params),
        Scenario::TwoLink => two_link_scene(&mut w, params),
    }
}

/// Rectangular grid surface at constant z spanning `x = (x0, x1, nx)` by
/// `y = (y0, y1, ny)` nodes; `up` selects +z or -z normals.
fn grid_mesh(x: (f64, f64, usize), y: (f64, f64, usize), z: f64, up: bool) -> TriMesh {
    let (x0, x1, nx) = x;
    let (y0, y1, ny) = y;
    let dx = (x1 - x0) / (nx - 1) as f64;
    let dy = (y1 - y0) / (ny - 1) as f64;
    let mut vertices = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            vertices.push(Point3::new(x0 + dx * ix as f64, y0 + dy * iy as f64, z));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let a = (iy * nx + ix) as u32;
            let b = a + 1;
            let c = a + 1 + nx as u32;
            let d = a + nx as u32;
            if up {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, c, b]);
                triangles.push([a, d, c]);
            }
        }
    }
    TriMesh::new(vertices, triangles).expect("grid construction is non-degenerate")
}

/// The shared vocal-tract scene: three tongue coils on tongue-mesh grid
/// nodes, a jaw coil on a mandible node, and a configured hinge landmark.
struct Scene {
    tongue_binds: [Point3<f64>; 3],
    jaw_bind: Point3<f64>,
    hinge: [f64; 3],
}

impl Scene {
    fn standard() -> Self {
        Self {
            tongue_binds: [
                Point3::new(-30.0, 0.0, 0.0),
                Point3::new(-15.0, 0.0, 0.0),
                Point3::new(0.0, 0.0, 0.0),
            ],
            jaw_bind: Point3::new(10.0, 0.0, -30.0),
            hinge: [-40.0, 0.0, -20.0],
        }
    }

    fn tongue_mesh(&self) -> TriMesh {
        grid_mesh((-35.0, 5.0, 9), (-10.0, 10.0, 5), 0.0, true)
    }

    fn mandible_mesh(&self) -> TriMesh {
        grid_mesh((0.0, 20.0, 5), (-10.0, 10.0, 5), -30.0, true)
    }

    fn maxilla_mesh(&self) -> TriMesh {
        grid_mesh((-35.0, 5.0, 5), (-10.0, 10.0, 3), 15.0, false)
    }

    /// Flat palate with normals pointing down into the oral cavity.
    fn palate_mesh(&self, z: f64) -> TriMesh {
        grid_mesh((-35.0, 5.0, 9), (-10.0, 10.0, 5), z, false)
    }

    fn armature(&self, root_offset: f64) -> Result<Armature, RigError> {
        let tongue = build_tongue_armature(&self.tongue_binds, root_offset)?;
        let jaw = build_jaw_armature(
            &self.jaw_bind,
            &Point3::new(self.hinge[0], self.hinge[1], self.hinge[2]),
        )?;
        Armature::merge(&[&tongue, &jaw])
    }
}

/// Per-bone sinusoid; zero at t = 0, so frame 0 is exactly the bind pose.
struct Oscillator {
    axis: Vector3<f64>,
    amplitude_rad: f64,
    freq_hz: f64,
}

fn sample_oscillators(
    rng: &mut ChaCha8Rng,
    bones: usize,
    amplitude: std::ops::Range<f64>,
) -> Vec<Oscillator> {
    (0..bones)
        .map(|b| Oscillator {
            axis: if b % 2 == 0 {
                Vector3::y()
            } else {
                (Vector3::y() + Vector3::z() * 0.5).normalize()
            },
            amplitude_rad: rng.random_range(amplitude.clone()),
            freq_hz: rng.random_range(0.8..2.5),
        })
        .collect()
}

fn pose_at(oscillators: &[Oscillator], t: f64) -> Pose {
    Pose {
        rotations: oscillators
            .iter()
            .map(|o| {
                let angle =
                    o.amplitude_rad * (2.0 * std::f64::consts::PI * o.freq_hz * t).sin();
                UnitQuaternion::from_scaled_axis(o.axis * angle)
            })
            .collect(),
        root_translation: Vector3::zeros(),
    }
}

/// Records EMA frames from FK effector positions over a pose sequence.
fn record_ema(
    armature: &Armature,
    coil_bones: &[(&str, &str)],
    poses: &[Pose],
) -> Result<EmaTrajectory, SynthError> {
    let mut frames = Vec::with_capacity(poses.len());
    for pose in poses {
        let globals = forward_kinematics(armature, pose)?;
        let mut frame = Vec::with_capacity(coil_bones.len());
        for (_, bone_id) in coil_bones {
            let bone = armature.bone_index(bone_id).expect("scene bone");
            let position = armature.tail(bone, &globals);
            let axis = globals[bone].rotation * Vector3::x();
            frame.push(CoilSample::new(position, axis, 0.02));
        }
        frames.push(frame);
    }
    let coil_ids = coil_bones.iter().map(|(c, _)| c.to_string()).collect();
    Ok(EmaTrajectory::new(coil_ids, SYNTH_RATE_HZ, frames)?)
}

const SCENE_COIL_BONES: [(&str, &str); 4] = [
    ("T1", "tongue0"),
    ("T2", "tongue1"),
    ("T3", "tongue2"),
    ("J1", "jaw"),
];

fn standard_config(scene: &Scene, ik: IkConfig) -> CompileConfig {
    let mut coils = BTreeMap::new();
    for (i, id) in ["T1", "T2", "T3"].iter().enumerate() {
        coils.insert(
            id.to_string(),
            CoilSpec {
                articulator: Articulator::Tongue,
                chain_index: Some(i),
            },
        );
    }
    coils.insert(
        "J1".to_string(),
        CoilSpec {
            articulator: Articulator::Jaw,
            chain_index: None,
        },
    );
    CompileConfig {
        version: "config-v1".into(),
        meshes: MeshPaths {
            tongue: "tongue.obj".into(),
            mandible: "mandible.obj".into(),
            maxilla: "maxilla.obj".into(),
            palate: "palate.obj".into(),
        },
        ema: EmaSource {
            path: "ema.csv".into(),
            format: EmaFormat::Csv,
            channels: None,
            rate_hz: None,
        },
        coils,
        registration: RegistrationConfig::default(),
        rig: RigParams {
            falloff_sigma_mm: 5.0,
            root_offset_mm: 10.0,
            hinge_point: Some(scene.hinge),
        },
        ik,
        validation: ValidationParams::default(),
        gates: GateThresholds::default(),
        evaluation: EvaluationParams::default(),
    }
}

fn write_config(w: &mut Writer, config: &CompileConfig) -> Result<PathBuf, SynthError> {
    let text = toml::to_string_pretty(config)?;
    w.write("config.toml", text.as_bytes())
}

fn write_scene_meshes(w: &mut Writer, scene: &Scene, palate_z: f64) -> Result<(), SynthError> {
    w.write("tongue.obj", &write_obj(&scene.tongue_mesh()))?;
    w.write("mandible.obj", &write_obj(&scene.mandible_mesh()))?;
    w.write("maxilla.obj", &write_obj(&scene.maxilla_mesh()))?;
    w.write("palate.obj", &write_obj(&scene.palate_mesh(palate_z)))?;
    Ok(())
}

/// `bind` (no oscillation) and `fk-roundtrip` (sinusoidal motion within
/// the given amplitude range).
fn vocal_tract_scene(
    w: &mut Writer,
    params: &SynthParams,
    amplitude: Option<std::ops::Range<f64>>,
    palate_z: f64,
) -> Result<SynthOutput, SynthError> {
    let scene = Scene::standard();
    let armature = scene.armature(10.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let oscillators = amplitude
        .map(|range| sample_oscillators(&mut rng, armature.len(), range))
        .unwrap_or_default();
    let poses: Vec<Pose> = (0..params.frames)
        .map(|f| {
            if oscillators.is_empty() {
                armature.bind_pose()
            } else {
                pose_at(&oscillators, f as f64 / SYNTH_RATE_HZ)
            }
        })
        .collect();
    let trajectory = record_ema(&armature, &SCENE_COIL_BONES, &poses)?;

    write_scene_meshes(w, &scene, palate_z)?;
    w.write("ema.csv", &write_ema_csv(&trajectory))?;
    let config = write_config(w, &standard_config(&scene, IkConfig::default()))?;

    Ok(SynthOutput {
        config: Some(config),
        asset: None,
        eval_palate: None,
        files: w.files.clone(),
    })
}

/// Root translation of the constructed penetrate clip: a short pulse that
/// crosses the palate only at [`PENETRATE_FRAME`], by exactly
/// [`PENETRATE_DEPTH_MM`].
fn penetrate_translation(frame: usize) -> f64 {
    if frame == PENETRATE_FRAME {
        5.0 + PENETRATE_DEPTH_MM
    } else if frame.abs_diff(PENETRATE_FRAME) == 1 {
        4.0
    } else if frame.abs_diff(PENETRATE_FRAME) == 2 {
        2.0
    } else {
        0.0
    }
}

fn penetrate_scene(w: &mut Writer, params: &SynthParams) -> Result<SynthOutput, SynthError> {
    // Compile-route fixture: the tongue chain sweeps upward hard enough to
    // cross the lowered palate, so the evaluate phase's penetration gate
    // fails. A fixed 5 Hz sweep peaks by frame 10, keeping the crossing
    // independent of the requested frame count.
    let scene = Scene::standard();
    let armature = scene.armature(10.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let oscillators: Vec<Oscillator> = (0..armature.len())
        .map(|b| {
            if b < 3 {
                Oscillator {
                    axis: -Vector3::y(),
                    amplitude_rad: rng.random_range(0.20..0.24),
                    freq_hz: 5.0,
                }
            } else {
                Oscillator {
                    axis: Vector3::y(),
                    amplitude_rad: rng.random_range(0.03..0.06),
                    freq_hz: rng.random_range(1.0..2.0),
                }
            }
        })
        .collect();
    let poses: Vec<Pose> = (0..params.frames)
        .map(|f| pose_at(&oscillators, f as f64 / SYNTH_RATE_HZ))
        .collect();
    let trajectory = record_ema(&armature, &SCENE_COIL_BONES, &poses)?;

    write_scene_meshes(w, &scene, 5.0)?;
    w.write("ema.csv", &write_ema_csv(&trajectory))?;
    let config = write_config(w, &standard_config(&scene, IkConfig::default()))?;

    // Constructed-asset route: a rigid sheet 5 mm below a flat palate,
    // moved by a pure per-frame root translation, so the penetration
    // series is exact by construction (no solver in the loop).
    let sheet_z = -5.0;
    let coil_binds = [
        Point3::new(-10.0, 0.0, sheet_z),
        Point3::new(10.0, 0.0, sheet_z),
    ];
    let sheet_armature = build_tongue_armature(&coil_binds, 5.0)?;
    let sheet = grid_mesh((-20.0, 20.0, 9), (-10.0, 10.0, 5), sheet_z, true);
    let weights = compute_skin_weights(&sheet, &sheet_armature, 5.0)?;

    let bindings: Vec<TargetBinding> = [("P1", "tongue0"), ("P2", "tongue1")]
        .iter()
        .map(|(coil, bone)| TargetBinding {
            coil_id: coil.to_string(),
            bone_id: bone.to_string(),
            local_offset: Vector3::new(sheet_armature.bone(bone).unwrap().length, 0.0, 0.0),
            position_weight: 1.0,
            orientation_weight: 0.0,
        })
        .collect();
    let mut poses = Vec::with_capacity(params.frames);
    let mut frames = Vec::with_capacity(params.frames);
    for f in 0..params.frames {
        let dz = penetrate_translation(f);
        let mut pose = sheet_armature.bind_pose();
        pose.root_translation = Vector3::new(0.0, 0.0, dz);
        poses.push(pose);
        frames.push(TargetFrame {
            positions: coil_binds
                .iter()
                .map(|p| p + Vector3::new(0.0, 0.0, dz))
                .collect(),
            orientations: vec![None; bindings.len()],
            valid: vec![true; bindings.len()],
        });
    }
    let descriptor = format!(
        "glossa-synth:penetrate:frames={}:seed={}",
        params.frames, params.seed
    );
    let asset = AnimatedModelAsset {
        meshes: vec![NamedMesh {
            name: "tongue".into(),
            role: MeshRole::Tongue,
            mesh: sheet,
        }],
        armature: sheet_armature,
        skins: vec![MeshSkin {
            mesh_name: "tongue".into(),
            weights,
        }],
        clip: AnimationClip {
            frame_rate_hz: SYNTH_RATE_HZ,
            poses,
            residuals_mm: vec![0.0; params.frames],
            iterations: vec![0; params.frames],
            held: vec![false; params.frames],
        },
        targets: TargetSequence {
            topology: TargetTopology { bindings },
            frames,
            rate_hz: SYNTH_RATE_HZ,
        },
        markers: vec![
            CoilMarker {
                coil_id: "P1".into(),
                articulator: Articulator::Tongue,
                chain_index: Some(0),
                position: coil_binds[0],
            },
            CoilMarker {
                coil_id: "P2".into(),
                articulator: Articulator::Tongue,
                chain_index: Some(1),
                position: coil_binds[1],
            },
        ],
        provenance: Provenance {
            config_sha256: hex::encode(Sha256::digest(descriptor.as_bytes())),
            inputs: Vec::new(),
            tool_version: TOOL_VERSION.into(),
        },
    };
    let asset_path = w.dir.join("asset.json");
    write_asset(&asset, &asset_path)?;
    w.files.push(asset_path.clone());
    w.files.push(crate::compiler::buffer_path(&asset_path));

    let eval_palate = grid_mesh((-25.0, 25.0, 11), (-15.0, 15.0, 7), 0.0, false);
    let eval_palate_path = w.write("eval_palate.obj", &write_obj(&eval_palate))?;

    Ok(SynthOutput {
        config: Some(config),
        asset: Some(asset_path),
        eval_palate: Some(eval_palate_path),
        files: w.files.clone(),
    })
}

/// Bind positions of the planar two-link chain: base at the origin, both
/// links 1 mm, along +x.
pub fn two_link_coils() -> [Point3<f64>; 2] {
    [Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]
}

/// The two-link armature used by the scenario (the root bone's tail is
/// pinned by the first coil).
pub fn two_link_armature() -> Armature {
    build_tongue_armature(&two_link_coils(), 1.0).expect("two-link chain is valid")
}

fn two_link_scene(w: &mut Writer, params: &SynthParams) -> Result<SynthOutput, SynthError> {
    let coils = two_link_coils();
    let n = params.frames;
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        // The tip sweeps a quarter circle around the pinned root tail,
        // ending exactly at the analytic (0, 90 degree) configuration.
        let a = std::f64::consts::FRAC_PI_2 * k as f64 / (n - 1) as f64;
        let tip = Point3::new(1.0 + a.cos(), a.sin(), 0.0);
        let tangent = Vector3::new(-a.sin(), a.cos(), 0.0);
        frames.push(vec![
            CoilSample::new(coils[0], Vector3::x(), 0.0),
            CoilSample::new(tip, tangent, 0.0),
        ]);
    }
    let trajectory = EmaTrajectory::new(vec!["C0".into(), "C1".into()], SYNTH_RATE_HZ, frames)?;

    w.write("tongue.obj", &write_obj(&grid_mesh((0.0, 2.0, 5), (-0.4, 0.4, 3), 0.0, true)))?;
    w.write("mandible.obj", &write_obj(&grid_mesh((0.0, 2.0, 3), (-0.4, 0.4, 2), -10.0, true)))?;
    w.write("maxilla.obj", &write_obj(&grid_mesh((0.0, 2.0, 3), (-0.4, 0.4, 2), 12.0, false)))?;
    w.write("palate.obj", &write_obj(&grid_mesh((-0.5, 2.5, 4), (-0.6, 0.6, 3), 10.0, false)))?;
    w.write("ema.csv", &write_ema_csv(&trajectory))?;

    let mut coils_map = BTreeMap::new();
    for (i, id) in ["C0", "C1"].iter().enumerate() {
        coils_map.insert(
            id.to_string(),
            CoilSpec {
                articulator: Articulator::Tongue,
                chain_index: Some(i),
            },
        );
    }
    let config = CompileConfig {
        version: "config-v1".into(),
        meshes: MeshPaths {
            tongue: "tongue.obj".into(),
            mandible: "mandible.obj".into(),
            maxilla: "maxilla.obj".into(),
            palate: "palate.obj".into(),
        },
        ema: EmaSource {
            path: "ema.csv".into(),
            format: EmaFormat::Csv,
            channels: None,
            rate_hz: None,
        },
        coils: coils_map,
        registration: RegistrationConfig::default(),
        rig: RigParams {
            falloff_sigma_mm: 5.0,
            root_offset_mm: 1.0,
            hinge_point: None,
        },
        // Tight tolerance: the 1 mm levers need a small positional
        // residual for milliradian joint-angle accuracy.
        ik: IkConfig {
            tolerance_mm: 1e-4,
            max_iterations: 200,
            ..IkConfig::default()
        },
        validation: ValidationParams::default(),
        gates: GateThresholds::default(),
        evaluation: EvaluationParams::default(),
    };
    let config_path = write_config(w, &config)?;

    Ok(SynthOutput {
        config: Some(config_path),
        asset: None,
        eval_palate: None,
        files: w.files.clone(),
    })
}
