//! The animated model asset container (`asset-v1`).
//!
//! An asset is two files: a human-readable JSON manifest (structure, names,
//! parameters, hashes) and a little-endian binary buffer file holding the
//! vertex, index, weight, pose, and target arrays. The manifest's buffer
//! table declares offset, length, dtype, and SHA-256 per buffer; buffers
//! tile the blob exactly with no gaps or overlaps. `read(write(a))`
//! reproduces `a` with bit-identical binary fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ema::Articulator;
use crate::ik::{AnimationClip, TargetBinding, TargetFrame, TargetSequence, TargetTopology};
use crate::mesh::TriMesh;
use crate::rig::{Armature, Bone, Pose, SkinWeights, MAX_INFLUENCES};

pub const ASSET_VERSION: &str = "asset-v1";

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported asset version `{found}` (expected `{expected}`)")]
    UnsupportedVersion { found: String, expected: String },
    #[error("buffer `{buffer}` failed its integrity check")]
    Integrity { buffer: String },
    #[error("buffer `{buffer}`: {msg}")]
    Layout { buffer: String, msg: String },
    #[error("missing buffer `{0}`")]
    MissingBuffer(String),
    #[error("invalid asset: {0}")]
    Invalid(String),
}

/// Which articulator a packaged mesh represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshRole {
    Tongue,
    Mandible,
    Maxilla,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMesh {
    pub name: String,
    pub role: MeshRole,
    pub mesh: TriMesh,
}

/// Skin binding for one packaged mesh; meshes without one are static.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSkin {
    pub mesh_name: String,
    pub weights: SkinWeights,
}

/// Coil bind position, packaged so downstream renderers can draw the coils
/// as spheres.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilMarker {
    pub coil_id: String,
    pub articulator: Articulator,
    pub chain_index: Option<usize>,
    pub position: Point3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub inputs: Vec<InputHash>,
    pub tool_version: String,
}

/// The compiled deliverable: bind meshes, rig, weights, solved clip, the
/// target sequence that drove it, coil markers, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimatedModelAsset {
    pub meshes: Vec<NamedMesh>,
    pub armature: Armature,
    pub skins: Vec<MeshSkin>,
    pub clip: AnimationClip,
    pub targets: TargetSequence,
    pub markers: Vec<CoilMarker>,
    pub provenance: Provenance,
}

impl AnimatedModelAsset {
    pub fn mesh(&self, role: MeshRole) -> Option<&NamedMesh> {
        self.meshes.iter().find(|m| m.role == role)
    }

    pub fn skin_for(&self, mesh_name: &str) -> Option<&MeshSkin> {
        self.skins.iter().find(|s| s.mesh_name == mesh_name)
    }

    pub fn frame_count(&self) -> usize {
        self.clip.frame_count()
    }

    pub fn validate(&self) -> Result<(), AssetError> {
        if self.provenance.config_sha256.is_empty() || self.provenance.tool_version.is_empty() {
            return Err(AssetError::Invalid("provenance hashes missing".into()));
        }
        for skin in &self.skins {
            let mesh = self
                .meshes
                .iter()
                .find(|m| m.name == skin.mesh_name)
                .ok_or_else(|| {
                    AssetError::Invalid(format!("skin references unknown mesh `{}`", skin.mesh_name))
                })?;
            if skin.weights.vertex_count() != mesh.mesh.vertices().len() {
                return Err(AssetError::Invalid(format!(
                    "skin for `{}` covers {} vertices, mesh has {}",
                    skin.mesh_name,
                    skin.weights.vertex_count(),
                    mesh.mesh.vertices().len()
                )));
            }
            for id in &skin.weights.bone_ids {
                if self.armature.bone_index(id).is_none() {
                    return Err(AssetError::Invalid(format!(
                        "skin weight references unknown bone `{id}`"
                    )));
                }
            }
            for influences in &skin.weights.influences {
                let sum: f64 = influences.iter().map(|(_, w)| w).sum();
                if (sum - 1.0).abs() > 1e-6 || influences.len() > MAX_INFLUENCES {
                    return Err(AssetError::Invalid("skin weights malformed".into()));
                }
            }
        }
        if self.clip.poses.is_empty() {
            return Err(AssetError::Invalid("clip has no frames".into()));
        }
        for pose in &self.clip.poses {
            if pose.rotations.len() != self.armature.len() {
                return Err(AssetError::Invalid("clip does not match armature".into()));
            }
        }
        if self.clip.residuals_mm.len() != self.clip.poses.len()
            || self.clip.iterations.len() != self.clip.poses.len()
            || self.clip.held.len() != self.clip.poses.len()
        {
            return Err(AssetError::Invalid("clip diagnostics incomplete".into()));
        }
        if self.targets.frames.len() != self.clip.poses.len() {
            return Err(AssetError::Invalid(
                "target sequence does not match clip length".into(),
            ));
        }
        for binding in &self.targets.topology.bindings {
            if self.armature.bone_index(&binding.bone_id).is_none() {
                return Err(AssetError::Invalid(format!(
                    "target binding references unknown bone `{}`",
                    binding.bone_id
                )));
            }
        }
        Ok(())
    }
}

// --- manifest schema ---

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    tool_version: String,
    buffer_file: String,
    meshes: Vec<MeshEntry>,
    armature: Vec<BoneEntry>,
    skins: Vec<SkinEntry>,
    clip: ClipEntry,
    targets: TargetsEntry,
    markers: Vec<MarkerEntry>,
    provenance: Provenance,
    buffers: Vec<BufferDesc>,
}

#[derive(Serialize, Deserialize)]
struct MeshEntry {
    name: String,
    role: MeshRole,
    vertex_count: usize,
    triangle_count: usize,
    vertices: String,
    indices: String,
}

#[derive(Serialize, Deserialize)]
struct BoneEntry {
    id: String,
    parent: Option<String>,
    rest_translation: [f64; 3],
    /// w, x, y, z.
    rest_rotation: [f64; 4],
    length: f64,
}

#[derive(Serialize, Deserialize)]
struct SkinEntry {
    mesh: String,
    bone_ids: Vec<String>,
    bones: String,
    weights: String,
}

#[derive(Serialize, Deserialize)]
struct ClipEntry {
    frame_rate_hz: f64,
    frame_count: usize,
    bone_count: usize,
    rotations: String,
    root_translations: String,
    residuals: String,
    iterations: String,
    held: String,
}

#[derive(Serialize, Deserialize)]
struct TargetsEntry {
    rate_hz: f64,
    bindings: Vec<BindingEntry>,
    positions: String,
    orientations: String,
    flags: String,
}

#[derive(Serialize, Deserialize)]
struct BindingEntry {
    coil_id: String,
    bone_id: String,
    local_offset: [f64; 3],
    position_weight: f64,
    orientation_weight: f64,
}

#[derive(Serialize, Deserialize)]
struct MarkerEntry {
    coil_id: String,
    articulator: Articulator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain_index: Option<usize>,
    position: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct BufferDesc {
    name: String,
    dtype: String,
    count: usize,
    offset: usize,
    byte_len: usize,
    sha256: String,
}

const FLAG_VALID: u8 = 1;
const FLAG_HAS_ORIENTATION: u8 = 2;
/// Padding value for unused skin influence slots.
const NO_BONE: u32 = u32::MAX;

struct BufferWriter {
    blob: Vec<u8>,
    descs: Vec<BufferDesc>,
}

impl BufferWriter {
    fn new() -> Self {
        Self {
            blob: Vec::new(),
            descs: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, dtype: &str, count: usize, bytes: Vec<u8>) -> String {
        let offset = self.blob.len();
        let sha256 = hex::encode(Sha256::digest(&bytes));
        self.descs.push(BufferDesc {
            name: name.to_string(),
            dtype: dtype.to_string(),
            count,
            offset,
            byte_len: bytes.len(),
            sha256,
        });
        self.blob.extend_from_slice(&bytes);
        name.to_string()
    }

    fn push_f64(&mut self, name: &str, data: &[f64]) -> String {
        let bytes = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(name, "f64", data.len(), bytes)
    }

    fn push_u32(&mut self, name: &str, data: &[u32]) -> String {
        let bytes = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(name, "u32", data.len(), bytes)
    }

    fn push_u8(&mut self, name: &str, data: &[u8]) -> String {
        self.push(name, "u8", data.len(), data.to_vec())
    }
}

struct BufferReader<'a> {
    blob: &'a [u8],
    descs: BTreeMap<&'a str, &'a BufferDesc>,
}

impl<'a> BufferReader<'a> {
    /// Verifies the layout audit: buffers tile the blob exactly.
    fn new(blob: &'a [u8], descs: &'a [BufferDesc]) -> Result<Self, AssetError> {
        let mut sorted: Vec<&BufferDesc> = descs.iter().collect();
        sorted.sort_by_key(|d| d.offset);
        let mut cursor = 0;
        for d in &sorted {
            if d.offset != cursor {
                return Err(AssetError::Layout {
                    buffer: d.name.clone(),
                    msg: format!("offset {} leaves a gap or overlap at {cursor}", d.offset),
                });
            }
            cursor += d.byte_len;
        }
        if cursor != blob.len() {
            return Err(AssetError::Layout {
                buffer: "<blob>".into(),
                msg: format!("buffers cover {cursor} bytes, file has {}", blob.len()),
            });
        }
        Ok(Self {
            blob,
            descs: descs.iter().map(|d| (d.name.as_str(), d)).collect(),
        })
    }

    fn raw(&self, name: &str, dtype: &str) -> Result<&'a [u8], AssetError> {
        let desc = self
            .descs
            .get(name)
            .ok_or_else(|| AssetError::MissingBuffer(name.to_string()))?;
        if desc.dtype != dtype {
            return Err(AssetError::Layout {
                buffer: name.to_string(),
                msg: format!("dtype {} where {dtype} expected", desc.dtype),
            });
        }
        let bytes = &self.blob[desc.offset..desc.offset + desc.byte_len];
        if hex::encode(Sha256::digest(bytes)) != desc.sha256 {
            return Err(AssetError::Integrity {
                buffer: name.to_string(),
            });
        }
        Ok(bytes)
    }

    fn f64s(&self, name: &str) -> Result<Vec<f64>, AssetError> {
        let bytes = self.raw(name, "f64")?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&self, name: &str) -> Result<Vec<u32>, AssetError> {
        let bytes = self.raw(name, "u32")?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u8s(&self, name: &str) -> Result<Vec<u8>, AssetError> {
        Ok(self.raw(name, "u8")?.to_vec())
    }
}

/// Buffer file path: the manifest path with a `.bin` extension.
pub fn buffer_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Serializes the asset to `manifest_path` plus a sibling `.bin` buffer
/// file. Writes go to temp files first and are renamed into place, the
/// manifest last, so a failed write leaves no usable asset.
pub fn write_asset(asset: &AnimatedModelAsset, manifest_path: &Path) -> Result<(), AssetError> {
    asset.validate()?;
    let (manifest_bytes, blob) = encode(asset, manifest_path)?;

    if let Some(parent) = manifest_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| AssetError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
    }
    let bin_path = buffer_path(manifest_path);
    atomic_write(&bin_path, &blob)?;
    atomic_write(manifest_path, &manifest_bytes)?;
    Ok(())
}

/// Serializes the asset without touching the filesystem; returns
/// (manifest bytes, buffer blob).
pub fn encode(
    asset: &AnimatedModelAsset,
    manifest_path: &Path,
) -> Result<(Vec<u8>, Vec<u8>), AssetError> {
    let mut w = BufferWriter::new();

    let meshes = asset
        .meshes
        .iter()
        .map(|m| {
            let flat_v: Vec<f64> = m
                .mesh
                .vertices()
                .iter()
                .flat_map(|v| [v.x, v.y, v.z])
                .collect();
            let flat_i: Vec<u32> = m.mesh.triangles().iter().flatten().copied().collect();
            MeshEntry {
                name: m.name.clone(),
                role: m.role,
                vertex_count: m.mesh.vertices().len(),
                triangle_count: m.mesh.triangles().len(),
                vertices: w.push_f64(&format!("mesh.{}.vertices", m.name), &flat_v),
                indices: w.push_u32(&format!("mesh.{}.indices", m.name), &flat_i),
            }
        })
        .collect();

    let armature = asset
        .armature
        .bones()
        .iter()
        .map(|b| BoneEntry {
            id: b.id.clone(),
            parent: b.parent.clone(),
            rest_translation: b.rest_local.translation.vector.into(),
            rest_rotation: quat_wxyz(&b.rest_local.rotation),
            length: b.length,
        })
        .collect();

    let skins = asset
        .skins
        .iter()
        .map(|s| {
            let count = s.weights.vertex_count();
            let mut bones = vec![NO_BONE; count * MAX_INFLUENCES];
            let mut weights = vec![0.0f64; count * MAX_INFLUENCES];
            for (v, influences) in s.weights.influences.iter().enumerate() {
                for (k, &(bone, weight)) in influences.iter().enumerate() {
                    bones[v * MAX_INFLUENCES + k] = bone;
                    weights[v * MAX_INFLUENCES + k] = weight;
                }
            }
            SkinEntry {
                mesh: s.mesh_name.clone(),
                bone_ids: s.weights.bone_ids.clone(),
                bones: w.push_u32(&format!("skin.{}.bones", s.mesh_name), &bones),
                weights: w.push_f64(&format!("skin.{}.weights", s.mesh_name), &weights),
            }
        })
        .collect();

    let frame_count = asset.clip.frame_count();
    let bone_count = asset.armature.len();
    let mut rotations = Vec::with_capacity(frame_count * bone_count * 4);
    let mut root_translations = Vec::with_capacity(frame_count * 3);
    for pose in &asset.clip.poses {
        for q in &pose.rotations {
            rotations.extend(quat_wxyz(q));
        }
        root_translations.extend([
            pose.root_translation.x,
            pose.root_translation.y,
            pose.root_translation.z,
        ]);
    }
    let clip = ClipEntry {
        frame_rate_hz: asset.clip.frame_rate_hz,
        frame_count,
        bone_count,
        rotations: w.push_f64("clip.rotations", &rotations),
        root_translations: w.push_f64("clip.root_translations", &root_translations),
        residuals: w.push_f64("clip.residuals", &asset.clip.residuals_mm),
        iterations: w.push_u32("clip.iterations", &asset.clip.iterations),
        held: w.push_u8(
            "clip.held",
            &asset.clip.held.iter().map(|&h| h as u8).collect::<Vec<_>>(),
        ),
    };

    let coil_count = asset.targets.topology.bindings.len();
    let mut positions = Vec::with_capacity(frame_count * coil_count * 3);
    let mut orientations = Vec::with_capacity(frame_count * coil_count * 3);
    let mut flags = Vec::with_capacity(frame_count * coil_count);
    for frame in &asset.targets.frames {
        for i in 0..coil_count {
            let p = frame.positions[i];
            positions.extend([p.x, p.y, p.z]);
            match frame.orientations[i] {
                Some(axis) => {
                    orientations.extend([axis.x, axis.y, axis.z]);
                    flags.push(if frame.valid[i] {
                        FLAG_VALID | FLAG_HAS_ORIENTATION
                    } else {
                        FLAG_HAS_ORIENTATION
                    });
                }
                None => {
                    orientations.extend([0.0, 0.0, 0.0]);
                    flags.push(if frame.valid[i] { FLAG_VALID } else { 0 });
                }
            }
        }
    }
    let targets = TargetsEntry {
        rate_hz: asset.targets.rate_hz,
        bindings: asset
            .targets
            .topology
            .bindings
            .iter()
            .map(|b| BindingEntry {
                coil_id: b.coil_id.clone(),
                bone_id: b.bone_id.clone(),
                local_offset: b.local_offset.into(),
                position_weight: b.position_weight,
                orientation_weight: b.orientation_weight,
            })
            .collect(),
        positions: w.push_f64("targets.positions", &positions),
        orientations: w.push_f64("targets.orientations", &orientations),
        flags: w.push_u8("targets.flags", &flags),
    };

    let markers = asset
        .markers
        .iter()
        .map(|m| MarkerEntry {
            coil_id: m.coil_id.clone(),
            articulator: m.articulator,
            chain_index: m.chain_index,
            position: m.position.coords.into(),
        })
        .collect();

    let manifest = Manifest {
        version: ASSET_VERSION.to_string(),
        tool_version: asset.provenance.tool_version.clone(),
        buffer_file: buffer_path(manifest_path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "asset.bin".into()),
        meshes,
        armature,
        skins,
        clip,
        targets,
        markers,
        provenance: asset.provenance.clone(),
        buffers: w.descs,
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    manifest_bytes.push(b'\n');
    Ok((manifest_bytes, w.blob))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), AssetError> {
    let tmp = path.with_extension("tmp");
    let io_err = |source| AssetError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

pub fn read_asset(manifest_path: &Path) -> Result<AnimatedModelAsset, AssetError> {
    let manifest_bytes = std::fs::read(manifest_path).map_err(|e| AssetError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.version != ASSET_VERSION {
        return Err(AssetError::UnsupportedVersion {
            found: manifest.version,
            expected: ASSET_VERSION.to_string(),
        });
    }
    let bin_path = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&manifest.buffer_file);
    let blob = std::fs::read(&bin_path).map_err(|e| AssetError::Io {
        path: bin_path.display().to_string(),
        source: e,
    })?;
    decode(&manifest, &blob)
}

fn decode(manifest: &Manifest, blob: &[u8]) -> Result<AnimatedModelAsset, AssetError> {
    let r = BufferReader::new(blob, &manifest.buffers)?;
    let invalid = |msg: String| AssetError::Invalid(msg);

    let mut meshes = Vec::with_capacity(manifest.meshes.len());
    for entry in &manifest.meshes {
        let flat_v = r.f64s(&entry.vertices)?;
        let flat_i = r.u32s(&entry.indices)?;
        if flat_v.len() != entry.vertex_count * 3 || flat_i.len() != entry.triangle_count * 3 {
            return Err(invalid(format!("mesh `{}` buffer shape mismatch", entry.name)));
        }
        let vertices = flat_v
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        let triangles = flat_i.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mesh = TriMesh::new(vertices, triangles)
            .map_err(|e| invalid(format!("mesh `{}`: {e}", entry.name)))?;
        meshes.push(NamedMesh {
            name: entry.name.clone(),
            role: entry.role,
            mesh,
        });
    }

    let bones = manifest
        .armature
        .iter()
        .map(|b| Bone {
            id: b.id.clone(),
            parent: b.parent.clone(),
            rest_local: Isometry3::from_parts(
                Translation3::new(b.rest_translation[0], b.rest_translation[1], b.rest_translation[2]),
                wxyz_quat(&b.rest_rotation),
            ),
            length: b.length,
        })
        .collect();
    let armature = Armature::new(bones).map_err(|e| invalid(format!("armature: {e}")))?;

    let mut skins = Vec::with_capacity(manifest.skins.len());
    for entry in &manifest.skins {
        let bones = r.u32s(&entry.bones)?;
        let weights = r.f64s(&entry.weights)?;
        if bones.len() != weights.len() || bones.len() % MAX_INFLUENCES != 0 {
            return Err(invalid(format!("skin `{}` buffer shape mismatch", entry.mesh)));
        }
        let influences = bones
            .chunks_exact(MAX_INFLUENCES)
            .zip(weights.chunks_exact(MAX_INFLUENCES))
            .map(|(b, w)| {
                b.iter()
                    .zip(w)
                    .filter(|(&bone, _)| bone != NO_BONE)
                    .map(|(&bone, &weight)| (bone, weight))
                    .collect()
            })
            .collect();
        skins.push(MeshSkin {
            mesh_name: entry.mesh.clone(),
            weights: SkinWeights {
                bone_ids: entry.bone_ids.clone(),
                influences,
            },
        });
    }

    let frame_count = manifest.clip.frame_count;
    let bone_count = manifest.clip.bone_count;
    let rotations = r.f64s(&manifest.clip.rotations)?;
    let root_translations = r.f64s(&manifest.clip.root_translations)?;
    let residuals = r.f64s(&manifest.clip.residuals)?;
    let iterations = r.u32s(&manifest.clip.iterations)?;
    let held: Vec<bool> = r.u8s(&manifest.clip.held)?.iter().map(|&b| b != 0).collect();
    if rotations.len() != frame_count * bone_count * 4
        || root_translations.len() != frame_count * 3
        || residuals.len() != frame_count
        || iterations.len() != frame_count
        || held.len() != frame_count
    {
        return Err(invalid("clip buffer shape mismatch".into()));
    }
    let poses = (0..frame_count)
        .map(|f| {
            let rot = &rotations[f * bone_count * 4..(f + 1) * bone_count * 4];
            let t = &root_translations[f * 3..f * 3 + 3];
            Pose {
                rotations: rot
                    .chunks_exact(4)
                    .map(|q| wxyz_quat(&[q[0], q[1], q[2], q[3]]))
                    .collect(),
                root_translation: Vector3::new(t[0], t[1], t[2]),
            }
        })
        .collect();
    let clip = AnimationClip {
        frame_rate_hz: manifest.clip.frame_rate_hz,
        poses,
        residuals_mm: residuals,
        iterations,
        held,
    };

    let coil_count = manifest.targets.bindings.len();
    let positions = r.f64s(&manifest.targets.positions)?;
    let orientations = r.f64s(&manifest.targets.orientations)?;
    let flags = r.u8s(&manifest.targets.flags)?;
    if positions.len() != frame_count * coil_count * 3
        || orientations.len() != positions.len()
        || flags.len() != frame_count * coil_count
    {
        return Err(invalid("target buffer shape mismatch".into()));
    }
    let bindings = manifest
        .targets
        .bindings
        .iter()
        .map(|b| TargetBinding {
            coil_id: b.coil_id.clone(),
            bone_id: b.bone_id.clone(),
            local_offset: Vector3::new(b.local_offset[0], b.local_offset[1], b.local_offset[2]),
            position_weight: b.position_weight,
            orientation_weight: b.orientation_weight,
        })
        .collect();
    let frames = (0..frame_count)
        .map(|f| {
            let mut frame = TargetFrame {
                positions: Vec::with_capacity(coil_count),
                orientations: Vec::with_capacity(coil_count),
                valid: Vec::with_capacity(coil_count),
            };
            for c in 0..coil_count {
                let base = (f * coil_count + c) * 3;
                frame
                    .positions
                    .push(Point3::new(positions[base], positions[base + 1], positions[base + 2]));
                let flag = flags[f * coil_count + c];
                frame.orientations.push(if flag & FLAG_HAS_ORIENTATION != 0 {
                    Some(Vector3::new(
                        orientations[base],
                        orientations[base + 1],
                        orientations[base + 2],
                    ))
                } else {
                    None
                });
                frame.valid.push(flag & FLAG_VALID != 0);
            }
            frame
        })
        .collect();
    let targets = TargetSequence {
        topology: TargetTopology { bindings },
        frames,
        rate_hz: manifest.targets.rate_hz,
    };

    let markers = manifest
        .markers
        .iter()
        .map(|m| CoilMarker {
            coil_id: m.coil_id.clone(),
            articulator: m.articulator,
            chain_index: m.chain_index,
            position: Point3::new(m.position[0], m.position[1], m.position[2]),
        })
        .collect();

    let asset = AnimatedModelAsset {
        meshes,
        armature,
        skins,
        clip,
        targets,
        markers,
        provenance: manifest.provenance.clone(),
    };
    asset.validate()?;
    Ok(asset)
}

fn quat_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn wxyz_quat(v: &[f64; 4]) -> UnitQuaternion<f64> {
    // Bit-exact reconstruction; the values were unit at write time.
    UnitQuaternion::new_unchecked(Quaternion::new(v[0], v[1], v[2], v[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::{IkConfig, TargetWeights};
    use crate::rig::{build_tongue_armature, compute_skin_weights};

    fn sample_asset() -> AnimatedModelAsset {
        let coils = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(20.0, 0.0, 0.0),
        ];
        let armature = build_tongue_armature(&coils, 5.0).unwrap();
        let mesh = TriMesh::new(
            vec![
                Point3::new(0.0, -2.0, 0.0),
                Point3::new(20.0, -2.0, 0.0),
                Point3::new(20.0, 2.0, 0.0),
                Point3::new(0.0, 2.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let weights = compute_skin_weights(&mesh, &armature, 5.0).unwrap();
        let roles: Vec<crate::ema::CoilRole> = (0..3)
            .map(|i| crate::ema::CoilRole {
                coil_id: format!("T{}", i + 1),
                articulator: Articulator::Tongue,
                chain_index: Some(i),
            })
            .collect();
        let frame: Vec<crate::ema::CoilSample> = coils
            .iter()
            .map(|p| crate::ema::CoilSample::new(*p, nalgebra::Vector3::x(), 0.05))
            .collect();
        let traj = crate::ema::EmaTrajectory::new(
            vec!["T1".into(), "T2".into(), "T3".into()],
            200.0,
            vec![frame.clone(), frame.clone(), frame],
        )
        .unwrap();
        let targets = crate::ik::attach_targets(
            &armature,
            &roles,
            &traj,
            &Isometry3::identity(),
            TargetWeights::default(),
        )
        .unwrap();
        let clip = crate::ik::solve_sequence(&armature, &targets, &IkConfig::default()).unwrap();
        let markers = coils
            .iter()
            .enumerate()
            .map(|(i, p)| CoilMarker {
                coil_id: format!("T{}", i + 1),
                articulator: Articulator::Tongue,
                chain_index: Some(i),
                position: *p,
            })
            .collect();
        AnimatedModelAsset {
            meshes: vec![NamedMesh {
                name: "tongue".into(),
                role: MeshRole::Tongue,
                mesh,
            }],
            armature,
            skins: vec![MeshSkin {
                mesh_name: "tongue".into(),
                weights,
            }],
            clip,
            targets,
            markers,
            provenance: Provenance {
                config_sha256: "deadbeef".into(),
                inputs: vec![InputHash {
                    name: "ema.csv".into(),
                    sha256: "cafe".into(),
                }],
                tool_version: "0.1.0".into(),
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let asset = sample_asset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_asset(&asset, &path).unwrap();
        let read = read_asset(&path).unwrap();
        assert_eq!(read, asset);
        // Re-encoding the read asset reproduces both files byte for byte.
        let (m1, b1) = encode(&asset, &path).unwrap();
        let (m2, b2) = encode(&read, &path).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(b1, b2);
        assert_eq!(std::fs::read(&path).unwrap(), m1);
        assert_eq!(std::fs::read(buffer_path(&path)).unwrap(), b1);
    }

    #[test]
    fn corrupting_a_buffer_byte_names_the_buffer() {
        let asset = sample_asset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_asset(&asset, &path).unwrap();
        let bin = buffer_path(&path);
        let mut blob = std::fs::read(&bin).unwrap();
        blob[3] ^= 0x40;
        std::fs::write(&bin, blob).unwrap();
        match read_asset(&path).unwrap_err() {
            AssetError::Integrity { buffer } => {
                assert_eq!(buffer, "mesh.tongue.vertices");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let asset = sample_asset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_asset(&asset, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("asset-v1", "asset-v9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_asset(&path),
            Err(AssetError::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn buffers_tile_the_blob_exactly() {
        let asset = sample_asset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let (manifest_bytes, blob) = encode(&asset, &path).unwrap();
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes).unwrap();
        let mut descs: Vec<&BufferDesc> = manifest.buffers.iter().collect();
        descs.sort_by_key(|d| d.offset);
        let mut cursor = 0;
        for d in descs {
            assert_eq!(d.offset, cursor, "gap before {}", d.name);
            cursor += d.byte_len;
        }
        assert_eq!(cursor, blob.len());
    }

    #[test]
    fn truncated_blob_is_a_layout_error() {
        let asset = sample_asset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_asset(&asset, &path).unwrap();
        let bin = buffer_path(&path);
        let blob = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(read_asset(&path), Err(AssetError::Layout { .. })));
    }
}
