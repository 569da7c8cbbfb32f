//! Pseudo-skeletal armatures: construction, forward kinematics, skinning
//! weights, linear blend skinning, and rigid (Kabsch) fitting.
//!
//! An armature is a forest of bones ordered parent-before-child. Each bone
//! owns a rigid rest transform relative to its parent; the bone extends
//! along its local +x axis from head (origin) to tail (`length`, 0, 0). The
//! bind pose has identity local rotations by definition, so bind globals
//! are the accumulated rest transforms.

mod fit;
mod skinning;

pub use fit::{fit_rigid, RigidFit};
pub use skinning::{compute_skin_weights, skin, SkinWeights, MAX_INFLUENCES};

use std::collections::BTreeMap;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RigError {
    #[error("need at least {need} coil positions, got {got}")]
    TooFewCoils { need: usize, got: usize },
    #[error("consecutive coil positions {a} and {b} are coincident")]
    CoincidentCoils { a: usize, b: usize },
    #[error("root offset must be positive, got {0}")]
    BadRootOffset(f64),
    #[error("jaw coil and hinge point are coincident")]
    CoincidentHinge,
    #[error("duplicate bone id `{0}`")]
    DuplicateBone(String),
    #[error("bone `{bone}` references unknown or later parent `{parent}`")]
    BadParent { bone: String, parent: String },
    #[error("bone `{0}` has non-positive length")]
    BadLength(String),
    #[error("pose has {got} rotations, armature has {expected} bones")]
    PoseShape { got: usize, expected: usize },
    #[error("skin weights reference unknown bone `{0}`")]
    UnknownBone(String),
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("falloff sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("weights cover {got} vertices, mesh has {expected}")]
    WeightShape { got: usize, expected: usize },
    #[error("need at least 3 point correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("point correspondence counts differ: {a} vs {b}")]
    CountMismatch { a: usize, b: usize },
    #[error("degenerate (collinear) point configuration")]
    DegeneratePoints,
    #[error("global transform count {got} does not match bone count {expected}")]
    GlobalShape { got: usize, expected: usize },
}

/// One bone: a rigid rest transform relative to the parent and a length
/// along the local +x axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Bone {
    pub id: String,
    pub parent: Option<String>,
    pub rest_local: Isometry3<f64>,
    pub length: f64,
}

/// Forest of bones, parent-before-child; bind pose = identity local
/// rotations. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Armature {
    bones: Vec<Bone>,
    index: BTreeMap<String, usize>,
}

impl Armature {
    pub fn new(bones: Vec<Bone>) -> Result<Self, RigError> {
        let mut index = BTreeMap::new();
        for (i, bone) in bones.iter().enumerate() {
            if bone.length <= 0.0 {
                return Err(RigError::BadLength(bone.id.clone()));
            }
            if let Some(parent) = &bone.parent {
                match index.get(parent) {
                    Some(&p) if p < i => {}
                    _ => {
                        return Err(RigError::BadParent {
                            bone: bone.id.clone(),
                            parent: parent.clone(),
                        })
                    }
                }
            }
            if index.insert(bone.id.clone(), i).is_some() {
                return Err(RigError::DuplicateBone(bone.id.clone()));
            }
        }
        Ok(Self { bones, index })
    }

    /// Concatenates disjoint armatures (e.g. tongue chain + jaw) into one
    /// forest; bone ids must stay unique.
    pub fn merge(parts: &[&Armature]) -> Result<Self, RigError> {
        let bones = parts
            .iter()
            .flat_map(|a| a.bones.iter().cloned())
            .collect();
        Self::new(bones)
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn bone_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn bone(&self, id: &str) -> Option<&Bone> {
        self.bone_index(id).map(|i| &self.bones[i])
    }

    pub fn len(&self) -> usize {
        self.bones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bones.is_empty()
    }

    /// Identity-rotation pose (the bind pose).
    pub fn bind_pose(&self) -> Pose {
        Pose {
            rotations: vec![UnitQuaternion::identity(); self.bones.len()],
            root_translation: Vector3::zeros(),
        }
    }

    /// Global transforms at bind: accumulated rest transforms.
    pub fn bind_globals(&self) -> Vec<Isometry3<f64>> {
        forward_kinematics(self, &self.bind_pose()).expect("bind pose matches armature")
    }

    /// Tail position of a bone under the given global transforms.
    pub fn tail(&self, bone: usize, globals: &[Isometry3<f64>]) -> Point3<f64> {
        globals[bone] * Point3::new(self.bones[bone].length, 0.0, 0.0)
    }
}

/// Per-bone local rotations plus a translation offset applied to every
/// root bone.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<UnitQuaternion<f64>>,
    pub root_translation: Vector3<f64>,
}

/// Conventional bone id for tongue chain bone `i` (0 = the root bone whose
/// tail sits at the rearmost coil).
pub fn tongue_bone_id(chain_index: usize) -> String {
    format!("tongue{chain_index}")
}

/// Conventional bone id for the jaw (mandible) bone.
pub const JAW_BONE_ID: &str = "jaw";

/// Builds a serial chain through the tongue coil bind positions, ordered
/// rear to front: a root bone starting `root_offset_mm` behind the rearmost
/// coil, then one bone per consecutive coil pair. At bind, the tail of
/// chain bone `i` coincides with coil `i`.
pub fn build_tongue_armature(
    coil_bind_positions: &[Point3<f64>],
    root_offset_mm: f64,
) -> Result<Armature, RigError> {
    if coil_bind_positions.len() < 2 {
        return Err(RigError::TooFewCoils {
            need: 2,
            got: coil_bind_positions.len(),
        });
    }
    if root_offset_mm <= 1e-6 {
        return Err(RigError::BadRootOffset(root_offset_mm));
    }
    for (i, pair) in coil_bind_positions.windows(2).enumerate() {
        if (pair[1] - pair[0]).norm() < 1e-6 {
            return Err(RigError::CoincidentCoils { a: i, b: i + 1 });
        }
    }

    let rear_dir = (coil_bind_positions[1] - coil_bind_positions[0]).normalize();
    let root_head = coil_bind_positions[0] - rear_dir * root_offset_mm;

    let mut heads = vec![root_head];
    heads.extend_from_slice(&coil_bind_positions[..coil_bind_positions.len() - 1]);
    let tails = coil_bind_positions;

    let mut bones = Vec::with_capacity(tails.len());
    let mut parent_global = Isometry3::identity();
    for (i, (head, tail)) in heads.iter().zip(tails.iter()).enumerate() {
        let global = segment_frame(head, tail);
        let rest_local = parent_global.inverse() * global;
        bones.push(Bone {
            id: tongue_bone_id(i),
            parent: (i > 0).then(|| tongue_bone_id(i - 1)),
            rest_local,
            length: (tail - head).norm(),
        });
        parent_global = global;
    }
    Armature::new(bones)
}

/// Single rigid bone from the hinge point (condyle approximation) to the
/// jaw coil bind position. The mandible mesh is skinned rigidly to it; the
/// maxilla stays unskinned.
pub fn build_jaw_armature(
    jaw_coil_bind: &Point3<f64>,
    hinge_point: &Point3<f64>,
) -> Result<Armature, RigError> {
    let length = (jaw_coil_bind - hinge_point).norm();
    if length < 1e-6 {
        return Err(RigError::CoincidentHinge);
    }
    Armature::new(vec![Bone {
        id: JAW_BONE_ID.to_string(),
        parent: None,
        rest_local: segment_frame(hinge_point, jaw_coil_bind),
        length,
    }])
}

/// Rigid frame with +x from head to tail and a deterministic perpendicular
/// basis.
fn segment_frame(head: &Point3<f64>, tail: &Point3<f64>) -> Isometry3<f64> {
    let x = (tail - head).normalize();
    let up = if x.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::y()
    };
    let y = up.cross(&x).normalize();
    let z = x.cross(&y);
    let rotation = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_basis_unchecked(
        &[x, y, z],
    ));
    Isometry3::from_parts(Translation3::from(head.coords), rotation)
}

/// Global transform per bone: `global(bone) = global(parent) * rest_local *
/// pose_local`; roots compose the pose root translation first. Rotations
/// are renormalized after the composition chain.
pub fn forward_kinematics(
    armature: &Armature,
    pose: &Pose,
) -> Result<Vec<Isometry3<f64>>, RigError> {
    if pose.rotations.len() != armature.bones.len() {
        return Err(RigError::PoseShape {
            got: pose.rotations.len(),
            expected: armature.bones.len(),
        });
    }
    let mut globals: Vec<Isometry3<f64>> = Vec::with_capacity(armature.bones.len());
    for (i, bone) in armature.bones.iter().enumerate() {
        let local = bone.rest_local * Isometry3::from_parts(Translation3::identity(), pose.rotations[i]);
        let mut global = match &bone.parent {
            Some(parent) => {
                let p = armature.bone_index(parent).expect("validated parent");
                globals[p] * local
            }
            None => Translation3::from(pose.root_translation) * local,
        };
        global.rotation = UnitQuaternion::new_normalize(global.rotation.into_inner());
        globals.push(global);
    }
    Ok(globals)
}
