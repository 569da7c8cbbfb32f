//! Inverse kinematics: per-frame damped-least-squares solving so
//! bone-mounted effectors track EMA coil targets, sequence solving with
//! warm starts, coil-to-effector binding, and dumping solved targets back
//! to EMA formats.
//!
//! The solver parameterizes each bone as a 3-DOF exponential-map rotation
//! and iterates `delta = J^T (J J^T + lambda^2 I)^-1 r` with a
//! central-finite-difference Jacobian. A step is only accepted if it does
//! not increase the max effector residual (halving the step up to 8 times
//! otherwise), which makes the residual monotone over accepted iterations.
//! Everything is deterministic for fixed inputs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Isometry3, Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ema::{Articulator, CoilRole, CoilSample, EmaError, EmaTrajectory};
use crate::rig::{forward_kinematics, tongue_bone_id, Armature, Pose, RigError, JAW_BONE_ID};

/// Finite-difference step for the Jacobian, radians.
const JACOBIAN_STEP_RAD: f64 = 1e-5;
/// Stop when an accepted iteration improves the residual by less than this.
const MIN_IMPROVEMENT_MM: f64 = 1e-9;
const MAX_HALVINGS: u32 = 8;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("target references unknown bone `{0}`")]
    UnknownBone(String),
    #[error("seed pose has {got} rotations, armature has {expected} bones")]
    PoseShape { got: usize, expected: usize },
    #[error("target sequence has no frames")]
    EmptySequence,
    #[error("frame {frame} has {got} targets, topology has {expected}")]
    TopologyShape {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("coil `{0}` is not present in the trajectory")]
    MissingCoil(String),
    #[error("coil `{coil}` maps to bone `{bone}` which is not rigged")]
    UnriggedRole { coil: String, bone: String },
    #[error("tongue coil `{0}` has no chain index")]
    MissingChainIndex(String),
    #[error("coil `{0}` has no valid sample in any frame")]
    NoValidSamples(String),
    #[error("clip has {got} poses, expected {expected} frames")]
    ClipShape { got: usize, expected: usize },
    #[error("normal-equation solve failed: {0}")]
    Numerical(String),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Ema(#[from] EmaError),
}

/// One effector-to-target assignment for a single solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IkTarget {
    /// Bone the effector is mounted on.
    pub bone_id: String,
    /// Effector offset in bone space, mm (the bone tail is `(length, 0, 0)`).
    pub local_offset: Vector3<f64>,
    pub position: Point3<f64>,
    /// Optional unit axis the effector's bone direction should match.
    pub orientation: Option<Vector3<f64>>,
    pub position_weight: f64,
    pub orientation_weight: f64,
}

/// Solver parameters. Joint limits are per-bone maximum swing angles from
/// bind, radians, applied as a hard clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkConfig {
    pub max_iterations: u32,
    pub tolerance_mm: f64,
    pub damping_lambda: f64,
    pub step_clamp_rad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limits: Option<BTreeMap<String, f64>>,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance_mm: 0.01,
            damping_lambda: 0.1,
            step_clamp_rad: 0.2,
            joint_limits: None,
        }
    }
}

/// Outcome of a single-frame solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub pose: Pose,
    /// Max effector position error, mm.
    pub residual_mm: f64,
    pub iterations_used: u32,
    /// True iff `residual_mm <= tolerance_mm`.
    pub converged: bool,
}

/// Static part of a coil-to-effector assignment, constant across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBinding {
    pub coil_id: String,
    pub bone_id: String,
    pub local_offset: Vector3<f64>,
    pub position_weight: f64,
    pub orientation_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetTopology {
    pub bindings: Vec<TargetBinding>,
}

/// Per-frame target data, one entry per topology binding.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFrame {
    pub positions: Vec<Point3<f64>>,
    pub orientations: Vec<Option<Vector3<f64>>>,
    /// False where the source coil sample was invalid.
    pub valid: Vec<bool>,
}

/// Topology plus the full frame sequence at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSequence {
    pub topology: TargetTopology,
    pub frames: Vec<TargetFrame>,
    pub rate_hz: f64,
}

/// Default weights applied when attaching coil targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetWeights {
    pub position: f64,
    pub orientation: f64,
}

impl Default for TargetWeights {
    /// Position-only solving; orientation matching is opt-in.
    fn default() -> Self {
        Self {
            position: 1.0,
            orientation: 0.0,
        }
    }
}

/// The solved pose sequence with per-frame solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimationClip {
    pub frame_rate_hz: f64,
    pub poses: Vec<Pose>,
    pub residuals_mm: Vec<f64>,
    pub iterations: Vec<u32>,
    /// True where invalid coil samples forced a hold of the last valid target.
    pub held: Vec<bool>,
}

impl AnimationClip {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }
}

struct Objective<'a> {
    armature: &'a Armature,
    /// (bone index, local offset, weight, target position)
    positions: Vec<(usize, Vector3<f64>, f64, Point3<f64>)>,
    /// (bone index, weight, target axis)
    orientations: Vec<(usize, f64, Vector3<f64>)>,
    root_translation: Vector3<f64>,
}

impl<'a> Objective<'a> {
    fn new(
        armature: &'a Armature,
        targets: &[IkTarget],
        root_translation: Vector3<f64>,
    ) -> Result<Self, IkError> {
        let mut positions = Vec::new();
        let mut orientations = Vec::new();
        for t in targets {
            let bone = armature
                .bone_index(&t.bone_id)
                .ok_or_else(|| IkError::UnknownBone(t.bone_id.clone()))?;
            if t.position_weight > 0.0 {
                positions.push((bone, t.local_offset, t.position_weight, t.position));
            }
            if t.orientation_weight > 0.0 {
                if let Some(axis) = t.orientation {
                    orientations.push((bone, t.orientation_weight, axis));
                }
            }
        }
        Ok(Self {
            armature,
            positions,
            orientations,
            root_translation,
        })
    }

    fn rows(&self) -> usize {
        3 * (self.positions.len() + self.orientations.len())
    }

    fn globals(&self, theta: &[Vector3<f64>]) -> Vec<Isometry3<f64>> {
        let pose = Pose {
            rotations: theta.iter().map(|v| UnitQuaternion::from_scaled_axis(*v)).collect(),
            root_translation: self.root_translation,
        };
        forward_kinematics(self.armature, &pose).expect("theta matches armature")
    }

    /// Weighted effector measurements stacked into one vector.
    fn measure(&self, theta: &[Vector3<f64>]) -> DVector<f64> {
        let globals = self.globals(theta);
        let mut out = DVector::zeros(self.rows());
        let mut row = 0;
        for &(bone, offset, w, _) in &self.positions {
            let p = globals[bone] * Point3::from(offset);
            out.fixed_rows_mut::<3>(row).copy_from(&(p.coords * w));
            row += 3;
        }
        for &(bone, w, _) in &self.orientations {
            let axis = globals[bone].rotation * Vector3::x();
            out.fixed_rows_mut::<3>(row).copy_from(&(axis * w));
            row += 3;
        }
        out
    }

    /// Weighted residual (target minus measurement).
    fn residual_vec(&self, measured: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        let mut row = 0;
        for &(_, _, w, target) in &self.positions {
            out.fixed_rows_mut::<3>(row)
                .copy_from(&(target.coords * w - measured.fixed_rows::<3>(row)));
            row += 3;
        }
        for &(_, w, axis) in &self.orientations {
            out.fixed_rows_mut::<3>(row)
                .copy_from(&(axis * w - measured.fixed_rows::<3>(row)));
            row += 3;
        }
        out
    }

    /// Max unweighted effector position error, mm.
    fn residual_inf(&self, theta: &[Vector3<f64>]) -> f64 {
        let globals = self.globals(theta);
        self.positions
            .iter()
            .map(|&(bone, offset, _, target)| (globals[bone] * Point3::from(offset) - target).norm())
            .fold(0.0, f64::max)
    }
}

/// Scales the whole step so no per-joint rotation exceeds the clamp.
/// Uniform scaling preserves the damped-least-squares descent direction;
/// rescaling joints individually would distort it.
fn clamp_step(delta: &mut [Vector3<f64>], step_clamp_rad: f64) {
    let largest = delta.iter().map(|d| d.norm()).fold(0.0, f64::max);
    if largest > step_clamp_rad {
        let scale = step_clamp_rad / largest;
        for d in delta.iter_mut() {
            *d *= scale;
        }
    }
}

fn clamp_limits(theta: &mut [Vector3<f64>], limits: &[Option<f64>]) {
    for (t, limit) in theta.iter_mut().zip(limits) {
        if let Some(max_swing) = limit {
            let n = t.norm();
            if n > *max_swing {
                *t *= max_swing / n;
            }
        }
    }
}

/// Damped-least-squares solve of one frame. Deterministic; the returned
/// pose keeps the seed's root translation.
pub fn solve_frame(
    armature: &Armature,
    seed_pose: &Pose,
    targets: &[IkTarget],
    config: &IkConfig,
) -> Result<SolveResult, IkError> {
    if seed_pose.rotations.len() != armature.len() {
        return Err(IkError::PoseShape {
            got: seed_pose.rotations.len(),
            expected: armature.len(),
        });
    }
    let objective = Objective::new(armature, targets, seed_pose.root_translation)?;
    let limits: Vec<Option<f64>> = armature
        .bones()
        .iter()
        .map(|b| {
            config
                .joint_limits
                .as_ref()
                .and_then(|m| m.get(&b.id).copied())
        })
        .collect();

    let mut theta: Vec<Vector3<f64>> =
        seed_pose.rotations.iter().map(|q| q.scaled_axis()).collect();
    clamp_limits(&mut theta, &limits);

    let n_params = 3 * armature.len();
    let rows = objective.rows();
    let mut residual = objective.residual_inf(&theta);
    let mut iterations_used = 0;

    for _ in 0..config.max_iterations {
        if residual <= config.tolerance_mm || rows == 0 {
            break;
        }
        // Central-difference Jacobian of the weighted effector vector.
        let mut jacobian = DMatrix::zeros(rows, n_params);
        for bone in 0..armature.len() {
            for axis in 0..3 {
                let col = 3 * bone + axis;
                let saved = theta[bone][axis];
                theta[bone][axis] = saved + JACOBIAN_STEP_RAD;
                let plus = objective.measure(&theta);
                theta[bone][axis] = saved - JACOBIAN_STEP_RAD;
                let minus = objective.measure(&theta);
                theta[bone][axis] = saved;
                jacobian
                    .column_mut(col)
                    .copy_from(&((plus - minus) / (2.0 * JACOBIAN_STEP_RAD)));
            }
        }
        let r = objective.residual_vec(&objective.measure(&theta));
        let normal = &jacobian * jacobian.transpose()
            + DMatrix::identity(rows, rows) * (config.damping_lambda * config.damping_lambda);
        let y = normal
            .cholesky()
            .ok_or_else(|| IkError::Numerical("normal matrix not positive definite".into()))?
            .solve(&r);
        let full = jacobian.transpose() * y;
        let mut delta: Vec<Vector3<f64>> = (0..armature.len())
            .map(|b| Vector3::new(full[3 * b], full[3 * b + 1], full[3 * b + 2]))
            .collect();
        clamp_step(&mut delta, config.step_clamp_rad);

        // Accept only non-increasing residuals, halving the step on increase.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut candidate: Vec<Vector3<f64>> = theta
                .iter()
                .zip(&delta)
                .map(|(t, d)| t + d * alpha)
                .collect();
            clamp_limits(&mut candidate, &limits);
            let candidate_residual = objective.residual_inf(&candidate);
            if candidate_residual <= residual {
                accepted = Some((candidate, candidate_residual));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next_theta, next_residual)) = accepted else {
            break;
        };
        let improvement = residual - next_residual;
        theta = next_theta;
        residual = next_residual;
        iterations_used += 1;
        if improvement < MIN_IMPROVEMENT_MM {
            break;
        }
    }

    let pose = Pose {
        rotations: theta
            .iter()
            .map(|v| UnitQuaternion::from_scaled_axis(*v))
            .collect(),
        root_translation: seed_pose.root_translation,
    };
    Ok(SolveResult {
        converged: residual <= config.tolerance_mm,
        pose,
        residual_mm: residual,
        iterations_used,
    })
}

/// Solves a full sequence: frame 0 seeded from bind, frame k from frame
/// k-1. Frames containing invalid coil samples are solved against the last
/// valid target for that coil (leading invalids hold the first valid one)
/// and flagged as held.
pub fn solve_sequence(
    armature: &Armature,
    sequence: &TargetSequence,
    config: &IkConfig,
) -> Result<AnimationClip, IkError> {
    if sequence.frames.is_empty() {
        return Err(IkError::EmptySequence);
    }
    let bindings = &sequence.topology.bindings;
    for (f, frame) in sequence.frames.iter().enumerate() {
        if frame.positions.len() != bindings.len()
            || frame.orientations.len() != bindings.len()
            || frame.valid.len() != bindings.len()
        {
            return Err(IkError::TopologyShape {
                frame: f,
                got: frame.positions.len(),
                expected: bindings.len(),
            });
        }
    }

    // Seed the hold state with each coil's first valid sample.
    let mut held_positions: Vec<Point3<f64>> = Vec::with_capacity(bindings.len());
    let mut held_orientations: Vec<Option<Vector3<f64>>> = Vec::with_capacity(bindings.len());
    for (i, binding) in bindings.iter().enumerate() {
        let first_valid = sequence
            .frames
            .iter()
            .position(|fr| fr.valid[i])
            .ok_or_else(|| IkError::NoValidSamples(binding.coil_id.clone()))?;
        held_positions.push(sequence.frames[first_valid].positions[i]);
        held_orientations.push(sequence.frames[first_valid].orientations[i]);
    }

    let mut poses = Vec::with_capacity(sequence.frames.len());
    let mut residuals = Vec::with_capacity(sequence.frames.len());
    let mut iterations = Vec::with_capacity(sequence.frames.len());
    let mut held_flags = Vec::with_capacity(sequence.frames.len());
    let mut seed = armature.bind_pose();

    for frame in &sequence.frames {
        let mut held = false;
        let mut targets = Vec::with_capacity(bindings.len());
        for (i, binding) in bindings.iter().enumerate() {
            if frame.valid[i] {
                held_positions[i] = frame.positions[i];
                held_orientations[i] = frame.orientations[i];
            } else {
                held = true;
            }
            targets.push(IkTarget {
                bone_id: binding.bone_id.clone(),
                local_offset: binding.local_offset,
                position: held_positions[i],
                orientation: held_orientations[i],
                position_weight: binding.position_weight,
                orientation_weight: binding.orientation_weight,
            });
        }
        let result = solve_frame(armature, &seed, &targets, config)?;
        seed = result.pose.clone();
        poses.push(result.pose);
        residuals.push(result.residual_mm);
        iterations.push(result.iterations_used);
        held_flags.push(held);
    }

    Ok(AnimationClip {
        frame_rate_hz: sequence.rate_hz,
        poses,
        residuals_mm: residuals,
        iterations,
        held: held_flags,
    })
}

/// Binds rigged coils to their effectors and registers every trajectory
/// frame into model space. Tongue coil with chain index `i` binds to the
/// tail of chain bone `i`; the jaw coil binds to the jaw bone tail.
/// Reference and other coils produce no targets. Orientation targets are
/// attached only where the sample is valid and the orientation weight is
/// positive.
pub fn attach_targets(
    armature: &Armature,
    roles: &[CoilRole],
    trajectory: &EmaTrajectory,
    registration: &Isometry3<f64>,
    weights: TargetWeights,
) -> Result<TargetSequence, IkError> {
    let mut bindings = Vec::new();
    let mut coil_indices = Vec::new();
    for role in roles {
        let bone_id = match role.articulator {
            Articulator::Tongue => {
                let chain = role
                    .chain_index
                    .ok_or_else(|| IkError::MissingChainIndex(role.coil_id.clone()))?;
                tongue_bone_id(chain)
            }
            Articulator::Jaw => JAW_BONE_ID.to_string(),
            Articulator::Reference | Articulator::Other => continue,
        };
        let coil = trajectory
            .coil_index(&role.coil_id)
            .ok_or_else(|| IkError::MissingCoil(role.coil_id.clone()))?;
        let bone = armature
            .bone(&bone_id)
            .ok_or_else(|| IkError::UnriggedRole {
                coil: role.coil_id.clone(),
                bone: bone_id.clone(),
            })?;
        bindings.push(TargetBinding {
            coil_id: role.coil_id.clone(),
            bone_id,
            local_offset: Vector3::new(bone.length, 0.0, 0.0),
            position_weight: weights.position,
            orientation_weight: weights.orientation,
        });
        coil_indices.push(coil);
    }

    let frames = trajectory
        .frames()
        .iter()
        .map(|frame| {
            let mut positions = Vec::with_capacity(bindings.len());
            let mut orientations = Vec::with_capacity(bindings.len());
            let mut valid = Vec::with_capacity(bindings.len());
            for &coil in &coil_indices {
                let sample: &CoilSample = &frame[coil];
                positions.push(registration * sample.position);
                orientations.push(
                    (sample.valid && weights.orientation > 0.0)
                        .then(|| registration.rotation * sample.orientation),
                );
                valid.push(sample.valid);
            }
            TargetFrame {
                positions,
                orientations,
                valid,
            }
        })
        .collect();

    Ok(TargetSequence {
        topology: TargetTopology { bindings },
        frames,
        rate_hz: trajectory.sample_rate_hz(),
    })
}

/// FK-evaluates every effector over the clip and emits an EMA trajectory:
/// effector global positions, bone tail-direction axes as orientations, and
/// the frame's solver residual in the rms field. The result is writable via
/// the CSV or `.pos` writers.
pub fn dump_targets(
    armature: &Armature,
    clip: &AnimationClip,
    topology: &TargetTopology,
    rate_hz: f64,
) -> Result<EmaTrajectory, IkError> {
    let bones: Vec<usize> = topology
        .bindings
        .iter()
        .map(|b| {
            armature
                .bone_index(&b.bone_id)
                .ok_or_else(|| IkError::UnknownBone(b.bone_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    if clip.poses.is_empty() {
        return Err(IkError::EmptySequence);
    }
    if clip.residuals_mm.len() != clip.poses.len() {
        return Err(IkError::ClipShape {
            got: clip.residuals_mm.len(),
            expected: clip.poses.len(),
        });
    }

    let mut frames = Vec::with_capacity(clip.poses.len());
    for (f, pose) in clip.poses.iter().enumerate() {
        let globals = forward_kinematics(armature, pose)?;
        let mut frame = Vec::with_capacity(bones.len());
        for (binding, &bone) in topology.bindings.iter().zip(&bones) {
            let position = globals[bone] * Point3::from(binding.local_offset);
            let axis = globals[bone].rotation * Vector3::x();
            frame.push(CoilSample::new(position, axis, clip.residuals_mm[f]));
        }
        frames.push(frame);
    }
    let coil_ids = topology.bindings.iter().map(|b| b.coil_id.clone()).collect();
    Ok(EmaTrajectory::new(coil_ids, rate_hz, frames)?)
}

#[cfg(test)]
mod tests;
