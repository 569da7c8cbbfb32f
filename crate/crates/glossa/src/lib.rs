//! Model compiler and evaluation harness for articulatory animation.
//!
//! The pipeline rigs static vocal-tract meshes (tongue, jaw/teeth, maxilla)
//! with a pseudo-skeletal armature, drives the armature from electromagnetic
//! articulography (EMA) motion capture through inverse kinematics, packages
//! the result as an animated model asset, and evaluates animation fidelity
//! with three objective procedures: target-to-surface distance, palate
//! contact/penetration analysis, and deformed-pose similarity against a
//! reference mesh.
//!
//! Modules follow the data flow:
//!
//! - [`ema`] — parse, validate, clean, and write EMA coil trajectories
//!   (canonical CSV and articulograph-compatible binary `.pos`)
//! - [`mesh`] — triangle meshes, OBJ I/O, BVH-accelerated distance and
//!   penetration queries, surface-distance statistics
//! - [`rig`] — armature construction, forward kinematics, skinning weights,
//!   linear blend skinning, rigid (Kabsch) fitting
//! - [`ik`] — damped-least-squares IK per frame and over sequences, coil
//!   target attachment, and target dumping back to EMA formats
//! - [`compiler`] — the build lifecycle (validate, rig, solve, evaluate,
//!   package) and the asset container
//! - [`eval`] — metric series, gates, and report generation (JSON + CSV + SVG)
//! - [`synth`] — deterministic synthetic fixtures for testing and demos
//! - [`cli`] — the `glossa` command-line entry point
//!
//! All geometry is in millimeters. Everything is deterministic: identical
//! inputs produce identical outputs, including packaged assets and reports.

pub mod cli;
pub mod compiler;
pub mod ema;
pub mod eval;
pub mod ik;
pub mod mesh;
pub mod rig;
pub mod synth;
