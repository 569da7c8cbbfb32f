//! EMA motion-capture trajectories: parsing, validation, gap filling,
//! smoothing, resampling, and writers for the canonical CSV format and the
//! articulograph-compatible binary `.pos` format.
//!
//! A trajectory is a frame-major time series of per-coil samples at a fixed
//! rate. Positions are millimeters; orientations are unit axis vectors. The
//! spherical (phi, theta) angle representation exists only at the `.pos`
//! boundary. All operations are pure: they never mutate their input.

mod ag500;
mod clean;
mod csv;

pub use ag500::{parse_ag500_pos, write_ag500_pos, AG500_FLOATS_PER_CHANNEL};
pub use clean::{interpolate_gaps, resample, smooth, validate, DropoutRun, ValidationSummary};
pub use csv::{parse_ema_csv, write_ema_csv};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmaError {
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("buffer length {actual} bytes is not a whole number of records (expected a multiple of {record} = {channels} channels x {} floats x 4 bytes)", AG500_FLOATS_PER_CHANNEL)]
    BadPosLength {
        actual: usize,
        record: usize,
        channels: usize,
    },
    #[error("channel count must be >= 1")]
    NoChannels,
    #[error("sample rate must be positive, got {0}")]
    BadRate(f64),
    #[error("trajectory has no frames")]
    NoFrames,
    #[error("duplicate coil id `{0}`")]
    DuplicateCoil(String),
    #[error("coil id must be non-empty")]
    EmptyCoilId,
    #[error("frame {frame} has {got} samples, expected {expected}")]
    FrameShape {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("cannot write invalid sample (coil `{coil}`, frame {frame}); interpolate or drop invalid frames first")]
    InvalidSample { coil: String, frame: usize },
    #[error("coil `{coil}`: invalid run of {len} frames starting at frame {start} {reason}")]
    Gap {
        coil: String,
        start: usize,
        len: usize,
        reason: String,
    },
    #[error("smoothing window must be odd and >= 1, got {0}")]
    EvenWindow(usize),
    #[error("smoothing window {window} exceeds frame count {frames}")]
    WindowTooLarge { window: usize, frames: usize },
    #[error("coil `{coil}` frame {frame} is invalid; this operation requires all samples valid")]
    RequiresValid { coil: String, frame: usize },
    #[error("orientation gap between near-antipodal axes (coil `{coil}`, frames {a}..{b})")]
    AntipodalGap { coil: String, a: usize, b: usize },
}

/// One articulograph sample for one coil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilSample {
    /// Position, millimeters.
    pub position: Point3<f64>,
    /// Unit orientation axis (dimensionless).
    pub orientation: Vector3<f64>,
    /// Reported measurement error, millimeters.
    pub rms_error: f64,
    /// When false, position and orientation must not be read downstream.
    pub valid: bool,
}

impl CoilSample {
    /// Builds a sample, deciding validity: all fields must be finite, the
    /// orientation must be normalizable, and rms must be non-negative.
    /// A non-unit but finite orientation is normalized.
    pub fn new(position: Point3<f64>, orientation: Vector3<f64>, rms_error: f64) -> Self {
        let finite = position.iter().all(|v| v.is_finite())
            && orientation.iter().all(|v| v.is_finite())
            && rms_error.is_finite()
            && rms_error >= 0.0;
        if !finite {
            return Self::invalid(position, rms_error);
        }
        let norm = orientation.norm();
        if norm < 1e-9 {
            return Self::invalid(position, rms_error);
        }
        Self {
            position,
            orientation: orientation / norm,
            rms_error,
            valid: true,
        }
    }

    /// Placeholder sample flagged invalid; the stored position is whatever
    /// was parsed (possibly non-finite) and must not be consumed.
    pub fn invalid(position: Point3<f64>, rms_error: f64) -> Self {
        Self {
            position,
            orientation: Vector3::x(),
            rms_error,
            valid: false,
        }
    }
}

/// Frame-major time series of per-coil samples at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaTrajectory {
    coil_ids: Vec<String>,
    sample_rate_hz: f64,
    frames: Vec<Vec<CoilSample>>,
}

impl EmaTrajectory {
    pub fn new(
        coil_ids: Vec<String>,
        sample_rate_hz: f64,
        frames: Vec<Vec<CoilSample>>,
    ) -> Result<Self, EmaError> {
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(EmaError::BadRate(sample_rate_hz));
        }
        if frames.is_empty() {
            return Err(EmaError::NoFrames);
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &coil_ids {
            if id.is_empty() {
                return Err(EmaError::EmptyCoilId);
            }
            if !seen.insert(id.clone()) {
                return Err(EmaError::DuplicateCoil(id.clone()));
            }
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.len() != coil_ids.len() {
                return Err(EmaError::FrameShape {
                    frame: i,
                    got: frame.len(),
                    expected: coil_ids.len(),
                });
            }
        }
        Ok(Self {
            coil_ids,
            sample_rate_hz,
            frames,
        })
    }

    pub fn coil_ids(&self) -> &[String] {
        &self.coil_ids
    }

    pub fn coil_index(&self, id: &str) -> Option<usize> {
        self.coil_ids.iter().position(|c| c == id)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<CoilSample>] {
        &self.frames
    }

    pub fn sample(&self, frame: usize, coil: usize) -> &CoilSample {
        &self.frames[frame][coil]
    }

    /// Duration covered by the frames, seconds.
    pub fn duration_s(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.sample_rate_hz
    }

    /// Per-coil sample iterator in frame order.
    pub fn coil_samples(&self, coil: usize) -> impl Iterator<Item = &CoilSample> + '_ {
        self.frames.iter().map(move |f| &f[coil])
    }
}

/// Which articulator a coil is glued to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Articulator {
    Tongue,
    Jaw,
    Reference,
    Other,
}

/// Assignment of a coil id to an articulator; tongue coils carry their
/// position along the chain (0 = rearmost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilRole {
    pub coil_id: String,
    pub articulator: Articulator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_index: Option<usize>,
}
