//! Articulograph-compatible binary `.pos` format.
//!
//! Record layout, declared normative for this tool and fixed bit-exactly:
//! frame-major, 7 little-endian f32 per channel per sample —
//! `x, y, z, phi, theta, rms, extra` — positions in millimeters, angles in
//! degrees (`phi` elevation in [-90, 90], `theta` azimuth in (-180, 180]),
//! `extra` reserved as 0. Channel count and sample rate travel out-of-band
//! (CLI flags or sidecar metadata), matching articulograph practice.
//!
//! The unit orientation axis is derived as
//! `(cos phi * cos theta, cos phi * sin theta, sin phi)`; at the poles
//! (|phi| = 90) theta is conventionally written as 0 so round-trips are
//! deterministic. Buffers in this canonical angle form with `extra = 0`
//! round-trip byte-for-byte through parse/write.

use nalgebra::{Point3, Vector3};

use super::{CoilSample, EmaError, EmaTrajectory};

/// x, y, z, phi, theta, rms, extra.
pub const AG500_FLOATS_PER_CHANNEL: usize = 7;

pub fn parse_ag500_pos(
    bytes: &[u8],
    channel_count: usize,
    sample_rate_hz: f64,
) -> Result<EmaTrajectory, EmaError> {
    if channel_count == 0 {
        return Err(EmaError::NoChannels);
    }
    if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
        return Err(EmaError::BadRate(sample_rate_hz));
    }
    let record = channel_count * AG500_FLOATS_PER_CHANNEL * 4;
    if bytes.is_empty() || !bytes.len().is_multiple_of(record) {
        return Err(EmaError::BadPosLength {
            actual: bytes.len(),
            record,
            channels: channel_count,
        });
    }
    let coil_ids = (1..=channel_count).map(|c| format!("ch{c:02}")).collect();
    let mut frames = Vec::with_capacity(bytes.len() / record);
    for rec in bytes.chunks_exact(record) {
        let mut frame = Vec::with_capacity(channel_count);
        for ch in rec.chunks_exact(AG500_FLOATS_PER_CHANNEL * 4) {
            let mut v = [0.0f32; AG500_FLOATS_PER_CHANNEL];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = f32::from_le_bytes(ch[k * 4..k * 4 + 4].try_into().unwrap());
            }
            let position = Point3::new(v[0] as f64, v[1] as f64, v[2] as f64);
            let rms = v[5] as f64;
            if v.iter().any(|x| !x.is_finite()) {
                frame.push(CoilSample::invalid(position, rms));
                continue;
            }
            let phi = (v[3] as f64).to_radians();
            let theta = (v[4] as f64).to_radians();
            let orientation = Vector3::new(
                phi.cos() * theta.cos(),
                phi.cos() * theta.sin(),
                phi.sin(),
            );
            // `extra` (v[6]) is discarded.
            frame.push(CoilSample::new(position, orientation, rms));
        }
        frames.push(frame);
    }
    EmaTrajectory::new(coil_ids, sample_rate_hz, frames)
}

/// Inverse of [`parse_ag500_pos`] up to f32 rounding. All samples must be
/// valid; callers interpolate or drop invalid frames first.
pub fn write_ag500_pos(traj: &EmaTrajectory) -> Result<Vec<u8>, EmaError> {
    let mut out = Vec::with_capacity(
        traj.frame_count() * traj.coil_ids().len() * AG500_FLOATS_PER_CHANNEL * 4,
    );
    for (f, frame) in traj.frames().iter().enumerate() {
        for (c, s) in frame.iter().enumerate() {
            if !s.valid {
                return Err(EmaError::InvalidSample {
                    coil: traj.coil_ids()[c].clone(),
                    frame: f,
                });
            }
            let (phi, theta) = axis_to_angles(&s.orientation);
            let fields = [
                s.position.x as f32,
                s.position.y as f32,
                s.position.z as f32,
                phi as f32,
                theta as f32,
                s.rms_error as f32,
                0.0f32,
            ];
            for v in fields {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Unit axis -> (phi, theta) degrees with phi in [-90, 90] and theta in
/// (-180, 180]; theta is 0 at the poles.
fn axis_to_angles(axis: &Vector3<f64>) -> (f64, f64) {
    let phi = axis.z.clamp(-1.0, 1.0).asin().to_degrees();
    let theta = if axis.x == 0.0 && axis.y == 0.0 {
        0.0
    } else {
        let mut t = axis.y.atan2(axis.x).to_degrees();
        if t <= -180.0 {
            t += 360.0;
        }
        t
    };
    (phi, theta)
}
