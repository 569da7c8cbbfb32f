//! Data hygiene: rms validation, gap interpolation, smoothing, resampling.

use nalgebra::{Point3, Vector3};

use super::{CoilSample, EmaError, EmaTrajectory};

/// A consecutive run of dropped (invalid or over-threshold) samples for one
/// coil.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutRun {
    pub coil_id: String,
    pub start_frame: usize,
    pub len: usize,
}

/// Result of [`validate`]; the input trajectory is never mutated.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub max_rms_mm: f64,
    pub max_gap_frames: usize,
    /// (frame, coil) pairs whose rms exceeds the threshold.
    pub flagged: Vec<(usize, usize)>,
    pub runs: Vec<DropoutRun>,
    pub max_run_len: usize,
    /// False when any dropout run exceeds `max_gap_frames`.
    pub pass: bool,
}

/// Flags samples above the rms threshold, reports per-coil dropout runs,
/// and fails overall if any run exceeds `max_gap_frames`.
pub fn validate(traj: &EmaTrajectory, max_rms_mm: f64, max_gap_frames: usize) -> ValidationSummary {
    let mut flagged = Vec::new();
    let mut runs = Vec::new();
    let mut max_run_len = 0;
    for c in 0..traj.coil_ids().len() {
        let mut run_start = None;
        for f in 0..traj.frame_count() {
            let s = traj.sample(f, c);
            let over = s.valid && s.rms_error > max_rms_mm;
            if over {
                flagged.push((f, c));
            }
            let dropped = !s.valid || over;
            match (dropped, run_start) {
                (true, None) => run_start = Some(f),
                (false, Some(start)) => {
                    push_run(&mut runs, traj, c, start, f - start, &mut max_run_len);
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = run_start {
            let len = traj.frame_count() - start;
            push_run(&mut runs, traj, c, start, len, &mut max_run_len);
        }
    }
    ValidationSummary {
        max_rms_mm,
        max_gap_frames,
        flagged,
        runs,
        max_run_len,
        pass: max_run_len <= max_gap_frames,
    }
}

fn push_run(
    runs: &mut Vec<DropoutRun>,
    traj: &EmaTrajectory,
    coil: usize,
    start: usize,
    len: usize,
    max_run_len: &mut usize,
) {
    *max_run_len = (*max_run_len).max(len);
    runs.push(DropoutRun {
        coil_id: traj.coil_ids()[coil].clone(),
        start_frame: start,
        len,
    });
}

impl ValidationSummary {
    /// Returns a copy of the trajectory with every flagged sample marked
    /// invalid, ready for gap interpolation or hold-last-target solving.
    pub fn apply(&self, traj: &EmaTrajectory) -> EmaTrajectory {
        if self.flagged.is_empty() {
            return traj.clone();
        }
        let mut frames: Vec<Vec<CoilSample>> = traj.frames().to_vec();
        for &(f, c) in &self.flagged {
            let s = frames[f][c];
            frames[f][c] = CoilSample::invalid(s.position, s.rms_error);
        }
        EmaTrajectory::new(traj.coil_ids().to_vec(), traj.sample_rate_hz(), frames)
            .expect("shape unchanged")
    }
}

/// Spherical-linear interpolation between unit axes; `None` when the axes
/// are antipodal (no unique geodesic) or cancel.
fn slerp_axis(a: &Vector3<f64>, b: &Vector3<f64>, t: f64) -> Option<Vector3<f64>> {
    let dot = a.dot(b).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-9 {
        let v = a.lerp(b, t);
        let n = v.norm();
        return (n > 1e-9).then(|| v / n);
    }
    if omega > std::f64::consts::PI - 1e-9 {
        return None;
    }
    let so = omega.sin();
    Some((a * ((1.0 - t) * omega).sin() + b * (t * omega).sin()) / so)
}

/// Replaces invalid samples by linear position interpolation and
/// spherical-linear orientation interpolation between the nearest valid
/// neighbors; rms is interpolated linearly. Errors when a run exceeds
/// `max_gap_frames` or touches either end of the sequence. Idempotent.
pub fn interpolate_gaps(
    traj: &EmaTrajectory,
    max_gap_frames: usize,
) -> Result<EmaTrajectory, EmaError> {
    let n = traj.frame_count();
    let mut frames: Vec<Vec<CoilSample>> = traj.frames().to_vec();
    for (c, coil_id) in traj.coil_ids().iter().enumerate() {
        let coil = coil_id.clone();
        let mut f = 0;
        while f < n {
            if frames[f][c].valid {
                f += 1;
                continue;
            }
            let start = f;
            while f < n && !frames[f][c].valid {
                f += 1;
            }
            let len = f - start;
            if start == 0 || f == n {
                return Err(EmaError::Gap {
                    coil,
                    start,
                    len,
                    reason: "touches the sequence boundary".into(),
                });
            }
            if len > max_gap_frames {
                return Err(EmaError::Gap {
                    coil,
                    start,
                    len,
                    reason: format!("exceeds max_gap_frames = {max_gap_frames}"),
                });
            }
            let before = frames[start - 1][c];
            let after = frames[f][c];
            for k in 0..len {
                let t = (k + 1) as f64 / (len + 1) as f64;
                let position = Point3::from(before.position.coords.lerp(&after.position.coords, t));
                let orientation = slerp_axis(&before.orientation, &after.orientation, t).ok_or(
                    EmaError::AntipodalGap {
                        coil: coil.clone(),
                        a: start - 1,
                        b: f,
                    },
                )?;
                let rms = before.rms_error + (after.rms_error - before.rms_error) * t;
                frames[start + k][c] = CoilSample::new(position, orientation, rms);
            }
        }
    }
    EmaTrajectory::new(traj.coil_ids().to_vec(), traj.sample_rate_hz(), frames)
}

/// Centered moving average over `window_frames` (odd). Edges shrink the
/// window symmetrically; window 1 is the identity. Orientations are
/// averaged componentwise and renormalized (a window whose axes cancel
/// keeps the center frame's orientation); rms is averaged. Requires all
/// samples valid.
pub fn smooth(traj: &EmaTrajectory, window_frames: usize) -> Result<EmaTrajectory, EmaError> {
    if window_frames == 0 || window_frames.is_multiple_of(2) {
        return Err(EmaError::EvenWindow(window_frames));
    }
    let n = traj.frame_count();
    if window_frames > n {
        return Err(EmaError::WindowTooLarge {
            window: window_frames,
            frames: n,
        });
    }
    require_all_valid(traj)?;
    let half = window_frames / 2;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let h = half.min(i).min(n - 1 - i);
        let count = (2 * h + 1) as f64;
        let mut frame = Vec::with_capacity(traj.coil_ids().len());
        for c in 0..traj.coil_ids().len() {
            let mut pos = Vector3::zeros();
            let mut axis = Vector3::zeros();
            let mut rms = 0.0;
            for k in i - h..=i + h {
                let s = traj.sample(k, c);
                pos += s.position.coords;
                axis += s.orientation;
                rms += s.rms_error;
            }
            let orientation = if axis.norm() > 1e-9 {
                axis
            } else {
                traj.sample(i, c).orientation
            };
            frame.push(CoilSample::new(
                Point3::from(pos / count),
                orientation,
                rms / count,
            ));
        }
        frames.push(frame);
    }
    EmaTrajectory::new(traj.coil_ids().to_vec(), traj.sample_rate_hz(), frames)
}

/// Resamples to a uniform `target_hz` grid over the original duration:
/// linear position interpolation, slerp orientations, the first frame
/// preserved exactly. Requires all samples valid.
pub fn resample(traj: &EmaTrajectory, target_hz: f64) -> Result<EmaTrajectory, EmaError> {
    if !target_hz.is_finite() || target_hz <= 0.0 {
        return Err(EmaError::BadRate(target_hz));
    }
    require_all_valid(traj)?;
    let n = traj.frame_count();
    // Epsilon keeps the exact endpoint when the duration divides evenly.
    let steps = (traj.duration_s() * target_hz + 1e-9).floor() as usize;
    let mut frames = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let u = (k as f64 / target_hz) * traj.sample_rate_hz();
        let i = (u.floor() as usize).min(n.saturating_sub(2));
        let frac = if n < 2 { 0.0 } else { (u - i as f64).clamp(0.0, 1.0) };
        let mut frame = Vec::with_capacity(traj.coil_ids().len());
        for c in 0..traj.coil_ids().len() {
            let a = traj.sample(i, c);
            if frac == 0.0 {
                frame.push(*a);
                continue;
            }
            let b = traj.sample(i + 1, c);
            let position = Point3::from(a.position.coords.lerp(&b.position.coords, frac));
            let orientation = slerp_axis(&a.orientation, &b.orientation, frac).ok_or(
                EmaError::AntipodalGap {
                    coil: traj.coil_ids()[c].clone(),
                    a: i,
                    b: i + 1,
                },
            )?;
            let rms = a.rms_error + (b.rms_error - a.rms_error) * frac;
            frame.push(CoilSample::new(position, orientation, rms));
        }
        frames.push(frame);
    }
    EmaTrajectory::new(traj.coil_ids().to_vec(), target_hz, frames)
}

fn require_all_valid(traj: &EmaTrajectory) -> Result<(), EmaError> {
    for (f, frame) in traj.frames().iter().enumerate() {
        for (c, s) in frame.iter().enumerate() {
            if !s.valid {
                return Err(EmaError::RequiresValid {
                    coil: traj.coil_ids()[c].clone(),
                    frame: f,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample(x: f64, rms: f64) -> CoilSample {
        CoilSample::new(Point3::new(x, 0.0, 0.0), Vector3::x(), rms)
    }

    fn single_coil(samples: Vec<CoilSample>, rate: f64) -> EmaTrajectory {
        EmaTrajectory::new(
            vec!["T1".into()],
            rate,
            samples.into_iter().map(|s| vec![s]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn clean_data_passes_with_no_flags() {
        let t = single_coil((0..20).map(|i| sample(i as f64, 0.05)).collect(), 200.0);
        let v = validate(&t, 0.3, 5);
        assert!(v.pass);
        assert!(v.flagged.is_empty());
        assert!(v.runs.is_empty());
    }

    #[test]
    fn one_over_threshold_sample_is_one_flag() {
        let mut samples: Vec<CoilSample> = (0..10).map(|i| sample(i as f64, 0.05)).collect();
        samples[4] = sample(4.0, 0.5);
        let t = single_coil(samples, 200.0);
        let v = validate(&t, 0.3, 5);
        assert!(v.pass);
        assert_eq!(v.flagged, vec![(4, 0)]);
        assert_eq!(v.runs.len(), 1);
        assert_eq!(v.runs[0].len, 1);
        // validate never mutates: the original sample is still valid.
        assert!(t.sample(4, 0).valid);
        // apply marks it invalid in a copy.
        let applied = v.apply(&t);
        assert!(!applied.sample(4, 0).valid);
        assert!(applied.sample(3, 0).valid);
    }

    #[test]
    fn long_run_fails_overall() {
        let mut samples: Vec<CoilSample> = (0..30).map(|i| sample(i as f64, 0.05)).collect();
        for s in samples.iter_mut().skip(10).take(10) {
            *s = CoilSample::invalid(Point3::origin(), 0.0);
        }
        let t = single_coil(samples, 200.0);
        let v = validate(&t, 0.3, 5);
        assert!(!v.pass);
        assert_eq!(v.max_run_len, 10);
    }

    #[test]
    fn midpoint_gap_interpolates_linearly() {
        let samples = vec![
            sample(0.0, 0.1),
            CoilSample::invalid(Point3::origin(), 0.0),
            sample(2.0, 0.3),
        ];
        let t = single_coil(samples, 200.0);
        let filled = interpolate_gaps(&t, 5).unwrap();
        let mid = filled.sample(1, 0);
        assert!(mid.valid);
        assert!((mid.position - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((mid.rms_error - 0.2).abs() < 1e-12);
    }

    #[test]
    fn no_gaps_is_identity_and_idempotent() {
        let t = single_coil((0..5).map(|i| sample(i as f64, 0.1)).collect(), 200.0);
        let once = interpolate_gaps(&t, 3).unwrap();
        assert_eq!(once, t);
        let samples = vec![
            sample(0.0, 0.1),
            CoilSample::invalid(Point3::origin(), 0.0),
            sample(2.0, 0.1),
        ];
        let t = single_coil(samples, 200.0);
        let once = interpolate_gaps(&t, 5).unwrap();
        let twice = interpolate_gaps(&once, 5).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn orientation_gap_uses_slerp() {
        let a = CoilSample::new(Point3::origin(), Vector3::x(), 0.0);
        let b = CoilSample::new(Point3::origin(), Vector3::y(), 0.0);
        let t = single_coil(
            vec![a, CoilSample::invalid(Point3::origin(), 0.0), b],
            200.0,
        );
        let filled = interpolate_gaps(&t, 5).unwrap();
        let mid = filled.sample(1, 0).orientation;
        let expect = Vector3::new(1.0, 1.0, 0.0) / 2.0_f64.sqrt();
        assert!((mid - expect).norm() < 1e-6);
        assert!((mid.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn boundary_gap_is_an_error() {
        let t = single_coil(
            vec![CoilSample::invalid(Point3::origin(), 0.0), sample(1.0, 0.1)],
            200.0,
        );
        match interpolate_gaps(&t, 5).unwrap_err() {
            EmaError::Gap { start, reason, .. } => {
                assert_eq!(start, 0);
                assert!(reason.contains("boundary"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlong_gap_is_an_error() {
        let mut samples: Vec<CoilSample> = (0..10).map(|i| sample(i as f64, 0.1)).collect();
        for s in samples.iter_mut().skip(2).take(6) {
            *s = CoilSample::invalid(Point3::origin(), 0.0);
        }
        let t = single_coil(samples, 200.0);
        assert!(matches!(
            interpolate_gaps(&t, 5),
            Err(EmaError::Gap { len: 6, .. })
        ));
    }

    #[test]
    fn smooth_keeps_constants_and_averages_peaks() {
        let t = single_coil(vec![sample(2.0, 0.1); 7], 200.0);
        let s = smooth(&t, 5).unwrap();
        for f in 0..7 {
            assert!((s.sample(f, 0).position.x - 2.0).abs() < 1e-12);
        }
        let t = single_coil(vec![sample(0.0, 0.1), sample(3.0, 0.1), sample(0.0, 0.1)], 200.0);
        let s = smooth(&t, 3).unwrap();
        assert!((s.sample(1, 0).position.x - 1.0).abs() < 1e-12);
        // Edges use shrunken symmetric windows: frame 0 is untouched.
        assert!((s.sample(0, 0).position.x - 0.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_rejects_bad_windows() {
        let t = single_coil((0..4).map(|i| sample(i as f64, 0.1)).collect(), 200.0);
        assert!(matches!(smooth(&t, 2), Err(EmaError::EvenWindow(2))));
        assert!(matches!(smooth(&t, 5), Err(EmaError::WindowTooLarge { .. })));
        let t = single_coil(
            vec![sample(0.0, 0.1), CoilSample::invalid(Point3::origin(), 0.0)],
            200.0,
        );
        assert!(matches!(smooth(&t, 1), Err(EmaError::RequiresValid { .. })));
    }

    #[test]
    fn smooth_reduces_white_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<CoilSample> = (0..400)
            .map(|_| sample(rng.random_range(-1.0..1.0), 0.1))
            .collect();
        let t = single_coil(samples, 200.0);
        let s = smooth(&t, 5).unwrap();
        let variance = |tr: &EmaTrajectory| {
            let xs: Vec<f64> = tr.coil_samples(0).map(|s| s.position.x).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
        };
        assert!(variance(&s) < variance(&t));
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let t = single_coil((0..9).map(|i| sample(i as f64, 0.1)).collect(), 100.0);
        let r = resample(&t, 100.0).unwrap();
        assert_eq!(r.frame_count(), 9);
        for f in 0..9 {
            assert!((r.sample(f, 0).position - t.sample(f, 0).position).norm() < 1e-9);
        }
    }

    #[test]
    fn resample_doubling_adds_midpoints() {
        let t = single_coil(vec![sample(0.0, 0.1), sample(1.0, 0.1)], 100.0);
        let r = resample(&t, 200.0).unwrap();
        assert_eq!(r.frame_count(), 3);
        assert!((r.sample(1, 0).position - Point3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        assert!((r.sample(2, 0).position - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ramp_survives_down_then_up() {
        let t = single_coil((0..101).map(|i| sample(0.25 * i as f64, 0.1)).collect(), 200.0);
        let down = resample(&t, 50.0).unwrap();
        let up = resample(&down, 200.0).unwrap();
        assert_eq!(up.frame_count(), 101);
        for f in 0..101 {
            assert!((up.sample(f, 0).position.x - 0.25 * f as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_rejects_bad_rate() {
        let t = single_coil(vec![sample(0.0, 0.1), sample(1.0, 0.1)], 100.0);
        assert!(matches!(resample(&t, 0.0), Err(EmaError::BadRate(_))));
    }

    #[test]
    fn orientations_stay_unit_after_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<CoilSample> = (0..50)
            .map(|i| {
                let axis = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.5..1.0),
                );
                CoilSample::new(Point3::new(i as f64, 0.0, 0.0), axis, 0.05)
            })
            .collect();
        let t = single_coil(samples, 200.0);
        for tr in [smooth(&t, 5).unwrap(), resample(&t, 130.0).unwrap()] {
            for frame in tr.frames() {
                for s in frame {
                    assert!((s.orientation.norm() - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
