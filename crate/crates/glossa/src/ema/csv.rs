//! Canonical CSV interchange format.
//!
//! Layout (UTF-8, LF line endings):
//!
//! ```text
//! ema-csv v1; rate=200
//! coil:T1.x,coil:T1.y,coil:T1.z,coil:T1.ox,coil:T1.oy,coil:T1.oz,coil:T1.rms,coil:T2.x,...
//! 1.0,2.0,3.0,0,0,1,0.05,...
//! ```
//!
//! Seven columns per coil (position, orientation axis, rms). `nan` is
//! allowed in data rows and marks the affected coil sample invalid.

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};

use super::{CoilSample, EmaError, EmaTrajectory};

const FIELD_SUFFIXES: [&str; 7] = ["x", "y", "z", "ox", "oy", "oz", "rms"];

pub fn parse_ema_csv(bytes: &[u8]) -> Result<EmaTrajectory, EmaError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EmaError::Csv {
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(EmaError::Csv {
        line: 1,
        msg: "empty file".into(),
    })?;
    let rate = parse_header(header)?;

    let (_, columns) = lines.next().ok_or(EmaError::Csv {
        line: 2,
        msg: "missing column header".into(),
    })?;
    let coil_ids = parse_columns(columns)?;
    let width = coil_ids.len() * 7;

    let mut frames = Vec::new();
    for (i, row) in lines {
        let line = i + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != width {
            return Err(EmaError::Csv {
                line,
                msg: format!("expected {width} columns, got {}", fields.len()),
            });
        }
        let mut frame = Vec::with_capacity(coil_ids.len());
        for c in 0..coil_ids.len() {
            let mut v = [0.0f64; 7];
            for (k, slot) in v.iter_mut().enumerate() {
                let tok = fields[c * 7 + k].trim();
                *slot = tok.parse().map_err(|_| EmaError::Csv {
                    line,
                    msg: format!("bad float literal `{tok}` in column {}", c * 7 + k + 1),
                })?;
            }
            frame.push(CoilSample::new(
                Point3::new(v[0], v[1], v[2]),
                Vector3::new(v[3], v[4], v[5]),
                v[6],
            ));
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(EmaError::Csv {
            line: 3,
            msg: "no data rows".into(),
        });
    }
    EmaTrajectory::new(coil_ids, rate, frames)
}

fn parse_header(header: &str) -> Result<f64, EmaError> {
    let mut parts = header.split(';');
    let magic = parts.next().unwrap_or("").trim();
    if magic != "ema-csv v1" {
        return Err(EmaError::Csv {
            line: 1,
            msg: format!("expected `ema-csv v1`, got `{magic}`"),
        });
    }
    let rate_part = parts
        .next()
        .map(str::trim)
        .and_then(|p| p.strip_prefix("rate="))
        .ok_or(EmaError::Csv {
            line: 1,
            msg: "missing `rate=<hz>`".into(),
        })?;
    let rate: f64 = rate_part.parse().map_err(|_| EmaError::Csv {
        line: 1,
        msg: format!("bad rate `{rate_part}`"),
    })?;
    if !rate.is_finite() || rate <= 0.0 {
        return Err(EmaError::Csv {
            line: 1,
            msg: format!("sample rate must be positive, got {rate}"),
        });
    }
    Ok(rate)
}

fn parse_columns(columns: &str) -> Result<Vec<String>, EmaError> {
    let fields: Vec<&str> = columns.split(',').map(str::trim).collect();
    if fields.is_empty() || !fields.len().is_multiple_of(7) {
        return Err(EmaError::Csv {
            line: 2,
            msg: format!("column count {} is not a multiple of 7", fields.len()),
        });
    }
    let mut coil_ids = Vec::new();
    for group in fields.chunks(7) {
        let mut id = None;
        for (k, field) in group.iter().enumerate() {
            let rest = field.strip_prefix("coil:").ok_or(EmaError::Csv {
                line: 2,
                msg: format!("column `{field}` does not start with `coil:`"),
            })?;
            let (coil, suffix) = rest.rsplit_once('.').ok_or(EmaError::Csv {
                line: 2,
                msg: format!("column `{field}` is missing a field suffix"),
            })?;
            if suffix != FIELD_SUFFIXES[k] {
                return Err(EmaError::Csv {
                    line: 2,
                    msg: format!(
                        "column `{field}`: expected suffix `.{}` at this position",
                        FIELD_SUFFIXES[k]
                    ),
                });
            }
            match &id {
                None => id = Some(coil.to_string()),
                Some(prev) if prev != coil => {
                    return Err(EmaError::Csv {
                        line: 2,
                        msg: format!("column group mixes coils `{prev}` and `{coil}`"),
                    })
                }
                _ => {}
            }
        }
        coil_ids.push(id.unwrap());
    }
    Ok(coil_ids)
}

/// Serializes a trajectory to the canonical CSV format.
///
/// Floats use the shortest decimal form that round-trips the exact value.
/// Samples flagged invalid are written as `nan` in all seven fields, which
/// parses back as invalid.
pub fn write_ema_csv(traj: &EmaTrajectory) -> Vec<u8> {
    let mut out = String::new();
    writeln!(out, "ema-csv v1; rate={}", traj.sample_rate_hz()).unwrap();
    let header: Vec<String> = traj
        .coil_ids()
        .iter()
        .flat_map(|id| FIELD_SUFFIXES.iter().map(move |s| format!("coil:{id}.{s}")))
        .collect();
    writeln!(out, "{}", header.join(",")).unwrap();
    for frame in traj.frames() {
        let mut fields = Vec::with_capacity(frame.len() * 7);
        for s in frame {
            if s.valid {
                fields.push(s.position.x.to_string());
                fields.push(s.position.y.to_string());
                fields.push(s.position.z.to_string());
                fields.push(s.orientation.x.to_string());
                fields.push(s.orientation.y.to_string());
                fields.push(s.orientation.z.to_string());
                fields.push(s.rms_error.to_string());
            } else {
                fields.extend(std::iter::repeat_n("nan".to_string(), 7));
            }
        }
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    out.into_bytes()
}
