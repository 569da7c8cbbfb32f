//! Report rendering: a versioned JSON summary (`report-v1`), one CSV per
//! metric series, and one SVG line plot per series.
//!
//! Output is deterministic byte for byte for identical inputs. Files are
//! written to a temp name and renamed into place, the JSON summary last,
//! so a failed run leaves no plausible-looking report. Timing information
//! is deliberately not part of the serialized report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, MetricSeries, SummaryStats};

pub const REPORT_VERSION: &str = "report-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStatus {
    Passed,
    GateFailed,
    Error,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub name: String,
    pub status: PhaseStatus,
    pub detail: String,
}

/// One evaluation gate: a named threshold compared against a measured
/// value derived from a series or scalar metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub name: String,
    /// The series or scalar the measurement came from.
    pub metric: String,
    pub threshold: f64,
    pub measured: f64,
    pub pass: bool,
}

impl GateOutcome {
    /// Gate on a series' max value.
    pub fn max_of(name: &str, series: &MetricSeries, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            metric: series.name.clone(),
            threshold,
            measured: series.summary.max,
            pass: series.summary.max <= threshold,
        }
    }

    /// Gate on a scalar measurement.
    pub fn scalar(name: &str, metric: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            metric: metric.to_string(),
            threshold,
            measured,
            pass: measured <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetric {
    pub name: String,
    pub unit: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub name: String,
    pub unit: String,
    pub rate_hz: f64,
    pub frame_count: usize,
    pub summary: SummaryStats,
}

/// The serialized report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub version: String,
    /// Build-lifecycle phases; empty for standalone evaluation runs.
    pub phases: Vec<PhaseSummary>,
    pub gates: Vec<GateOutcome>,
    pub series: Vec<SeriesSummary>,
    pub scalars: Vec<ScalarMetric>,
    /// Offset of the low-discrepancy sampling sequence used in evaluation.
    pub seed: u64,
    pub provenance: BTreeMap<String, String>,
}

impl ReportDoc {
    pub fn new(seed: u64) -> Self {
        Self {
            version: REPORT_VERSION.to_string(),
            phases: Vec::new(),
            gates: Vec::new(),
            series: Vec::new(),
            scalars: Vec::new(),
            seed,
            provenance: BTreeMap::new(),
        }
    }

    pub fn add_series_summaries(&mut self, series: &[MetricSeries]) {
        for s in series {
            self.series.push(SeriesSummary {
                name: s.name.clone(),
                unit: s.unit.clone(),
                rate_hz: s.rate_hz,
                frame_count: s.values.len(),
                summary: s.summary,
            });
        }
    }

    pub fn all_gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let tmp = path.with_extension("tmp");
    let io_err = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Writes `report.json` plus `<series>.csv` and `<series>.svg` per metric
/// series into `output_dir`. A gate whose `metric` matches a series name
/// draws its threshold into that series' plot.
pub fn generate_report(
    doc: &ReportDoc,
    series: &[MetricSeries],
    output_dir: &Path,
) -> Result<(), EvalError> {
    std::fs::create_dir_all(output_dir).map_err(|e| EvalError::Io {
        path: output_dir.display().to_string(),
        source: e,
    })?;
    for s in series {
        let stem = sanitize(&s.name);
        atomic_write(&output_dir.join(format!("{stem}.csv")), render_csv(s).as_bytes())?;
        let threshold = doc
            .gates
            .iter()
            .find(|g| g.metric == s.name)
            .map(|g| g.threshold);
        atomic_write(
            &output_dir.join(format!("{stem}.svg")),
            render_svg(s, threshold).as_bytes(),
        )?;
    }
    let mut json = serde_json::to_vec_pretty(doc)?;
    json.push(b'\n');
    atomic_write(&output_dir.join("report.json"), &json)?;
    Ok(())
}

fn render_csv(series: &MetricSeries) -> String {
    let mut out = String::from("frame,time_s,value\n");
    for (i, v) in series.values.iter().enumerate() {
        let time = i as f64 / series.rate_hz;
        writeln!(out, "{i},{time},{v}").unwrap();
    }
    out
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 360.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 15.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;

/// Minimal SVG 1.1 line plot: axes, one polyline, and an optional dashed
/// threshold line.
fn render_svg(series: &MetricSeries, threshold: Option<f64>) -> String {
    let n = series.values.len();
    let lo = series.summary.min.min(0.0).min(threshold.unwrap_or(0.0));
    let mut hi = series.summary.max.max(threshold.unwrap_or(f64::NEG_INFINITY));
    if hi <= lo {
        hi = lo + 1.0;
    }
    let span = hi - lo;
    let x = |i: usize| {
        MARGIN_L + (PLOT_W - MARGIN_L - MARGIN_R) * (i as f64) / ((n - 1).max(1) as f64)
    };
    let y = |v: f64| PLOT_H - MARGIN_B - (PLOT_H - MARGIN_T - MARGIN_B) * ((v - lo) / span);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect x="0" y="0" width="{PLOT_W}" height="{PLOT_H}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{MARGIN_L}" y="20" font-family="monospace" font-size="13">{} [{}]</text>"#,
        series.name, series.unit
    )
    .unwrap();
    // Axes.
    writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="black" stroke-width="1"/>"#,
        y(lo),
        PLOT_W - MARGIN_R,
        y(lo)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{:.3}" x2="{MARGIN_L}" y2="{:.3}" stroke="black" stroke-width="1"/>"#,
        y(hi),
        y(lo)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="5" y="{:.3}" font-family="monospace" font-size="11">{:.4}</text>"#,
        y(hi) + 4.0,
        hi
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="5" y="{:.3}" font-family="monospace" font-size="11">{:.4}</text>"#,
        y(lo),
        lo
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" font-family="monospace" font-size="11">frame {}</text>"#,
        PLOT_W - MARGIN_R - 80.0,
        PLOT_H - 10.0,
        n - 1
    )
    .unwrap();
    if let Some(t) = threshold {
        writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="red" stroke-width="1" stroke-dasharray="6,3"/>"#,
            y(t),
            PLOT_W - MARGIN_R,
            y(t)
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.3}" y="{:.3}" font-family="monospace" font-size="11" fill="red">gate {:.4}</text>"#,
            MARGIN_L + 4.0,
            y(t) - 4.0,
            t
        )
        .unwrap();
    }
    let points: Vec<String> = series
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{:.3},{:.3}", x(i), y(*v)))
        .collect();
    writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    )
    .unwrap();
    writeln!(svg, "</svg>").unwrap();
    svg
}
