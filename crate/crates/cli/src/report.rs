//! CSV tables, JSON verdicts and SVG log-log plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use holestokes::experiments::{SweepRecord, TAIL};
use holestokes::{LabError, Result};

pub const CSV_COLUMNS: [&str; 8] = ["epsilon", "p", "grad_lp", "pressure_lp", "source_lp", "ratio", "dofs", "seconds"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Extrapolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub claim: String,
    pub anchor: String,
    pub status: Status,
    pub measured: Map<String, Value>,
    pub thresholds: Map<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    pub fn new(claim: &str, anchor: &str) -> Verdict {
        Verdict {
            claim: claim.into(),
            anchor: anchor.into(),
            status: Status::Inconclusive,
            measured: Map::new(),
            thresholds: Map::new(),
            note: None,
        }
    }

    pub fn measure(mut self, key: &str, v: impl Into<Value>) -> Verdict {
        self.measured.insert(key.into(), v.into());
        self
    }

    pub fn threshold(mut self, key: &str, v: f64) -> Verdict {
        self.thresholds.insert(key.into(), v.into());
        self
    }

    pub fn note(mut self, text: &str) -> Verdict {
        self.note = Some(text.into());
        self
    }

    /// Pass or fail when a threshold exists, inconclusive otherwise.
    pub fn decide(mut self, ok: Option<bool>) -> Verdict {
        self.status = match ok {
            Some(true) => Status::Pass,
            Some(false) => Status::Fail,
            None => Status::Inconclusive,
        };
        if ok.is_none() && self.note.is_none() {
            self.note = Some("no threshold configured".into());
        }
        self
    }

    pub fn with_status(mut self, status: Status) -> Verdict {
        self.status = status;
        self
    }
}

/// Finite floats as numbers, everything else as strings.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(x.to_string()))
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub experiment: String,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Value>,
}

impl Report {
    pub fn failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Fail)
    }
}

/// Writes output files under one directory.
pub struct Outputs {
    pub dir: PathBuf,
    pub name: String,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, name: &str) -> Result<Outputs> {
        fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            name: name.into(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, suffix: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(format!("{}{suffix}", self.name));
        fs::write(&path, contents).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn report(&mut self, report: &Report) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(report).map_err(|e| LabError::Internal(e.to_string()))?;
        text.push('\n');
        self.write(".json", &text)
    }
}

pub fn sweep_csv(records: &[SweepRecord], timings: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| LabError::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in records {
        let seconds = if timings { format!("{:.3}", r.seconds) } else { String::new() };
        w.write_record([
            r.epsilon.to_string(),
            r.p.to_string(),
            r.report.grad_velocity_lp.to_string(),
            r.report.pressure_lp.to_string(),
            r.report.source_lp.to_string(),
            r.ratio.to_string(),
            r.dofs.to_string(),
            seconds,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Internal(e.to_string()))
}

/// A generic table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| LabError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Internal(e.to_string()))
}

pub struct Series {
    pub label: String,
    /// `(1/ε, value)`.
    pub points: Vec<(f64, f64)>,
    /// Slope fitted over the last points, drawn through their centroid.
    pub slope: Option<f64>,
}

const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Log-log plot of value against `1/ε`.
pub fn loglog_svg(title: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    if pts.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">no positive data</text>"#, w / 2.0, h / 2.0);
        s.push_str("</svg>\n");
        return s;
    }
    let lo = |f: fn(&(f64, f64)) -> f64| pts.iter().map(f).fold(f64::INFINITY, f64::min);
    let hi = |f: fn(&(f64, f64)) -> f64| pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let (mut x0, mut x1) = (lo(|p| p.0).floor(), hi(|p| p.0).ceil());
    let (mut y0, mut y1) = (lo(|p| p.1).floor(), hi(|p| p.1).ceil());
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        w - left - right,
        h - top - bottom
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = px(d as f64);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, h - bottom);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#, h - bottom + 16.0);
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = py(d as f64);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, w - right);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, left - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">1/epsilon</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, se) in series.iter().enumerate() {
        let c = COLOURS[i % COLOURS.len()];
        let logs: Vec<(f64, f64)> = se
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| (x.log10(), y.log10()))
            .collect();
        let path: Vec<String> = logs.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        if path.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}"/>"#, path.join(" "));
        }
        for (x, y) in &logs {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, px(*x), py(*y));
        }
        let mut label = se.label.clone();
        if let (Some(slope), true) = (se.slope, logs.len() >= 2) {
            let tail = &logs[logs.len().saturating_sub(TAIL)..];
            let n = tail.len() as f64;
            let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
            let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
            let (a, b) = (tail[0].0, tail[tail.len() - 1].0);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="5,4"/>"#,
                px(a),
                py(my + slope * (a - mx)),
                px(b),
                py(my + slope * (b - mx))
            );
            let _ = write!(label, " (slope {slope:.3})");
        }
        let ly = top + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, left + 12.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, left + 22.0, escape(&label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
