//! Writing experiment reports as CSV, JSON and SVG.
//!
//! Output is byte-stable: maps are ordered, floats use the shortest
//! round-trip scientific form, and nothing depends on time or environment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::experiment::{ExperimentReport, ExponentFit, Verdict};

/// JSON schema of the verdict document.
pub const VERDICT_SCHEMA: &str = include_str!("../schema/verdicts.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            _ => Err(LabError::Parse(format!("unknown format '{s}' (csv, json, svg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictDocument {
    pub id: String,
    pub scenario: String,
    pub order: usize,
    pub result: String,
    pub verdicts: Vec<Verdict>,
    pub fits: Vec<ExponentFit>,
    pub flags: Vec<String>,
}

impl VerdictDocument {
    pub fn from_report(r: &ExperimentReport) -> Self {
        Self {
            id: r.id.clone(),
            scenario: r.scenario.clone(),
            order: r.order,
            result: if r.passed() { "PASS" } else { "FAIL" }.into(),
            verdicts: r.verdicts.clone(),
            fits: r.fits.clone(),
            flags: r.flags.clone(),
        }
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        "nan".into()
    }
}

fn metric_names(r: &ExperimentReport) -> Vec<String> {
    let mut names: Vec<String> = r.rows.iter().flat_map(|row| row.metrics.keys().cloned()).collect();
    names.sort();
    names.dedup();
    names
}

pub fn metrics_csv(r: &ExperimentReport) -> String {
    let names = metric_names(r);
    let mut s = String::from("N,sigma");
    for n in &names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for row in &r.rows {
        let _ = write!(s, "{},{}", row.n, num(row.sigma));
        for n in &names {
            s.push(',');
            s.push_str(&row.metrics.get(n).map_or_else(|| "nan".into(), |v| num(*v)));
        }
        s.push('\n');
    }
    s
}

pub fn table_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("N,k,exact,expansion,abs_error\n");
    for t in &r.table {
        let _ = writeln!(s, "{},{},{},{},{}", t.n, t.k, num(t.exact), num(t.expansion), num(t.abs_error));
    }
    s
}

pub fn verdicts_json(r: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(&VerdictDocument::from_report(r)).expect("verdicts serialize");
    s.push('\n');
    s
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Log-log plot of every positive metric series against `sigma`, one
/// polyline per series.
pub fn plot_svg(r: &ExperimentReport) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let series: Vec<(String, Vec<(f64, f64)>)> = metric_names(r)
        .into_iter()
        .filter_map(|m| {
            let pts: Vec<(f64, f64)> = r
                .rows
                .iter()
                .filter_map(|row| {
                    let v = *row.metrics.get(&m)?;
                    (v > 0.0 && v.is_finite() && row.sigma > 0.0).then(|| (row.sigma.log10(), v.log10()))
                })
                .collect();
            (!pts.is_empty()).then_some((m, pts))
        })
        .collect();
    let all = series.iter().flat_map(|(_, p)| p.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{} on {}</text>",
        w / 2.0,
        r.id,
        r.scenario
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">log10 sigma [{:.3}, {:.3}]</text>",
        w / 2.0,
        h - 20.0,
        x0,
        x1
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\">log10 metric [{:.3}, {:.3}]</text>",
        h / 2.0,
        h / 2.0,
        y0,
        y1
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"><title>{name}</title></polyline>",
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            w - pad + 4.0 - 120.0,
            pad + 14.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Number of plotted series (metrics with at least one positive value).
pub fn series_count(r: &ExperimentReport) -> usize {
    metric_names(r)
        .iter()
        .filter(|m| r.series(m).iter().any(|v| *v > 0.0 && v.is_finite()))
        .count()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes the requested formats into `dir` and returns the written paths.
///
/// CSV produces `<id>_<scenario>_metrics.csv` and, when the report has an
/// evaluation table, `<id>_<scenario>_table.csv`.
pub fn emit_report(r: &ExperimentReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LabError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let stem = format!("{}_{}", r.id, r.scenario);
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut out = Vec::new();
    for f in formats {
        let mut files: Vec<(String, String)> = Vec::new();
        match f {
            Format::Csv => {
                files.push((format!("{stem}_metrics.csv"), metrics_csv(r)));
                if !r.table.is_empty() {
                    files.push((format!("{stem}_table.csv"), table_csv(r)));
                }
            }
            Format::Json => files.push((format!("{stem}_verdicts.json"), verdicts_json(r))),
            Format::Svg => files.push((format!("{stem}_plot.svg"), plot_svg(r))),
        }
        for (name, text) in files {
            let p = dir.join(name);
            write_file(&p, &text)?;
            out.push(p);
        }
    }
    Ok(out)
}
