//! Writing a [`SuiteReport`] to disk: `scores.csv`, `report.json`, one CSV
//! per curve under `curves/` and SVG plots of accuracy against `ñ`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::suite::{ScoreRow, SuiteReport};
use crate::error::{Error, Result};

pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CURVES_DIR: &str = "curves";
pub const PLOTS_DIR: &str = "plots";

pub const SCORE_HEADER: [&str; 10] = [
    "method", "chunk", "mask", "auc_top", "auc_bottom", "f1s", "ap", "roc", "runtime_s", "kept",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Scores table; `runtime_s` stays blank unless `timings` is set so that
/// repeated runs produce identical files.
pub fn write_scores_csv(rows: &[ScoreRow], path: &Path, timings: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SCORE_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.chunk.clone(),
            r.mask.clone(),
            fmt_opt(r.auc_top),
            fmt_opt(r.auc_bottom),
            fmt_opt(r.f1s),
            fmt_opt(r.ap),
            fmt_opt(r.roc),
            if timings { fmt_opt(r.runtime_s) } else { String::new() },
            r.kept.map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read `scores.csv` back; blank cells become `None`.
pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("bad number {s:?} in {}", path.display())))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(ScoreRow {
            method: f(0).into(),
            chunk: f(1).into(),
            mask: f(2).into(),
            auc_top: num(f(3))?,
            auc_bottom: num(f(4))?,
            f1s: num(f(5))?,
            ap: num(f(6))?,
            roc: num(f(7))?,
            runtime_s: num(f(8))?,
            kept: match f(9) {
                "" => None,
                s => Some(s == "true"),
            },
        });
    }
    Ok(rows)
}

fn curve_file_name(method: &str, chunk: &str, mask: &str) -> String {
    let chunk = if chunk == "-" { "none" } else { chunk };
    format!("{method}__{chunk}__{mask}.csv")
}

pub fn write_curves(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for rec in &report.curves {
        let c = &rec.curve;
        let path = dir.join(curve_file_name(&c.method, &rec.chunk, c.mask.name()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["k", "n_tilde", "n_tilde_bottom", "s_top", "s_bottom", "accuracy"])?;
        for s in &c.samples {
            w.write_record(
                [s.k, s.n_tilde, s.n_tilde_bottom, s.s_top, s.s_bottom, s.accuracy].map(|v| format!("{v:.6}")),
            )?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One SVG per (chunking, mask): accuracy against `ñ`, one polyline per method.
pub fn write_plots(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let mut chunks: Vec<&str> = report.outcomes.iter().map(|o| o.chunk.as_str()).collect();
    chunks.dedup();
    let masks: Vec<_> = {
        let mut m: Vec<_> = report.curves.iter().map(|c| c.curve.mask).collect();
        m.sort();
        m.dedup();
        m
    };
    for chunk in &chunks {
        for &mask in &masks {
            let series: Vec<_> = report
                .curves
                .iter()
                .filter(|c| c.curve.mask == mask && (c.chunk == *chunk || c.chunk == "-"))
                .collect();
            if series.is_empty() {
                continue;
            }
            let mut svg = String::new();
            let _ = writeln!(
                svg,
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
            );
            let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
            let (x0, y0, x1, y1) = (pad, h - pad, w - pad, pad);
            let _ = writeln!(svg, r#"<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>"#);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">fraction perturbed ({chunk}, {mask})</text>"#,
                w / 2.0,
                h - 10.0
            );
            let _ = writeln!(svg, r#"<text x="10" y="{}" transform="rotate(-90 10 {})">accuracy</text>"#, h / 2.0, h / 2.0);
            for (i, rec) in series.iter().enumerate() {
                let c = &rec.curve;
                let colour = PALETTE[i % PALETTE.len()];
                let pts: Vec<String> = std::iter::once((0.0, c.clean_accuracy))
                    .chain(c.samples.iter().map(|s| (s.n_tilde, s.accuracy)))
                    .map(|(x, y)| format!("{:.2},{:.2}", x0 + x.clamp(0.0, 1.0) * (x1 - x0), y0 - y.clamp(0.0, 1.0) * (y0 - y1)))
                    .collect();
                let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, pts.join(" "));
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
                    x1 - 110.0,
                    y1 + 14.0 * (i as f64 + 1.0),
                    c.method
                );
            }
            svg.push_str("</svg>\n");
            let chunk_name = if *chunk == "-" { "none" } else { chunk };
            let path = dir.join(format!("accuracy__{chunk_name}__{}.svg", mask.name()));
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Everything: scores, JSON report, curves and plots under `dir`.
pub fn write_report(report: &SuiteReport, dir: &Path, timings: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_scores_csv(&report.rows, &dir.join(SCORES_FILE), timings)?;
    let mut json = report.clone();
    if !timings {
        for r in &mut json.rows {
            r.runtime_s = None;
        }
    }
    let path = dir.join(REPORT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&json)?).map_err(|e| Error::io(&path, e))?;
    write_curves(report, &dir.join(CURVES_DIR))?;
    write_plots(report, &dir.join(PLOTS_DIR))?;
    Ok(())
}
