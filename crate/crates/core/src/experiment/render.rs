//! Standalone SVG line charts of epoch telemetry.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::telemetry::{read_telemetry, TelemetryRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let pad = hi.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn draw_panel(out: &mut String, panel: &Panel, x0: f64, width: f64) {
    let plot_x = x0 + MARGIN_LEFT;
    let plot_w = width - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_y = MARGIN_TOP;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let all = panel.series.iter().flat_map(|s| s.points.iter());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    let (xlo, xhi) = nice_range(xlo, xhi);
    let (ylo, yhi) = nice_range(ylo, yhi);
    let sx = |x: f64| plot_x + (x - xlo) / (xhi - xlo) * plot_w;
    let sy = |y: f64| plot_y + plot_h - (y - ylo) / (yhi - ylo) * plot_h;

    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"##,
        x0 + width / 2.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{plot_x:.2}" y="{plot_y:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = ylo + f * (yhi - ylo);
        let xv = xlo + f * (xhi - xlo);
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{:.4}</text>"##,
            plot_x - 6.0,
            sy(yv) + 4.0,
            yv
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{:.1}</text>"##,
            sx(xv),
            plot_y + plot_h + 16.0,
            xv
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"##,
        plot_x + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"##,
        x0 + 16.0,
        plot_y + plot_h / 2.0,
        x0 + 16.0,
        plot_y + plot_h / 2.0,
        escape(&panel.y_label)
    );

    if panel.series.iter().all(|s| s.points.is_empty()) {
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13" fill="#888">no data</text>"##,
            plot_x + plot_w / 2.0,
            plot_y + plot_h / 2.0
        );
    }

    for (i, s) in panel.series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(
                out,
                r##"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"##,
                s.color,
                pts.join(" ")
            );
        } else {
            let (x, y) = s.points[0];
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"##,
                sx(x),
                sy(y),
                s.color
            );
        }
        let ly = plot_y + 14.0 + 16.0 * i as f64;
        let lx = plot_x + plot_w - 150.0;
        let _ = writeln!(
            out,
            r##"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/>"##,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            s.color
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{ly:.2}" font-size="11">{}</text>"##,
            lx + 24.0,
            escape(&s.name)
        );
    }
}

/// Panels laid out side by side in one SVG 1.1 document.
pub fn svg_document(panels: &[Panel]) -> String {
    let total = WIDTH * panels.len() as f64;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" height="{HEIGHT}" viewBox="0 0 {total} {HEIGHT}" font-family="sans-serif">"##
    );
    let _ = writeln!(
        out,
        r##"<rect width="{total}" height="{HEIGHT}" fill="white"/>"##
    );
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, WIDTH * i as f64, WIDTH);
    }
    out.push_str("</svg>\n");
    out
}

fn series(
    name: &str,
    color: &'static str,
    records: &[TelemetryRecord],
    f: impl Fn(&TelemetryRecord) -> Option<f64>,
) -> Series {
    Series {
        name: name.into(),
        color,
        points: records
            .iter()
            .filter_map(|r| f(r).map(|y| (r.epoch as f64, y)))
            .collect(),
    }
}

/// The three charts as `(file name, SVG text)`.
pub fn charts(records: &[TelemetryRecord]) -> Vec<(&'static str, String)> {
    let panel = |title: &str, y: &str, series: Vec<Series>| Panel {
        title: title.into(),
        x_label: "epoch".into(),
        y_label: y.into(),
        series: series
            .into_iter()
            .filter(|s| !s.points.is_empty())
            .collect(),
    };
    let loss = panel(
        "Training and perturbation loss (epoch mean)",
        "loss",
        vec![
            series("train loss", "#1f77b4", records, |r| Some(r.train_loss)),
            series("perturbation loss", "#d62728", records, |r| r.perturb_loss),
        ],
    );
    let grad = panel(
        "Perturbation-loss gradient norm",
        "‖∇L‖₂",
        vec![series("gradient norm", "#2ca02c", records, |r| {
            r.perturb_grad_norm
        })],
    );
    let dist = panel(
        "Perturbation distance",
        "‖ε‖₂",
        vec![series("distance", "#9467bd", records, |r| {
            r.perturb_distance
        })],
    );
    let gen = panel(
        "Training vs validation loss (epoch mean)",
        "loss",
        vec![
            series("train loss", "#1f77b4", records, |r| Some(r.train_loss)),
            series("validation loss", "#ff7f0e", records, |r| Some(r.val_loss)),
        ],
    );
    vec![
        ("loss_trends.svg", svg_document(&[loss])),
        ("grad_and_distance.svg", svg_document(&[grad, dist])),
        ("train_vs_val.svg", svg_document(&[gen])),
    ]
}

/// Reads `telemetry.csv` in `run_dir` and writes the three charts beside it.
pub fn render(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_telemetry(&run_dir.join("telemetry.csv"))?;
    if records.is_empty() {
        return Err(Error::Parse {
            path: run_dir.join("telemetry.csv"),
            line: 2,
            message: "no data rows".into(),
        });
    }
    let mut written = Vec::new();
    for (name, svg) in charts(&records) {
        let path = run_dir.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
