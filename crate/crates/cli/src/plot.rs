//! Mean and ±1 std curves across seeds, as a static SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use toc_core::metrics::{read_log_file, LogRow, Phase, METRIC_COLUMNS};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub step: u64,
    pub mean: f64,
    /// Population std across seeds; zero for a single seed.
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub variant: String,
    pub points: Vec<Point>,
}

pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| CliError::Config(format!("bad glob `{pattern}`: {e}")))?
        .filter_map(|p| p.ok())
        .collect();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no files match `{pattern}`")));
    }
    Ok(paths)
}

pub fn read_rows(paths: &[PathBuf]) -> Result<Vec<LogRow>, CliError> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_log_file(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?);
    }
    Ok(rows)
}

/// Groups rows of the given phases by variant, then by step, and averages
/// over seeds. Rows with an empty cell for `metric` are skipped.
pub fn aggregate(rows: &[LogRow], metric: &str, phases: &[Phase]) -> Result<Vec<Series>, CliError> {
    if !METRIC_COLUMNS.contains(&metric) {
        return Err(CliError::Config(format!(
            "unknown metric `{metric}` (one of {})",
            METRIC_COLUMNS.join(", ")
        )));
    }
    let mut by_variant: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| phases.contains(&r.phase)) {
        if let Some(Some(v)) = r.metric(metric) {
            by_variant
                .entry(&r.variant)
                .or_default()
                .entry(r.step)
                .or_default()
                .push(v);
        }
    }
    Ok(by_variant
        .into_iter()
        .map(|(variant, steps)| Series {
            variant: variant.to_string(),
            points: steps
                .into_iter()
                .map(|(step, vs)| {
                    let n = vs.len() as f64;
                    let mean = vs.iter().sum::<f64>() / n;
                    let var = vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    Point {
                        step,
                        mean,
                        std: var.sqrt(),
                        seeds: vs.len(),
                    }
                })
                .collect(),
        })
        .collect())
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 150.0, 30.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(raw);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

/// Renders the series. Every plotted point carries its exact values as
/// `data-step`, `data-mean` and `data-std` attributes.
pub fn render_svg(series: &[Series], metric: &str) -> String {
    let pts = series.iter().flat_map(|s| &s.points);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p.step as f64);
        x1 = x1.max(p.step as f64);
        y0 = y0.min(p.mean - p.std);
        y1 = y1.max(p.mean + p.std);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (ml, mr, mt, mb) = MARGIN;
    let pw = WIDTH - ml - mr;
    let ph = HEIGHT - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 18.0
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 5.0,
            ml - 8.0,
            y + 4.0,
            format_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        ml + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{metric}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(p.mean + p.std)))
            .collect();
        let lower: Vec<String> = ser
            .points
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(p.mean - p.std)))
            .collect();
        let mean: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(p.mean)))
            .collect();
        let _ = writeln!(s, r#"<g class="series" data-variant="{}">"#, ser.variant);
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            mean.join(" ")
        );
        for p in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" data-step="{}" data-mean="{}" data-std="{}"/>"#,
                sx(p.step as f64),
                sy(p.mean),
                p.step,
                p.mean,
                p.std
            );
        }
        let ly = mt + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - mr + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            ser.variant
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(t: f64) -> String {
    let r = (t * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}
