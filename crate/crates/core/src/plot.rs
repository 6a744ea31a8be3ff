//! Deterministic SVG line charts for loss histories and error curves.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn render_svg(&self) -> Result<String> {
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || y > 0.0))
            .collect();
        if pts.is_empty() {
            return Err(Error::Format("nothing to plot".into()));
        }
        let (mut x0, mut x1) = bounds(pts.iter().map(|p| p.0));
        let (mut y0, mut y1) = bounds(pts.iter().map(|p| ty(p.1)));
        if self.log_y {
            y0 = y0.floor();
            y1 = y1.ceil();
        }
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=5 {
            let x = x0 + (x1 - x0) * i as f64 / 5.0;
            let px = sx(x);
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP,
                TOP + ph,
                TOP + ph + 18.0,
                tick(x)
            );
        }
        let yticks: Vec<f64> = if self.log_y {
            (y0 as i64..=y1 as i64).map(|e| 10f64.powi(e as i32)).collect()
        } else {
            (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
        };
        for y in yticks {
            let py = sy(y);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                py + 4.0,
                tick(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .filter(|&&(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || y > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
            let ly = TOP + 16.0 * (i as f64 + 1.0);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                WIDTH - RIGHT + 12.0,
                WIDTH - RIGHT + 32.0,
                WIDTH - RIGHT + 38.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.0e}")
    } else if a >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// What a CSV file holds, decided by its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    /// `step,loss,block_index,wall_ms`
    Loss,
    /// `sensors,method,n,mu,max_h1,mean_h1`
    Comparison,
}

fn read_table(path: &Path) -> Result<(CsvKind, Vec<csv::StringRecord>)> {
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => bad(format!("{other:?}")),
    })?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let kind = match header.iter().collect::<Vec<_>>().as_slice() {
        ["step", "loss", "block_index", "wall_ms"] => CsvKind::Loss,
        ["sensors", "method", "n", "mu", "max_h1", "mean_h1"] => CsvKind::Comparison,
        _ => return Err(bad(format!("unrecognized header {header:?}"))),
    };
    let rows = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(e.to_string()))?;
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok((kind, rows))
}

fn num(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<f64> {
    rec.get(i)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| Error::Format(format!("{}: bad number in row {rec:?}", path.display())))
}

/// Loss histories: one polyline per file, log-scale loss.
pub fn loss_chart(files: &[&Path]) -> Result<LineChart> {
    let mut series = Vec::new();
    for path in files {
        let (kind, rows) = read_table(path)?;
        if kind != CsvKind::Loss {
            return Err(Error::Format(format!("{} is not a loss history", path.display())));
        }
        let points = rows
            .iter()
            .map(|r| Ok((num(path, r, 0)?, num(path, r, 1)?)))
            .collect::<Result<Vec<_>>>()?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        series.push(Series { name, points });
    }
    Ok(LineChart {
        title: "Training loss".into(),
        x_label: "step".into(),
        y_label: "loss".into(),
        log_y: true,
        series,
    })
}

/// Max H1 error against sensor count: one polyline per method, the affine
/// method taking its best `n` at each sensor count.
pub fn comparison_chart(path: &Path) -> Result<LineChart> {
    let (kind, rows) = read_table(path)?;
    if kind != CsvKind::Comparison {
        return Err(Error::Format(format!("{} is not a comparison table", path.display())));
    }
    let mut best: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in &rows {
        let m = num(path, r, 0)?;
        let err = num(path, r, 4)?;
        if !err.is_finite() {
            continue;
        }
        let slot = best
            .entry(r.get(1).unwrap_or_default().to_string())
            .or_default()
            .entry(m as u64)
            .or_insert(f64::INFINITY);
        *slot = slot.min(err);
    }
    Ok(LineChart {
        title: "Max H1 error".into(),
        x_label: "sensors".into(),
        y_label: "max H1 error".into(),
        log_y: true,
        series: best
            .into_iter()
            .map(|(name, pts)| Series {
                name,
                points: pts.into_iter().map(|(m, e)| (m as f64, e)).collect(),
            })
            .collect(),
    })
}

/// Picks the chart type from the first file's header.
pub fn chart_from_files(files: &[&Path]) -> Result<LineChart> {
    let first = files.first().ok_or_else(|| Error::Format("no CSV files given".into()))?;
    match read_table(first)?.0 {
        CsvKind::Loss => loss_chart(files),
        CsvKind::Comparison if files.len() == 1 => comparison_chart(first),
        CsvKind::Comparison => Err(Error::Format("comparison tables are plotted one at a time".into())),
    }
}
