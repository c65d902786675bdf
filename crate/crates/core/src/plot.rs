//! Standalone SVG line plots. Output depends only on the input data.

use std::fmt::Write as _;
use std::path::Path;

use crate::decomp::MeasureCurve;
use crate::error::{Error, Result};
use crate::io::write_text;
use crate::spectral::Spectrum;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            x,
            y,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Labelled vertical lines, e.g. filter cutoffs.
    pub markers: Vec<(String, f64)>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Plot::default()
        }
    }

    pub fn with_series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn with_marker(mut self, label: impl Into<String>, x: f64) -> Self {
        self.markers.push((label.into(), x));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::Parameter("plot has no series".into()));
        }
        for s in &self.series {
            if s.x.is_empty() {
                return Err(Error::Parameter(format!("series {:?} is empty", s.label)));
            }
            if s.x.len() != s.y.len() {
                return Err(Error::ShapeMismatch(format!(
                    "series {:?}: {} x values, {} y values",
                    s.label,
                    s.x.len(),
                    s.y.len()
                )));
            }
            if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "series {:?} has non-finite values",
                    s.label
                )));
            }
        }
        if self.markers.iter().any(|m| !m.1.is_finite()) {
            return Err(Error::Parameter("non-finite marker position".into()));
        }
        Ok(())
    }

    pub fn render(&self) -> Result<String> {
        self.validate()?;
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.x.iter().copied())
            .chain(self.markers.iter().map(|m| m.1));
        let (x0, x1) = padded_range(xs);
        let (y0, y1) = padded_range(self.series.iter().flat_map(|s| s.y.iter().copied()));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        )
        .unwrap();

        // axes and ticks
        writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        for t in ticks(x0, x1) {
            let x = sx(t);
            writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                tick_label(t)
            )
            .unwrap();
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            writeln!(
                out,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                tick_label(t)
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        for (label, x) in &self.markers {
            let x = sx(*x);
            writeln!(
                out,
                r##"<line class="marker" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" fill="#555">{}</text>"##,
                TOP + ph,
                x + 3.0,
                TOP + 12.0,
                escape(label)
            )
            .unwrap();
        }

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if s.x.len() == 1 {
                writeln!(
                    out,
                    r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(s.x[0]),
                    sy(s.y[0])
                )
                .unwrap();
            } else {
                let pts: Vec<String> =
                    s.x.iter()
                        .zip(&s.y)
                        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                writeln!(
                    out,
                    r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                )
                .unwrap();
            }
            let ly = TOP + 16.0 + 16.0 * i as f64;
            let lx = LEFT + pw - 130.0;
            writeln!(
                out,
                r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text class="legend" x="{:.2}" y="{ly:.2}">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                lx + 25.0,
                escape(&s.label)
            )
            .unwrap();
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

pub fn write_plot(path: &Path, plot: &Plot) -> Result<()> {
    write_text(path, &plot.render()?)
}

/// `S₁` and `S₂` against `t`, with the given cutoffs as markers.
pub fn spectrum_plot(spec: &Spectrum, cutoffs: &[f64]) -> Plot {
    let mut plot = Plot::new("Spectrum", "t", "S")
        .with_series(Series::new("S1", spec.times.clone(), spec.s1.clone()))
        .with_series(Series::new("S2", spec.times.clone(), spec.s2.clone()));
    for &c in cutoffs {
        plot = plot.with_marker(format!("t={c}"), c);
    }
    plot
}

/// `O` and `L` against the curve's abscissa.
pub fn curve_plot(curve: &MeasureCurve) -> Plot {
    Plot::new(
        "Orthogonality and linear independence",
        &curve.abscissa_name,
        "measure",
    )
    .with_series(Series::new(
        "O",
        curve.abscissa.clone(),
        curve.o_values.clone(),
    ))
    .with_series(Series::new(
        "L",
        curve.abscissa.clone(),
        curve.l_values.clone(),
    ))
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

/// Ticks at multiples of a 1-2-5 step, about five per axis.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
