//! File formats: 1D CSV, PGM images, raw `f64` arrays with JSON sidecars,
//! and persisted trajectories, band stacks, reports and curves.
//!
//! All CSV output uses `,` separators, `.` decimals and LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decomp::MeasureCurve;
use crate::error::{Error, Result};
use crate::flow::{FlowParams, FlowTrajectory};
use crate::signal::{GridSpec, Signal};
use crate::sip::MeasureReport;
use crate::spectral::{SpectralDecomposition, Spectrum};

/// Reads a signal, choosing the format from the extension: `.csv` (1D),
/// `.pgm` (2D, rescaled to `[0, 1]`) or `.f64` (raw with a `.json` sidecar).
pub fn read_signal(path: &Path) -> Result<Signal> {
    match extension(path).as_str() {
        "csv" => read_csv(path),
        "pgm" => read_pgm(path),
        "f64" => read_raw(path),
        other => Err(Error::Parameter(format!(
            "{}: unsupported extension {other:?} (expected csv, pgm or f64)",
            path.display()
        ))),
    }
}

/// Writes a signal in the format given by the extension. PGM output is
/// 16-bit binary, min–max rescaled, and therefore lossy.
pub fn write_signal(path: &Path, signal: &Signal) -> Result<()> {
    match extension(path).as_str() {
        "csv" => write_csv(path, signal),
        "pgm" => write_pgm(path, signal, PgmEncoding::Binary, 65535),
        "f64" => write_raw(path, signal),
        other => Err(Error::Parameter(format!(
            "{}: unsupported extension {other:?} (expected csv, pgm or f64)",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Creates `dir` and its parents if needed.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

// ---- CSV ------------------------------------------------------------------

/// One value per line. An optional `# h=<spacing>` line sets the spacing,
/// which otherwise defaults to 1.0; other `#` lines and blank lines are
/// skipped.
pub fn read_csv(path: &Path) -> Result<Signal> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| {
        Error::parse(
            path,
            format!("byte {}", e.utf8_error().valid_up_to()),
            "invalid UTF-8",
        )
    })?;
    parse_csv(path, &text)
}

fn parse_csv(path: &Path, text: &str) -> Result<Signal> {
    let mut h = 1.0;
    let mut values = vec![];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        let at = || format!("line {}", i + 1);
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(spec) = comment.trim().strip_prefix("h=") {
                h = spec
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, at(), format!("bad spacing {spec:?}")))?;
            }
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::parse(path, at(), format!("not a number: {line:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(path, at(), "non-finite value"));
        }
        values.push(v);
    }
    let grid = GridSpec::line(values.len(), h)
        .map_err(|e| Error::parse(path, "end of file", e.to_string()))?;
    Signal::new(grid, values)
}

pub fn write_csv(path: &Path, signal: &Signal) -> Result<()> {
    if signal.grid().dims() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "{}: CSV holds 1D signals only",
            path.display()
        )));
    }
    let mut out = format!("# h={}\n", signal.grid().spacing()[0]);
    for v in signal.values() {
        writeln!(out, "{v:?}").unwrap();
    }
    write_bytes(path, out.as_bytes())
}

// ---- PGM ------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

/// Reads a P2 or P5 image with 8- or 16-bit samples, divided by the file's
/// maximum value so the result lies in `[0, 1]`. Spacing is 1.
pub fn read_pgm(path: &Path) -> Result<Signal> {
    parse_pgm(path, &read_bytes(path)?)
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, format!("byte {}", self.pos), message)
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of file"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let at = self.pos;
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::parse(self.path, format!("byte {at}"), format!("expected {what}"))
            })
    }
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Signal> {
    let mut c = Cursor {
        path,
        bytes,
        pos: 0,
    };
    let encoding = match c.token()? {
        b"P2" => PgmEncoding::Ascii,
        b"P5" => PgmEncoding::Binary,
        _ => {
            return Err(Error::parse(path, "byte 0", "expected magic P2 or P5"));
        }
    };
    let cols = c.number("width")?;
    let rows = c.number("height")?;
    let maxval = c.number("maximum value")?;
    if maxval == 0 || maxval > 65535 {
        return Err(c.err(format!("maximum value {maxval} outside 1..=65535")));
    }
    let grid = GridSpec::plane(rows, cols, 1.0).map_err(|e| c.err(e.to_string()))?;
    let count = rows * cols;
    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(count);
    match encoding {
        PgmEncoding::Ascii => {
            for _ in 0..count {
                let v = c.number("pixel value")?;
                if v > maxval {
                    return Err(c.err(format!("pixel value {v} exceeds {maxval}")));
                }
                values.push(v as f64 * scale);
            }
        }
        PgmEncoding::Binary => {
            // exactly one whitespace byte separates the header from the data
            if !bytes.get(c.pos).is_some_and(|b| b.is_ascii_whitespace()) {
                return Err(c.err("expected whitespace before pixel data"));
            }
            c.pos += 1;
            let width = if maxval < 256 { 1 } else { 2 };
            let data = &bytes[c.pos..];
            if data.len() < count * width {
                return Err(Error::parse(
                    path,
                    format!("byte {}", bytes.len()),
                    format!("pixel data truncated: need {} bytes", count * width),
                ));
            }
            for (k, px) in data[..count * width].chunks_exact(width).enumerate() {
                let v = match width {
                    1 => px[0] as usize,
                    _ => u16::from_be_bytes([px[0], px[1]]) as usize,
                };
                if v > maxval {
                    return Err(Error::parse(
                        path,
                        format!("byte {}", c.pos + k * width),
                        format!("pixel value {v} exceeds {maxval}"),
                    ));
                }
                values.push(v as f64 * scale);
            }
        }
    }
    Signal::new(grid, values)
}

/// Writes a 2D signal min–max rescaled to `0..=maxval`. A constant signal
/// maps to zero.
pub fn write_pgm(path: &Path, signal: &Signal, encoding: PgmEncoding, maxval: u16) -> Result<()> {
    path_bytes(signal, encoding, maxval)
        .map_err(|e| match e {
            Error::ShapeMismatch(m) => Error::ShapeMismatch(format!("{}: {m}", path.display())),
            e => e,
        })
        .and_then(|bytes| write_bytes(path, &bytes))
}

fn path_bytes(signal: &Signal, encoding: PgmEncoding, maxval: u16) -> Result<Vec<u8>> {
    let shape = signal.grid().shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch("PGM holds 2D signals only".into()));
    }
    if maxval == 0 {
        return Err(Error::Parameter(
            "PGM maximum value must be positive".into(),
        ));
    }
    let (lo, hi) = signal
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = hi - lo;
    let m = maxval as f64;
    let level = |v: f64| -> u16 {
        if span > 0.0 {
            ((v - lo) / span * m).round() as u16
        } else {
            0
        }
    };
    let (rows, cols) = (shape[0], shape[1]);
    let magic = match encoding {
        PgmEncoding::Ascii => "P2",
        PgmEncoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{cols} {rows}\n{maxval}\n").into_bytes();
    match encoding {
        PgmEncoding::Ascii => {
            for row in signal.values().chunks(cols) {
                let line: Vec<String> = row.iter().map(|&v| level(v).to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmEncoding::Binary => {
            for &v in signal.values() {
                let l = level(v);
                if maxval < 256 {
                    out.push(l as u8);
                } else {
                    out.extend_from_slice(&l.to_be_bytes());
                }
            }
        }
    }
    debug_assert_eq!(rows * cols, signal.len());
    Ok(out)
}

// ---- raw arrays -----------------------------------------------------------

/// Sidecar of a raw `.f64` signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub mean: f64,
}

/// `foo.f64` → `foo.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn encode_f64(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode_f64(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != expected * 8 {
        return Err(Error::parse(
            path,
            format!("byte {}", bytes.len().min(expected * 8)),
            format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_raw(path: &Path, signal: &Signal) -> Result<()> {
    let grid = signal.grid();
    let sidecar = RawSidecar {
        shape: grid.shape().to_vec(),
        spacing: grid.spacing().to_vec(),
        mean: signal.mean(),
    };
    write_bytes(path, &encode_f64(signal.values()))?;
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_raw(path: &Path) -> Result<Signal> {
    let sidecar: RawSidecar = read_json(&sidecar_path(path))?;
    let grid = GridSpec::new(sidecar.shape, sidecar.spacing)?;
    let values = decode_f64(path, &read_bytes(path)?, grid.len())?;
    Signal::new(grid, values)
}

// ---- JSON -----------------------------------------------------------------

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::parse(
            path,
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

// ---- trajectories and band stacks ------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrajectoryMeta {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    params: FlowParams,
    times: Vec<f64>,
    mean: f64,
    converged: Vec<bool>,
    prox_iterations: Vec<usize>,
    states: String,
}

/// Writes `states.f64` (all `u_k` stacked) and `trajectory.json` into `dir`.
/// Subgradients are not stored; they follow from the states.
pub fn save_trajectory(dir: &Path, traj: &FlowTrajectory) -> Result<()> {
    ensure_dir(dir)?;
    let grid = traj.grid();
    let stacked: Vec<f64> = traj
        .states
        .iter()
        .flat_map(|u| u.values().iter().copied())
        .collect();
    write_bytes(&dir.join("states.f64"), &encode_f64(&stacked))?;
    let meta = TrajectoryMeta {
        shape: grid.shape().to_vec(),
        spacing: grid.spacing().to_vec(),
        params: traj.params,
        times: traj.times.clone(),
        mean: traj.mean,
        converged: traj.converged.clone(),
        prox_iterations: traj.prox_iterations.clone(),
        states: "states.f64".into(),
    };
    write_json(&dir.join("trajectory.json"), &meta)
}

pub fn load_trajectory(dir: &Path) -> Result<FlowTrajectory> {
    let meta_path = dir.join("trajectory.json");
    let meta: TrajectoryMeta = read_json(&meta_path)?;
    let grid = GridSpec::new(meta.shape, meta.spacing)?;
    let count = meta.times.len();
    if count < 2 || meta.converged.len() != count || meta.prox_iterations.len() != count {
        return Err(Error::parse(
            &meta_path,
            "times",
            "times, converged and prox_iterations must have equal length of at least 2",
        ));
    }
    let states_path = dir.join(&meta.states);
    let raw = decode_f64(&states_path, &read_bytes(&states_path)?, count * grid.len())?;
    let states: Vec<Signal> = raw
        .chunks_exact(grid.len())
        .map(|c| Signal::new(grid.clone(), c.to_vec()))
        .collect::<Result<_>>()?;
    let dt = meta.params.dt;
    let mut subgradients: Vec<Signal> = states
        .windows(2)
        .map(|w| w[0].sub(&w[1]).map(|d| d.scaled(1.0 / dt)))
        .collect::<Result<_>>()?;
    subgradients.insert(0, subgradients[0].clone());
    Ok(FlowTrajectory {
        params: meta.params,
        times: meta.times,
        states,
        subgradients,
        mean: meta.mean,
        converged: meta.converged,
        prox_iterations: meta.prox_iterations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BandsMeta {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    dt: f64,
    times: Vec<f64>,
    mean: f64,
    bands: String,
    residual: String,
}

/// Writes `bands.f64` (all `φ_k` stacked), `residual.f64` with its sidecar,
/// and `bands.json` into `dir`.
pub fn save_bands(dir: &Path, dec: &SpectralDecomposition) -> Result<()> {
    ensure_dir(dir)?;
    let grid = dec.grid();
    let stacked: Vec<f64> = dec
        .bands
        .iter()
        .flat_map(|b| b.values().iter().copied())
        .collect();
    write_bytes(&dir.join("bands.f64"), &encode_f64(&stacked))?;
    write_raw(&dir.join("residual.f64"), &dec.residual)?;
    let meta = BandsMeta {
        shape: grid.shape().to_vec(),
        spacing: grid.spacing().to_vec(),
        dt: dec.dt,
        times: dec.times.clone(),
        mean: dec.mean,
        bands: "bands.f64".into(),
        residual: "residual.f64".into(),
    };
    write_json(&dir.join("bands.json"), &meta)
}

pub fn load_bands(dir: &Path) -> Result<SpectralDecomposition> {
    let meta: BandsMeta = read_json(&dir.join("bands.json"))?;
    let grid = GridSpec::new(meta.shape, meta.spacing)?;
    let path = dir.join(&meta.bands);
    let raw = decode_f64(&path, &read_bytes(&path)?, meta.times.len() * grid.len())?;
    let bands = raw
        .chunks_exact(grid.len())
        .map(|c| Signal::new(grid.clone(), c.to_vec()))
        .collect::<Result<_>>()?;
    let residual = read_raw(&dir.join(&meta.residual))?;
    grid.check_same(residual.grid())?;
    Ok(SpectralDecomposition {
        dt: meta.dt,
        times: meta.times,
        bands,
        residual,
        mean: meta.mean,
    })
}

// ---- tables -----------------------------------------------------------------

/// `key=value` lines in [`MeasureReport::KEYS`] order.
pub fn report_text(report: &MeasureReport) -> String {
    let mut out = String::new();
    for (k, v) in MeasureReport::KEYS.iter().zip(report.values()) {
        writeln!(out, "{k}={v:?}").unwrap();
    }
    out
}

/// Header plus one row per report.
pub fn reports_csv(reports: &[MeasureReport]) -> String {
    let mut out = MeasureReport::KEYS.join(",");
    out.push('\n');
    for r in reports {
        out.push_str(&join_row(&r.values()));
    }
    out
}

fn join_row(values: &[f64]) -> String {
    let mut line = values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

/// One row per abscissa point: abscissa, overlap flag, additivity defect and
/// every report field.
pub fn curve_csv(curve: &MeasureCurve) -> String {
    let mut out = format!(
        "{},overlapping,additivity_defect,{}\n",
        curve.abscissa_name,
        MeasureReport::KEYS.join(",")
    );
    for i in 0..curve.len() {
        let mut row = vec![
            curve.abscissa[i],
            curve.overlapping[i] as u8 as f64,
            curve.additivity_defect[i],
        ];
        row.extend(curve.reports[i].values());
        out.push_str(&join_row(&row));
    }
    out
}

/// `t,s1,s2` rows.
pub fn spectrum_csv(spec: &Spectrum) -> String {
    let mut out = String::from("t,s1,s2\n");
    for ((t, a), b) in spec.times.iter().zip(&spec.s1).zip(&spec.s2) {
        out.push_str(&join_row(&[*t, *a, *b]));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}
