//! Command-line interface. Exit codes: 0 success, 1 usage or validation
//! error, 2 numerical failure under `--strict`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::decomp::{
    experiment_1d_distance, experiment_blobs, experiment_two_discs, BlobSpec, BlobVariant,
    BoxSweep, DiscSweep, MeasureCurve,
};
use crate::eigen::{make_box_1d_at, make_disc_2d, Eigenpair};
use crate::error::Error;
use crate::flow::{extinction_time, run_flow, FlowParams, Horizon};
use crate::io::{
    curve_csv, ensure_dir, load_bands, load_trajectory, read_csv, read_signal, report_text,
    reports_csv, save_bands, save_trajectory, spectrum_csv, write_json, write_pgm, write_raw,
    write_signal, write_text, PgmEncoding,
};
use crate::plot::{curve_plot, spectrum_plot, write_plot};
use crate::signal::{GridSpec, Signal};
use crate::sip::{full_report, TotalVariation};
use crate::spectral::{apply_filter, spectrum, transform, FilterSpec};
use crate::tv::{DualSolver, TvConfig, TvVariant};

#[derive(Parser, Debug)]
#[command(
    name = "spectral-tv",
    version,
    about = "Spectral decomposition by total variation flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the TV flow on a signal and store the trajectory
    Flow(FlowArgs),
    /// Turn a stored trajectory into spectral bands and spectra
    Transform(TransformArgs),
    /// Apply an ideal filter to stored bands
    Filter(FilterArgs),
    /// Angles, Bregman distance and the O/L measures of two signals
    Measures(MeasuresArgs),
    /// Build an eigenfunction and check it
    Eigen(EigenArgs),
    /// Regenerate one of the experiments
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Output directory (created if absent)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// TV discretisation (default: anisotropic in 1D, isotropic in 2D)
    #[arg(long, value_enum)]
    tv: Option<Variant>,
    /// Stopping tolerance of the inner prox solver
    #[arg(long)]
    prox_tol: Option<f64>,
    /// Iteration cap of the inner prox solver
    #[arg(long)]
    prox_max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "accelerated")]
    solver: Solver,
    /// Exit with status 2 if any prox solve did not converge
    #[arg(long)]
    strict: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum Variant {
    Iso,
    Aniso,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Solver {
    Accelerated,
    FixedPoint,
}

impl Common {
    fn tv(&self, grid: &GridSpec) -> TvConfig {
        let mut cfg = TvConfig::for_grid(grid);
        if let Some(v) = self.tv {
            cfg.variant = match v {
                Variant::Iso => TvVariant::Isotropic,
                Variant::Aniso => TvVariant::Anisotropic,
            };
        }
        if let Some(t) = self.prox_tol {
            cfg.prox_tol = t;
        }
        if let Some(m) = self.prox_max_iter {
            cfg.prox_max_iter = m;
        }
        cfg.solver = match self.solver {
            Solver::Accelerated => DualSolver::Accelerated,
            Solver::FixedPoint => DualSolver::FixedPoint,
        };
        cfg
    }

    fn functional(&self, grid: &GridSpec) -> TotalVariation {
        let mut func = TotalVariation::for_grid(grid);
        let cfg = self.tv(grid);
        func.tv.variant = cfg.variant;
        func.tv.solver = cfg.solver;
        if self.prox_tol.is_some() {
            func.tv.prox_tol = cfg.prox_tol;
        }
        if self.prox_max_iter.is_some() {
            func.tv.prox_max_iter = cfg.prox_max_iter;
        }
        func
    }
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct FlowArgs {
    /// Input signal (.csv, .pgm or .f64)
    input: PathBuf,
    /// Time step
    #[arg(long)]
    dt: f64,
    /// Final time (default: run until extinction)
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Relative norm below which the flow counts as extinct
    #[arg(long, default_value_t = FlowParams::DEFAULT_STOP_EPS)]
    stop_eps: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct TransformArgs {
    /// Directory written by `flow`
    trajectory: PathBuf,
    /// Scales to mark on the spectrum plot
    #[arg(long, value_delimiter = ',')]
    mark: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
#[command(group = clap::ArgGroup::new("kind").required(true), allow_negative_numbers = true)]
struct FilterArgs {
    /// Directory written by `transform`
    bands: PathBuf,
    /// Keep scales t >= T, the residual and the mean
    #[arg(long, value_name = "T", group = "kind")]
    lowpass: Option<f64>,
    /// Keep scales t < T
    #[arg(long, value_name = "T", group = "kind")]
    highpass: Option<f64>,
    /// Keep scales t1 <= t < t2
    #[arg(
        long,
        value_names = ["T1", "T2"],
        group = "kind",
        value_delimiter = ',',
        num_args = 2
    )]
    bandpass: Option<Vec<f64>>,
    /// Remove scales t1 <= t < t2
    #[arg(
        long,
        value_names = ["T1", "T2"],
        group = "kind",
        value_delimiter = ',',
        num_args = 2
    )]
    bandstop: Option<Vec<f64>>,
    /// One gain per band followed by the residual gain, one per line
    #[arg(long, value_name = "CSV", group = "kind")]
    gains: Option<PathBuf>,
    /// Output file (default: filtered.csv in 1D, filtered.f64 and .pgm in 2D)
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct MeasuresArgs {
    u: PathBuf,
    v: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
#[command(group = clap::ArgGroup::new("shape").required(true))]
struct EigenArgs {
    /// Box eigenfunction: n=.. w=.. h=.. [start=..]
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE", group = "shape")]
    box1d: Option<Vec<String>>,
    /// Disc: n=.. r=.. h=.. [cy=.. cx=..]
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE", group = "shape")]
    disc2d: Option<Vec<String>>,
    /// Also write the signal to this file
    #[arg(long)]
    write: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct ExperimentArgs {
    #[arg(value_enum)]
    which: Experiment,
    /// Grid size
    #[arg(long)]
    n: Option<usize>,
    /// Disc radius (discs2d)
    #[arg(long)]
    r: Option<f64>,
    /// Structure height or box amplitude
    #[arg(long)]
    height: Option<f64>,
    /// Ratios d/r as start:step:end or a comma list (discs2d)
    #[arg(long = "d-over-r")]
    d_over_r: Option<String>,
    /// Box width (boxes1d)
    #[arg(long)]
    w: Option<usize>,
    /// Shifts as start:step:end or a comma list (boxes1d)
    #[arg(long)]
    distances: Option<String>,
    /// Flow time step (blobs)
    #[arg(long, default_value_t = 0.2)]
    dt: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum Experiment {
    Blobs,
    Boxes1d,
    Discs2d,
}

enum Failure {
    Invalid(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Runs the CLI on `args` (including the program name), writing normal
/// output to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let outcome = match &cli.command {
        Command::Flow(a) => cmd_flow(a, stdout),
        Command::Transform(a) => cmd_transform(a, stdout),
        Command::Filter(a) => cmd_filter(a, stdout),
        Command::Measures(a) => cmd_measures(a, stdout),
        Command::Eigen(a) => cmd_eigen(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Invalid(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
        Err(Failure::Numerical(m)) => {
            let _ = writeln!(stderr, "numerical failure: {m}");
            2
        }
    }
}

fn out(w: &mut dyn Write, text: &str) {
    let _ = w.write_all(text.as_bytes());
}

fn manifest(dir: &Path, command: &str, args: &impl Serialize, extra: Value) -> Outcome {
    let mut m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    });
    if let (Value::Object(m), Value::Object(extra)) = (&mut m, extra) {
        m.extend(extra);
    }
    write_json(
        &dir.join(format!("{}.manifest.json", command.replace(' ', "_"))),
        &m,
    )?;
    Ok(())
}

fn check_converged(strict: bool, converged: bool, what: &str, w: &mut dyn Write) -> Outcome {
    if converged {
        return Ok(());
    }
    if strict {
        return Err(Failure::Numerical(format!(
            "{what}: prox solver did not converge"
        )));
    }
    out(
        w,
        &format!("warning: {what}: some prox solves did not converge\n"),
    );
    Ok(())
}

fn cmd_flow(a: &FlowArgs, w: &mut dyn Write) -> Outcome {
    let f = read_signal(&a.input)?;
    let tv = a.common.tv(f.grid());
    let mut params = FlowParams::new(a.dt, tv);
    params.stop_eps = a.stop_eps;
    if let Some(t) = a.t_max {
        params.horizon = Horizon::Fixed(t);
    }
    let traj = run_flow(&f, &params)?;
    let dir = &a.common.out;
    let tdir = dir.join("trajectory");
    save_trajectory(&tdir, &traj)?;
    let te = extinction_time(&traj);
    out(
        w,
        &format!(
            "steps={}\nextinction_time={te:?}\nconverged={}\ntrajectory={}\n",
            traj.steps(),
            traj.all_converged(),
            tdir.display()
        ),
    );
    manifest(
        dir,
        "flow",
        a,
        json!({
            "flow": params,
            "steps": traj.steps(),
            "extinction_time": te,
            "converged": traj.all_converged(),
            "unconverged_steps": traj.converged.iter().filter(|c| !**c).count(),
        }),
    )?;
    check_converged(a.common.strict, traj.all_converged(), "flow", w)
}

fn cmd_transform(a: &TransformArgs, w: &mut dyn Write) -> Outcome {
    let traj = load_trajectory(&a.trajectory)?;
    let dec = transform(&traj)?;
    let spec = spectrum(&traj, &dec)?;
    let dir = &a.common.out;
    let bdir = dir.join("bands");
    save_bands(&bdir, &dec)?;
    write_text(&dir.join("spectrum.csv"), &spectrum_csv(&spec))?;
    write_plot(&dir.join("spectrum.svg"), &spectrum_plot(&spec, &a.mark))?;
    out(
        w,
        &format!(
            "bands={}\ns1_peak={:?}\nclamped={}\noutput={}\n",
            dec.bands.len(),
            spec.s1_peak().unwrap_or(f64::NAN),
            spec.clamped,
            bdir.display()
        ),
    );
    manifest(
        dir,
        "transform",
        a,
        json!({
            "flow": traj.params,
            "bands": dec.bands.len(),
            "s2_energy": spec.s2_energy(dec.dt),
            "clamped": spec.clamped,
        }),
    )?;
    check_converged(a.common.strict, traj.all_converged(), "trajectory", w)
}

fn cmd_filter(a: &FilterArgs, w: &mut dyn Write) -> Outcome {
    let dec = load_bands(&a.bands)?;
    let spec = if let Some(c) = a.lowpass {
        FilterSpec::Lowpass { cutoff: c }
    } else if let Some(c) = a.highpass {
        FilterSpec::Highpass { cutoff: c }
    } else if let Some(t) = &a.bandpass {
        FilterSpec::Bandpass { t1: t[0], t2: t[1] }
    } else if let Some(t) = &a.bandstop {
        FilterSpec::Bandstop { t1: t[0], t2: t[1] }
    } else if let Some(p) = &a.gains {
        FilterSpec::Custom {
            gains: read_csv(p)?.into_values(),
        }
    } else {
        unreachable!("clap requires one filter kind")
    };
    let result = apply_filter(&dec, &spec)?;
    let dir = &a.common.out;
    let written = match &a.output {
        Some(p) => {
            write_signal(p, &result)?;
            vec![p.clone()]
        }
        None => write_default(dir, "filtered", &result)?,
    };
    for p in &written {
        out(w, &format!("output={}\n", p.display()));
    }
    manifest(
        dir,
        "filter",
        a,
        json!({ "filter": spec, "outputs": written }),
    )
}

/// `name.csv` for 1D signals, `name.f64` plus `name.pgm` for 2D.
fn write_default(dir: &Path, name: &str, s: &Signal) -> crate::Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    if s.grid().dims() == 1 {
        let p = dir.join(format!("{name}.csv"));
        write_signal(&p, s)?;
        Ok(vec![p])
    } else {
        let raw = dir.join(format!("{name}.f64"));
        let pgm = dir.join(format!("{name}.pgm"));
        write_raw(&raw, s)?;
        write_pgm(&pgm, s, PgmEncoding::Binary, 65535)?;
        Ok(vec![raw, pgm])
    }
}

fn cmd_measures(a: &MeasuresArgs, w: &mut dyn Write) -> Outcome {
    let u = read_signal(&a.u)?;
    let v = read_signal(&a.v)?;
    let func = a.common.functional(u.grid());
    let report = full_report(&u, &v, &func)?;
    let dir = &a.common.out;
    let text = report_text(&report);
    write_text(&dir.join("measures.txt"), &text)?;
    write_text(
        &dir.join("measures.csv"),
        &reports_csv(std::slice::from_ref(&report)),
    )?;
    out(w, &text);
    manifest(
        dir,
        "measures",
        a,
        json!({ "functional": func.tv, "tau": func.tau }),
    )
}

fn key_values(items: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Failure::Invalid(format!("expected KEY=VALUE, got {item:?}")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Failure::Invalid(format!("{k}: not a number: {v:?}")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn take(map: &mut BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64, Failure> {
    map.remove(key)
        .or(default)
        .ok_or_else(|| Failure::Invalid(format!("missing {key}=")))
}

fn count(v: f64, key: &str) -> Result<usize, Failure> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Failure::Invalid(format!(
            "{key} must be a non-negative integer, got {v}"
        )))
    }
}

fn no_leftovers(map: &BTreeMap<String, f64>) -> Outcome {
    match map.keys().next() {
        Some(k) => Err(Failure::Invalid(format!("unknown key {k:?}"))),
        None => Ok(()),
    }
}

fn cmd_eigen(a: &EigenArgs, w: &mut dyn Write) -> Outcome {
    let pair: Eigenpair = if let Some(items) = &a.box1d {
        let mut kv = key_values(items)?;
        let n = count(take(&mut kv, "n", None)?, "n")?;
        let width = count(take(&mut kv, "w", None)?, "w")?;
        let amp = take(&mut kv, "h", Some(1.0))?;
        let start = match kv.remove("start") {
            Some(s) => count(s, "start")?,
            None => n.saturating_sub(width) / 2,
        };
        no_leftovers(&kv)?;
        make_box_1d_at(n, width, amp, start)?
    } else if let Some(items) = &a.disc2d {
        let mut kv = key_values(items)?;
        let n = count(take(&mut kv, "n", None)?, "n")?;
        let r = take(&mut kv, "r", None)?;
        let h = take(&mut kv, "h", Some(1.0))?;
        let c = (n as f64 - 1.0) / 2.0;
        let cy = take(&mut kv, "cy", Some(c))?;
        let cx = take(&mut kv, "cx", Some(c))?;
        no_leftovers(&kv)?;
        make_disc_2d(n, r, (cy, cx), h)?
    } else {
        unreachable!("clap requires one shape")
    };
    out(
        w,
        &format!("lambda={:?}\nresidual={:?}\n", pair.lambda, pair.residual),
    );
    if let Some(p) = &a.write {
        write_signal(p, &pair.signal)?;
    }
    Ok(())
}

/// `a:step:b` (inclusive) or `x,y,z`.
fn parse_range(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Invalid(format!("bad range {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b): (f64, f64, f64) = (
                a.parse().map_err(|_| bad())?,
                step.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
            );
            if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
                return Err(bad());
            }
            let k = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=k).map(|i| a + i as f64 * step).collect())
        }
        [list] => list
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

fn write_curve(dir: &Path, curve: &MeasureCurve) -> Outcome {
    write_text(&dir.join("curve.csv"), &curve_csv(curve))?;
    write_plot(&dir.join("curve.svg"), &curve_plot(curve))?;
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs, w: &mut dyn Write) -> Outcome {
    let dir = &a.common.out;
    ensure_dir(dir)?;
    match a.which {
        Experiment::Boxes1d => {
            let n = a.n.unwrap_or(256);
            let width = a.w.unwrap_or(20);
            let amp = a.height.unwrap_or(1.0);
            let mut sweep = BoxSweep {
                n,
                w1: width,
                a1: amp,
                w2: width,
                a2: amp,
                start: 4,
                distances: vec![],
            };
            sweep.distances = match &a.distances {
                Some(t) => parse_range(t)?
                    .into_iter()
                    .map(|d| count(d, "distance"))
                    .collect::<Result<_, _>>()?,
                None => (0..=sweep.max_distance()).step_by(2).collect(),
            };
            let func = a.common.functional(&GridSpec::line(n, 1.0)?);
            let curve = experiment_1d_distance(&sweep, &func)?;
            write_curve(dir, &curve)?;
            out(
                w,
                &format!("points={}\noutput={}\n", curve.len(), dir.display()),
            );
            manifest(
                dir,
                "experiment boxes1d",
                a,
                json!({ "sweep": sweep, "functional": func.tv }),
            )
        }
        Experiment::Discs2d => {
            let n = a.n.unwrap_or(128);
            let sweep = DiscSweep {
                n,
                r: a.r.unwrap_or(16.0),
                height: a.height.unwrap_or(1.0),
                d_over_r: parse_range(a.d_over_r.as_deref().unwrap_or("0:0.25:4"))?,
            };
            let func = a.common.functional(&GridSpec::plane(n, n, 1.0)?);
            let curve = experiment_two_discs(&sweep, &func)?;
            write_curve(dir, &curve)?;
            out(
                w,
                &format!("points={}\noutput={}\n", curve.len(), dir.display()),
            );
            manifest(
                dir,
                "experiment discs2d",
                a,
                json!({ "sweep": sweep, "functional": func.tv }),
            )
        }
        Experiment::Blobs => {
            let mut spec = BlobSpec::default();
            if let Some(n) = a.n {
                spec.n = n;
            }
            let grid = GridSpec::plane(spec.n, spec.n, 1.0)?;
            let func = a.common.functional(&grid);
            let flow = FlowParams::new(a.dt, a.common.tv(&grid));
            let report = experiment_blobs(&spec, &flow, &func)?;
            let variants = [
                ("separated", &report.separated),
                ("overlapping", &report.overlapping),
            ];
            let mut summary = serde_json::Map::new();
            for (name, v) in variants {
                write_blob(dir, name, v, w)?;
                summary.insert(
                    name.into(),
                    json!({
                        "orth_O": v.report.orth_o,
                        "lis_L": v.report.lis_l,
                        "t_cut": v.t_cut,
                        "spectrum_defect": v.spectrum_defect,
                        "converged": v.converged,
                    }),
                );
            }
            manifest(
                dir,
                "experiment blobs",
                a,
                json!({ "blobs": spec, "flow": flow, "functional": func.tv, "results": summary }),
            )?;
            let ok = report.separated.converged && report.overlapping.converged;
            check_converged(a.common.strict, ok, "blob flows", w)
        }
    }
}

fn write_blob(dir: &Path, name: &str, v: &BlobVariant, w: &mut dyn Write) -> Outcome {
    let text = report_text(&v.report);
    write_text(&dir.join(format!("{name}_measures.txt")), &text)?;
    write_default(dir, &format!("{name}_low"), &v.low)?;
    write_default(dir, &format!("{name}_high"), &v.high)?;
    out(
        w,
        &format!(
            "[{name}]\north_O={:?}\nlis_L={:?}\nt_cut={:?}\nspectrum_defect={:?}\n",
            v.report.orth_o, v.report.lis_l, v.t_cut, v.spectrum_defect
        ),
    );
    Ok(())
}
