//! Two-component separation by spectral filtering, and the distance sweeps
//! that track `O` and `L` as two structures move apart.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{box_signal, check_disc, disc_signal};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowParams, FlowTrajectory, Horizon};
use crate::signal::{l2_norm, split_mean, Signal};
use crate::sip::{report_from, Evaluation, Functional, MeasureReport, TotalVariation};
use crate::spectral::{apply_filter, spectrum, transform, FilterSpec, SpectralDecomposition};

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    /// Scales `t ≥ t_cut`, plus the residual band and the mean.
    pub low: Signal,
    /// Scales `t < t_cut`.
    pub high: Signal,
    pub t_cut: f64,
    pub err_low: Option<f64>,
    pub err_high: Option<f64>,
    /// Every prox step of the underlying flow converged.
    pub converged: bool,
}

/// Cutoff halfway between `1/λ₂` and `1/λ₁` on a log scale.
pub fn default_cutoff(lambda1: f64, lambda2: f64) -> f64 {
    1.0 / (lambda1 * lambda2).sqrt()
}

pub fn separate(f: &Signal, t_cut: f64, flow: &FlowParams) -> Result<DecompositionResult> {
    if !(t_cut > 0.0) {
        return Err(Error::Parameter(format!(
            "cutoff must be positive, got {t_cut}"
        )));
    }
    if let Horizon::Fixed(t) = flow.horizon {
        if t_cut >= t {
            return Err(Error::Parameter(format!(
                "cutoff {t_cut} must lie below the horizon {t}"
            )));
        }
    }
    let traj = run_flow(f, flow)?;
    let dec = transform(&traj)?;
    split_at(&traj, &dec, t_cut)
}

fn split_at(
    traj: &FlowTrajectory,
    dec: &SpectralDecomposition,
    t_cut: f64,
) -> Result<DecompositionResult> {
    Ok(DecompositionResult {
        low: apply_filter(dec, &FilterSpec::Lowpass { cutoff: t_cut })?,
        high: apply_filter(dec, &FilterSpec::Highpass { cutoff: t_cut })?,
        t_cut,
        err_low: None,
        err_high: None,
        converged: traj.all_converged(),
    })
}

/// [`separate`] followed by scoring against the known components.
pub fn separate_scored(
    f: &Signal,
    truth_low: &Signal,
    truth_high: &Signal,
    t_cut: f64,
    flow: &FlowParams,
) -> Result<DecompositionResult> {
    let mut res = separate(f, t_cut, flow)?;
    res.err_low = Some(zero_mean_error(&res.low, truth_low)?);
    res.err_high = Some(zero_mean_error(&res.high, truth_high)?);
    Ok(res)
}

/// Relative L² error between the zero-mean parts of `a` and `truth`.
pub fn zero_mean_error(a: &Signal, truth: &Signal) -> Result<f64> {
    let (a0, _) = split_mean(a);
    let (t0, _) = split_mean(truth);
    let nt = l2_norm(&t0);
    let d = l2_norm(&a0.sub(&t0)?);
    Ok(if nt > 0.0 { d / nt } else { d })
}

/// Two box structures that the flow shrinks independently until the faster
/// one vanishes.
///
/// The slow part is `[b₁; a₁ on w₁; 0 …]`, the fast part `[… 0; −a₂ on w₂; b₂]`,
/// each background of length `w/2` and level fixed by `λ|b|L = 1` with
/// `λ = 2/(w·a)`. Returned as `(slow, fast)`.
pub fn two_scale_boxes(
    n: usize,
    slow: (usize, f64),
    fast: (usize, f64),
) -> Result<(Signal, Signal)> {
    let (w1, a1) = slow;
    let (w2, a2) = fast;
    if w1 < 2 || w2 < 2 || a1 <= 0.0 || a2 <= 0.0 {
        return Err(Error::Parameter(format!(
            "need widths >= 2 and positive amplitudes, got {slow:?} {fast:?}"
        )));
    }
    let (l1, l2) = (w1 / 2, w2 / 2);
    if l1 + w1 + w2 + l2 >= n {
        return Err(Error::InvalidGrid(format!(
            "{} samples needed, grid has {n}",
            l1 + w1 + w2 + l2 + 1
        )));
    }
    let b1 = -a1 * w1 as f64 / (2.0 * l1 as f64);
    let b2 = a2 * w2 as f64 / (2.0 * l2 as f64);
    let s = Signal::from_fn_1d(n, 1.0, |i| match i {
        i if i < l1 => b1,
        i if i < l1 + w1 => a1,
        _ => 0.0,
    })?;
    let f0 = n - l2 - w2;
    let q = Signal::from_fn_1d(n, 1.0, |i| match i {
        i if i >= f0 + w2 => b2,
        i if i >= f0 => -a2,
        _ => 0.0,
    })?;
    Ok((s, q))
}

/// `O` and `L` as a function of a separation parameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureCurve {
    /// Name of the abscissa (`d` or `d_over_r`).
    pub abscissa_name: String,
    pub abscissa: Vec<f64>,
    pub o_values: Vec<f64>,
    pub l_values: Vec<f64>,
    /// `‖p(u+v) − p(u) − p(v)‖ / ‖p(u+v)‖` per point.
    pub additivity_defect: Vec<f64>,
    /// Supports of the two structures intersect.
    pub overlapping: Vec<bool>,
    pub reports: Vec<MeasureReport>,
    pub metadata: BTreeMap<String, f64>,
}

impl MeasureCurve {
    fn collect(
        abscissa_name: &str,
        abscissa: Vec<f64>,
        points: Vec<(MeasureReport, f64, bool)>,
        metadata: BTreeMap<String, f64>,
    ) -> Self {
        MeasureCurve {
            abscissa_name: abscissa_name.into(),
            abscissa,
            o_values: points.iter().map(|p| p.0.orth_o).collect(),
            l_values: points.iter().map(|p| p.0.lis_l).collect(),
            additivity_defect: points.iter().map(|p| p.1).collect(),
            overlapping: points.iter().map(|p| p.2).collect(),
            reports: points.into_iter().map(|p| p.0).collect(),
            metadata,
        }
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }
}

/// Measures for one pair, plus the subgradient additivity defect.
pub fn pair_measures<F: Functional>(
    u: &Signal,
    v: &Signal,
    func: &F,
) -> Result<(MeasureReport, f64)> {
    let w = u.add(v)?;
    let (pu, (pv, pw)) = rayon::join(
        || Evaluation::of(func, u),
        || rayon::join(|| Evaluation::of(func, v), || Evaluation::of(func, &w)),
    );
    let (pu, pv, pw) = (pu?, pv?, pw?);
    let report = report_from(u, v, &pu, &pv, &pw)?;
    let defect = pw.subgradient.sub(&pu.subgradient)?.sub(&pv.subgradient)?;
    let np = l2_norm(&pw.subgradient);
    let defect = if np > 0.0 { l2_norm(&defect) / np } else { 0.0 };
    Ok((report, defect))
}

/// Two exact box eigenfunctions on a line: `u` starts at `start`, `v` at
/// `start + d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSweep {
    pub n: usize,
    pub w1: usize,
    pub a1: f64,
    pub w2: usize,
    pub a2: f64,
    pub start: usize,
    pub distances: Vec<usize>,
}

impl BoxSweep {
    /// Largest shift that keeps `v` off the right boundary.
    pub fn max_distance(&self) -> usize {
        (self.n - 1).saturating_sub(self.start + self.w2)
    }
}

pub fn experiment_1d_distance(sweep: &BoxSweep, func: &TotalVariation) -> Result<MeasureCurve> {
    if sweep.distances.is_empty() {
        return Err(Error::Parameter("no distances to evaluate".into()));
    }
    let u = box_signal(sweep.n, sweep.w1, sweep.a1, sweep.start)?;
    if let Some(&d) = sweep.distances.iter().find(|&&d| d > sweep.max_distance()) {
        return Err(Error::InvalidGrid(format!(
            "shift {d} exceeds the largest admissible shift {}",
            sweep.max_distance()
        )));
    }
    let points = sweep
        .distances
        .par_iter()
        .map(|&d| {
            let v = box_signal(sweep.n, sweep.w2, sweep.a2, sweep.start + d)?;
            let (report, defect) = pair_measures(&u, &v, func)?;
            Ok((report, defect, d < sweep.w1))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = BTreeMap::from([
        ("n".to_string(), sweep.n as f64),
        ("w1".to_string(), sweep.w1 as f64),
        ("a1".to_string(), sweep.a1),
        ("w2".to_string(), sweep.w2 as f64),
        ("a2".to_string(), sweep.a2),
        ("start".to_string(), sweep.start as f64),
    ]);
    let abscissa = sweep.distances.iter().map(|&d| d as f64).collect();
    Ok(MeasureCurve::collect("d", abscissa, points, meta))
}

/// Two equal discs on the horizontal midline of an `n × n` grid, centres
/// `d/2` either side of the middle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscSweep {
    pub n: usize,
    pub r: f64,
    pub height: f64,
    pub d_over_r: Vec<f64>,
}

impl DiscSweep {
    fn centers(&self, ratio: f64) -> ((f64, f64), (f64, f64)) {
        let c = (self.n as f64 - 1.0) / 2.0;
        let half = 0.5 * ratio * self.r;
        ((c, c - half), (c, c + half))
    }
}

pub fn experiment_two_discs(sweep: &DiscSweep, func: &TotalVariation) -> Result<MeasureCurve> {
    if sweep.d_over_r.is_empty() {
        return Err(Error::Parameter("no distances to evaluate".into()));
    }
    for &ratio in &sweep.d_over_r {
        if !(ratio >= 0.0) {
            return Err(Error::Parameter(format!(
                "d/r must be non-negative, got {ratio}"
            )));
        }
        let (cu, cv) = sweep.centers(ratio);
        check_disc(sweep.n, sweep.r, cu)?;
        check_disc(sweep.n, sweep.r, cv)?;
    }
    let points = sweep
        .d_over_r
        .par_iter()
        .map(|&ratio| {
            let (cu, cv) = sweep.centers(ratio);
            let u = disc_signal(sweep.n, sweep.r, cu, sweep.height)?;
            let v = disc_signal(sweep.n, sweep.r, cv, sweep.height)?;
            let (report, defect) = pair_measures(&u, &v, func)?;
            Ok((report, defect, ratio < 2.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = BTreeMap::from([
        ("n".to_string(), sweep.n as f64),
        ("r".to_string(), sweep.r),
        ("height".to_string(), sweep.height),
    ]);
    Ok(MeasureCurve::collect(
        "d_over_r",
        sweep.d_over_r.clone(),
        points,
        meta,
    ))
}

/// A small disc `u` and a large disc `v`, either apart or overlapping.
///
/// The default pairs radius 8, height 1 (`λ ≈ 0.25`) with radius 20,
/// height 2 (`λ ≈ 0.05`); the overlapping placement nests `u` inside `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n: usize,
    pub small_r: f64,
    pub small_height: f64,
    pub large_r: f64,
    pub large_height: f64,
    pub large_center: (f64, f64),
    pub separated_center: (f64, f64),
    pub overlapping_center: (f64, f64),
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n: 128,
            small_r: 8.0,
            small_height: 1.0,
            large_r: 20.0,
            large_height: 2.0,
            large_center: (63.5, 40.0),
            separated_center: (63.5, 100.0),
            overlapping_center: (63.5, 50.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlobVariant {
    pub report: MeasureReport,
    pub low: Signal,
    pub high: Signal,
    pub t_cut: f64,
    /// `‖S_f − (S_u + S_v)‖₁ / ‖S_f‖₁` for the `S₁` spectra.
    pub spectrum_defect: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct BlobReport {
    pub separated: BlobVariant,
    pub overlapping: BlobVariant,
}

/// Runs both blob variants with the given flow parameters.
pub fn experiment_blobs(
    spec: &BlobSpec,
    flow: &FlowParams,
    func: &TotalVariation,
) -> Result<BlobReport> {
    if let Horizon::Fixed(_) = flow.horizon {
        return Err(Error::Parameter(
            "the blob experiment runs every flow to extinction".into(),
        ));
    }
    let v = disc_signal(spec.n, spec.large_r, spec.large_center, spec.large_height)?;
    let s_v = s1_of(&v, flow)?.0;
    let run = |center| -> Result<BlobVariant> {
        let u = disc_signal(spec.n, spec.small_r, center, spec.small_height)?;
        let f = u.add(&v)?;
        let (report, flows) = rayon::join(
            || pair_measures(&u, &v, func),
            || rayon::join(|| s1_of(&u, flow), || s1_of(&f, flow)),
        );
        let report = report?.0;
        let (s_u, (s_f, traj, dec)) = (flows.0?.0, flows.1?);
        let (lu, lv) = (report.j_u / sq(&u), report.j_v / sq(&v));
        let t_cut = default_cutoff(lu, lv);
        let res = split_at(&traj, &dec, t_cut)?;
        Ok(BlobVariant {
            report,
            low: res.low,
            high: res.high,
            t_cut,
            spectrum_defect: s1_defect(&s_f, &s_u, &s_v),
            converged: res.converged,
        })
    };
    Ok(BlobReport {
        separated: run(spec.separated_center)?,
        overlapping: run(spec.overlapping_center)?,
    })
}

fn sq(u: &Signal) -> f64 {
    l2_norm(u).powi(2)
}

fn s1_of(
    x: &Signal,
    flow: &FlowParams,
) -> Result<(Vec<f64>, FlowTrajectory, SpectralDecomposition)> {
    let traj = run_flow(x, flow)?;
    let dec = transform(&traj)?;
    let s1 = spectrum(&traj, &dec)?.s1;
    Ok((s1, traj, dec))
}

/// `‖S_f − (S_u + S_v)‖₁ / ‖S_f‖₁` for `S₁` spectra on a common time grid.
pub fn spectrum_defect(f: &Signal, u: &Signal, v: &Signal, flow: &FlowParams) -> Result<f64> {
    let (sf, (su, sv)) = rayon::join(
        || s1_of(f, flow),
        || rayon::join(|| s1_of(u, flow), || s1_of(v, flow)),
    );
    Ok(s1_defect(&sf?.0, &su?.0, &sv?.0))
}

fn s1_defect(sf: &[f64], su: &[f64], sv: &[f64]) -> f64 {
    let len = sf.len().max(su.len()).max(sv.len());
    let at = |s: &[f64], k: usize| s.get(k).copied().unwrap_or(0.0);
    let num: f64 = (0..len)
        .map(|k| (at(sf, k) - at(su, k) - at(sv, k)).abs())
        .sum();
    let den: f64 = sf.iter().map(|x| x.abs()).sum();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Three-point running median; the end points are kept.
pub fn median3(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for i in 1..values.len().saturating_sub(1) {
        let mut w = [values[i - 1], values[i], values[i + 1]];
        w.sort_by(f64::total_cmp);
        out[i] = w[1];
    }
    out
}

/// No value drops more than `slack` below any earlier value.
pub fn is_nondecreasing(values: &[f64], slack: f64) -> bool {
    let mut best = f64::NEG_INFINITY;
    for &v in values {
        if v < best - slack {
            return false;
        }
        best = best.max(v);
    }
    true
}
