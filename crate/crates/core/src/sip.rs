//! Semi-inner-products, angles, Bregman distances and the decomposition
//! measures `O` and `L` for one-homogeneous functionals.
//!
//! All quantities are evaluated at one canonical subgradient per argument,
//! supplied by a [`Functional`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{inner_product, GridSpec, Signal};
use crate::tv::{subgradient, tv_value, TvConfig};

/// A convex one-homogeneous functional together with a subgradient selection.
pub trait Functional: Sync {
    fn value(&self, u: &Signal) -> f64;
    fn subgradient(&self, u: &Signal) -> Result<Signal>;
}

/// Discrete total variation; subgradients are extracted with one prox step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TotalVariation {
    pub tv: TvConfig,
    /// Extraction step; `0` selects the default step.
    pub tau: f64,
}

impl TotalVariation {
    pub fn new(tv: TvConfig) -> Self {
        TotalVariation { tv, tau: 0.0 }
    }

    /// [`TvConfig::for_grid`]. In 1D its tighter tolerance also matters
    /// here, since `1e-6` leaves up to `2e-3` relative error in `p` on exact
    /// eigenfunctions.
    pub fn for_grid(grid: &GridSpec) -> Self {
        TotalVariation::new(TvConfig::for_grid(grid))
    }
}

impl Functional for TotalVariation {
    fn value(&self, u: &Signal) -> f64 {
        tv_value(u, &self.tv)
    }

    fn subgradient(&self, u: &Signal) -> Result<Signal> {
        Ok(subgradient(u, self.tau, &self.tv)?.value)
    }
}

/// `‖u‖_q = (Σ|uᵢ|^q h^d)^{1/q}`, with its closed-form gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LqNorm {
    pub q: f64,
}

impl LqNorm {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Parameter(format!("need 1 < q < ∞, got {q}")));
        }
        Ok(LqNorm { q })
    }
}

impl Functional for LqNorm {
    fn value(&self, u: &Signal) -> f64 {
        lq_norm(u, self.q)
    }

    /// Zero at `u = 0`, otherwise [`lq_subgradient`].
    fn subgradient(&self, u: &Signal) -> Result<Signal> {
        if u.max_abs() == 0.0 {
            return Ok(Signal::zeros(u.grid().clone()));
        }
        lq_subgradient(u, self.q)
    }
}

fn lq_norm(u: &Signal, q: f64) -> f64 {
    let s: f64 = u.values().iter().map(|v| v.abs().powf(q)).sum();
    (s * u.grid().cell_volume()).powf(1.0 / q)
}

/// `p(u) = |u|^{q−2} u ‖u‖_q^{1−q}`.
pub fn lq_subgradient(u: &Signal, q: f64) -> Result<Signal> {
    LqNorm::new(q)?;
    let norm = lq_norm(u, q);
    if norm == 0.0 {
        return Err(Error::Domain("Lq subgradient of the zero signal".into()));
    }
    let scale = norm.powf(1.0 - q);
    Ok(u.map(|v| v.abs().powf(q - 2.0) * v * scale))
}

/// `J(v)` and a subgradient `p(v)`, computed once and reused.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub subgradient: Signal,
}

impl Evaluation {
    pub fn of<F: Functional + ?Sized>(func: &F, v: &Signal) -> Result<Self> {
        Ok(Evaluation {
            value: func.value(v),
            subgradient: func.subgradient(v)?,
        })
    }

    /// `⌊u, v⌋ = ⟨u, p(v)⟩`.
    pub fn hsip(&self, u: &Signal) -> Result<f64> {
        inner_product(u, &self.subgradient)
    }

    /// `[u, v] = ⟨u, p(v)⟩ J(v)`.
    pub fn sip(&self, u: &Signal) -> Result<f64> {
        Ok(self.hsip(u)? * self.value)
    }

    /// `D(u, v) = J(u) − ⟨p(v), u⟩`, with `j_u = J(u)`.
    pub fn bregman(&self, u: &Signal, j_u: f64) -> Result<f64> {
        Ok(j_u - self.hsip(u)?)
    }
}

pub fn sip<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    Evaluation::of(func, v)?.sip(u)
}

pub fn hsip<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    Evaluation::of(func, v)?.hsip(u)
}

pub fn bregman<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    Evaluation::of(func, v)?.bregman(u, func.value(u))
}

fn require_positive(name: &str, j: f64) -> Result<()> {
    if j > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} = {j} lies in the null space"
        )))
    }
}

/// `sgn(ab)·√|ab|`.
pub fn signed_geometric_mean(a: f64, b: f64) -> f64 {
    (a * b).signum() * (a * b).abs().sqrt()
}

/// `acos` with the argument clamped to `[−1, 1]`.
fn clamped_acos(x: f64, clamps: &mut usize) -> f64 {
    if x.abs() > 1.0 {
        *clamps += 1;
    }
    x.clamp(-1.0, 1.0).acos()
}

pub fn angle<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    let (ju, jv) = (func.value(u), func.value(v));
    require_positive("J(u)", ju)?;
    require_positive("J(v)", jv)?;
    let s = sip(u, v, func)?;
    Ok(clamped_acos(s / (ju * jv), &mut 0))
}

/// Angle from the arithmetic mean of `[u,v]` and `[v,u]`.
pub fn angle_sym_a<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    Ok(full_report(u, v, func)?.angle_sym_a)
}

/// Angle from the signed geometric mean of `[u,v]` and `[v,u]`.
pub fn angle_sym_g<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    Ok(full_report(u, v, func)?.angle_sym_g)
}

/// `O(u,v) = 1 − √|[u,v][v,u]| / (J(u)J(v))`, clamped to `[0, 1]`.
pub fn orth_measure<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    let (ju, jv) = (func.value(u), func.value(v));
    require_positive("J(u)", ju)?;
    require_positive("J(v)", jv)?;
    let pu = Evaluation::of(func, u)?;
    let pv = Evaluation::of(func, v)?;
    Ok(orth_from(pv.sip(u)?, pu.sip(v)?, ju, jv, &mut 0))
}

fn orth_from(sip_uv: f64, sip_vu: f64, ju: f64, jv: f64, clamps: &mut usize) -> f64 {
    let o = 1.0 - (sip_uv * sip_vu).abs().sqrt() / (ju * jv);
    if !(0.0..=1.0).contains(&o) {
        *clamps += 1;
    }
    o.clamp(0.0, 1.0)
}

/// `E(u,v) = ⟨u+v, p(u)⟩ + ⟨u+v, p(v)⟩ − J(u+v)`.
pub fn lis_defect<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    let w = u.add(v)?;
    let pu = Evaluation::of(func, u)?;
    let pv = Evaluation::of(func, v)?;
    Ok(pu.hsip(&w)? + pv.hsip(&w)? - func.value(&w))
}

/// `L(u,v) = 1 − |E(u,v)| / J(u+v)`, reported without clamping.
pub fn lis_measure<F: Functional + ?Sized>(u: &Signal, v: &Signal, func: &F) -> Result<f64> {
    let w = u.add(v)?;
    let jw = func.value(&w);
    require_positive("J(u+v)", jw)?;
    Ok(1.0 - lis_defect(u, v, func)?.abs() / jw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub j_u: f64,
    pub j_v: f64,
    pub j_uv: f64,
    pub sip_uv: f64,
    pub sip_vu: f64,
    pub hsip_uv: f64,
    pub hsip_vu: f64,
    pub angle_uv: f64,
    pub angle_sym_a: f64,
    pub angle_sym_g: f64,
    pub bregman_uv: f64,
    #[serde(rename = "orth_O")]
    pub orth_o: f64,
    #[serde(rename = "lis_E")]
    pub lis_e: f64,
    #[serde(rename = "lis_L")]
    pub lis_l: f64,
    /// Number of values clamped into their admissible range.
    pub clamp_events: usize,
}

impl MeasureReport {
    /// Field names in output order.
    pub const KEYS: [&'static str; 15] = [
        "j_u",
        "j_v",
        "j_uv",
        "sip_uv",
        "sip_vu",
        "hsip_uv",
        "hsip_vu",
        "angle_uv",
        "angle_sym_a",
        "angle_sym_g",
        "bregman_uv",
        "orth_O",
        "lis_E",
        "lis_L",
        "clamp_events",
    ];

    pub fn values(&self) -> [f64; 15] {
        [
            self.j_u,
            self.j_v,
            self.j_uv,
            self.sip_uv,
            self.sip_vu,
            self.hsip_uv,
            self.hsip_vu,
            self.angle_uv,
            self.angle_sym_a,
            self.angle_sym_g,
            self.bregman_uv,
            self.orth_o,
            self.lis_e,
            self.lis_l,
            self.clamp_events as f64,
        ]
    }
}

/// Every measure for the pair `(u, v)`; `p(u)`, `p(v)` and `p(u+v)` are each
/// computed once, in parallel.
pub fn full_report<F: Functional + ?Sized>(
    u: &Signal,
    v: &Signal,
    func: &F,
) -> Result<MeasureReport> {
    let w = u.add(v)?;
    let (pu, (pv, pw)) = rayon::join(
        || Evaluation::of(func, u),
        || rayon::join(|| Evaluation::of(func, v), || Evaluation::of(func, &w)),
    );
    report_from(u, v, &pu?, &pv?, &pw?)
}

/// [`full_report`] from precomputed evaluations at `u`, `v` and `u + v`.
pub fn report_from(
    u: &Signal,
    v: &Signal,
    pu: &Evaluation,
    pv: &Evaluation,
    pw: &Evaluation,
) -> Result<MeasureReport> {
    let (j_u, j_v, j_uv) = (pu.value, pv.value, pw.value);
    require_positive("J(u)", j_u)?;
    require_positive("J(v)", j_v)?;
    require_positive("J(u+v)", j_uv)?;
    let w = u.add(v)?;
    let hsip_uv = pv.hsip(u)?;
    let hsip_vu = pu.hsip(v)?;
    let sip_uv = hsip_uv * j_v;
    let sip_vu = hsip_vu * j_u;
    let norm = j_u * j_v;

    let mut clamps = 0;
    let angle_uv = clamped_acos(sip_uv / norm, &mut clamps);
    let angle_sym_a = clamped_acos(0.5 * (sip_uv + sip_vu) / norm, &mut clamps);
    let angle_sym_g = clamped_acos(signed_geometric_mean(sip_uv, sip_vu) / norm, &mut clamps);
    let orth_o = orth_from(sip_uv, sip_vu, j_u, j_v, &mut clamps);
    let lis_e = pu.hsip(&w)? + pv.hsip(&w)? - j_uv;

    Ok(MeasureReport {
        j_u,
        j_v,
        j_uv,
        sip_uv,
        sip_vu,
        hsip_uv,
        hsip_vu,
        angle_uv,
        angle_sym_a,
        angle_sym_g,
        bregman_uv: j_u - hsip_uv,
        orth_o,
        lis_e,
        lis_l: 1.0 - lis_e.abs() / j_uv,
        clamp_events: clamps,
    })
}
