//! Spectral transform `φ(t) = t ∂ₜₜu`, reconstruction, ideal filters and spectra.
//!
//! On the uniform time grid `φ_k = t_k (u_{k+1} − 2u_k + u_{k−1})/dt²` for the
//! interior steps `k = 1..N−1`. Summation by parts on `[0, t_N]` gives
//!
//! ```text
//! u₀ = Σ_k φ_k dt + u_N + t_N p_N
//! ```
//!
//! exactly, so the finite-horizon remainder `u_N + t_N p_N` is kept as a
//! residual band. Together with the mean it belongs to the large-`t` end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::signal::{inner_product, l2_norm, GridSpec, Signal};
use crate::tv::tv_value;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub dt: f64,
    /// `t_k` for `k = 1..N−1`.
    pub times: Vec<f64>,
    pub bands: Vec<Signal>,
    pub residual: Signal,
    pub mean: f64,
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &GridSpec {
        self.residual.grid()
    }
}

pub fn transform(traj: &FlowTrajectory) -> Result<SpectralDecomposition> {
    let n = traj.steps();
    if n < 3 {
        return Err(Error::Length { needed: 3, got: n });
    }
    let dt = traj.dt();
    let inv = 1.0 / (dt * dt);
    let u = &traj.states;
    let bands = (1..n)
        .map(|k| {
            let t = traj.times[k];
            let vals = u[k + 1]
                .values()
                .iter()
                .zip(u[k].values())
                .zip(u[k - 1].values())
                .map(|((a, b), c)| t * (a - 2.0 * b + c) * inv)
                .collect();
            Signal::from_parts(traj.grid().clone(), vals)
        })
        .collect();
    let residual = u[n].axpy(traj.times[n], &traj.subgradients[n])?;
    Ok(SpectralDecomposition {
        dt,
        times: traj.times[1..n].to_vec(),
        bands,
        residual,
        mean: traj.mean,
    })
}

/// `Σ_k φ_k dt + residual + mean`.
pub fn reconstruct(dec: &SpectralDecomposition) -> Signal {
    weighted_sum(dec, |_| 1.0, 1.0)
}

fn weighted_sum(dec: &SpectralDecomposition, gain: impl Fn(usize) -> f64, tail: f64) -> Signal {
    let mut acc = vec![0.0; dec.residual.len()];
    for (k, band) in dec.bands.iter().enumerate() {
        let w = gain(k) * dec.dt;
        if w != 0.0 {
            for (a, v) in acc.iter_mut().zip(band.values()) {
                *a += w * v;
            }
        }
    }
    if tail != 0.0 {
        for (a, r) in acc.iter_mut().zip(dec.residual.values()) {
            *a += tail * (r + dec.mean);
        }
    }
    Signal::from_parts(dec.grid().clone(), acc)
}

/// Transfer function `H(t)` applied to the band stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec {
    /// Keeps scales `t ≥ cutoff` (plus residual and mean).
    Lowpass { cutoff: f64 },
    /// Keeps scales `t < cutoff`.
    Highpass { cutoff: f64 },
    /// Keeps `t1 ≤ t < t2`.
    Bandpass { t1: f64, t2: f64 },
    /// Complement of the band pass.
    Bandstop { t1: f64, t2: f64 },
    /// One gain per band time. The last gain also weights residual + mean.
    Custom { gains: Vec<f64> },
}

impl FilterSpec {
    pub fn validate(&self, dec: &SpectralDecomposition) -> Result<()> {
        let positive = |name: &str, t: f64| {
            if t > 0.0 && t.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must be positive, got {t}"
                )))
            }
        };
        match self {
            FilterSpec::Lowpass { cutoff } | FilterSpec::Highpass { cutoff } => {
                positive("cutoff", *cutoff)
            }
            FilterSpec::Bandpass { t1, t2 } | FilterSpec::Bandstop { t1, t2 } => {
                positive("t1", *t1)?;
                positive("t2", *t2)?;
                if t1 >= t2 {
                    return Err(Error::Parameter(format!("need t1 < t2, got {t1} >= {t2}")));
                }
                Ok(())
            }
            FilterSpec::Custom { gains } => {
                if gains.len() != dec.times.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} gains for {} bands",
                        gains.len(),
                        dec.times.len()
                    )));
                }
                if gains.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Parameter("non-finite filter gain".into()));
                }
                Ok(())
            }
        }
    }

    fn gain(&self, k: usize, t: f64) -> f64 {
        let pass = match self {
            FilterSpec::Lowpass { cutoff } => t >= *cutoff,
            FilterSpec::Highpass { cutoff } => t < *cutoff,
            FilterSpec::Bandpass { t1, t2 } => t >= *t1 && t < *t2,
            FilterSpec::Bandstop { t1, t2 } => !(t >= *t1 && t < *t2),
            FilterSpec::Custom { gains } => return gains[k],
        };
        if pass {
            1.0
        } else {
            0.0
        }
    }

    fn tail_gain(&self) -> f64 {
        match self {
            FilterSpec::Lowpass { .. } | FilterSpec::Bandstop { .. } => 1.0,
            FilterSpec::Highpass { .. } | FilterSpec::Bandpass { .. } => 0.0,
            FilterSpec::Custom { gains } => gains.last().copied().unwrap_or(0.0),
        }
    }

    /// Cutoff times, for plot markers.
    pub fn cutoffs(&self) -> Vec<f64> {
        match self {
            FilterSpec::Lowpass { cutoff } | FilterSpec::Highpass { cutoff } => vec![*cutoff],
            FilterSpec::Bandpass { t1, t2 } | FilterSpec::Bandstop { t1, t2 } => vec![*t1, *t2],
            FilterSpec::Custom { .. } => vec![],
        }
    }
}

/// `Σ_k H(t_k) φ_k dt`, plus residual and mean when the filter passes the
/// large-`t` end.
pub fn apply_filter(dec: &SpectralDecomposition, spec: &FilterSpec) -> Result<Signal> {
    spec.validate(dec)?;
    Ok(weighted_sum(
        dec,
        |k| spec.gain(k, dec.times[k]),
        spec.tail_gain(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub times: Vec<f64>,
    /// `‖φ_k‖_{L¹}`
    pub s1: Vec<f64>,
    /// `t_k √(d²J/dt²)`
    pub s2: Vec<f64>,
    /// Number of negative second differences of `J` clamped to zero.
    pub clamped: usize,
}

impl Spectrum {
    /// `Σ_k s2_k² dt`, the Parseval-type energy.
    pub fn s2_energy(&self, dt: f64) -> f64 {
        self.s2.iter().map(|s| s * s).sum::<f64>() * dt
    }

    pub fn s1_mass(&self, dt: f64) -> f64 {
        self.s1.iter().sum::<f64>() * dt
    }

    /// Time of the largest `s1` value.
    pub fn s1_peak(&self) -> Option<f64> {
        self.s1
            .iter()
            .zip(&self.times)
            .max_by(|a, b| a.0.total_cmp(b.0))
            .map(|(_, &t)| t)
    }
}

pub fn spectrum(traj: &FlowTrajectory, dec: &SpectralDecomposition) -> Result<Spectrum> {
    check_pair(traj, dec)?;
    let cfg = &traj.params.tv;
    let energies: Vec<f64> = traj.states.iter().map(|u| tv_value(u, cfg)).collect();
    let vol = dec.grid().cell_volume();
    let dt2 = dec.dt * dec.dt;
    let mut clamped = 0;
    let mut s1 = Vec::with_capacity(dec.bands.len());
    let mut s2 = Vec::with_capacity(dec.bands.len());
    for (i, band) in dec.bands.iter().enumerate() {
        let k = i + 1;
        let t = dec.times[i];
        s1.push(band.values().iter().map(|v| v.abs()).sum::<f64>() * vol);
        let curvature = (energies[k + 1] - 2.0 * energies[k] + energies[k - 1]) / dt2;
        if curvature < 0.0 {
            clamped += 1;
        }
        s2.push(t * curvature.max(0.0).sqrt());
    }
    Ok(Spectrum {
        times: dec.times.clone(),
        s1,
        s2,
        clamped,
    })
}

fn check_pair(traj: &FlowTrajectory, dec: &SpectralDecomposition) -> Result<()> {
    if traj.steps() != dec.bands.len() + 1 || traj.grid() != dec.grid() {
        return Err(Error::ShapeMismatch(format!(
            "trajectory with {} steps does not match {} bands",
            traj.steps(),
            dec.bands.len()
        )));
    }
    Ok(())
}

/// Relative norm below which a band or state is skipped by
/// [`check_phi_orthogonality`].
pub const ORTHOGONALITY_THRESHOLD: f64 = 1e-3;

/// `max_k |⟨φ_k, u_k⟩| / (‖φ_k‖‖u_k‖)` over the steps where `‖u_k‖` exceeds
/// `1e-3·‖u₀‖` and `‖φ_k‖` exceeds `1e-3·max‖φ‖`. Zero when no step qualifies.
pub fn check_phi_orthogonality(traj: &FlowTrajectory, dec: &SpectralDecomposition) -> Result<f64> {
    phi_orthogonality_with(traj, dec, ORTHOGONALITY_THRESHOLD)
}

pub fn phi_orthogonality_with(
    traj: &FlowTrajectory,
    dec: &SpectralDecomposition,
    threshold: f64,
) -> Result<f64> {
    check_pair(traj, dec)?;
    let u0 = l2_norm(&traj.states[0]);
    let phi_norms: Vec<f64> = dec.bands.iter().map(l2_norm).collect();
    let phi_max = phi_norms.iter().copied().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for (i, band) in dec.bands.iter().enumerate() {
        let u = &traj.states[i + 1];
        let nu = l2_norm(u);
        let np = phi_norms[i];
        if nu <= threshold * u0 || np <= threshold * phi_max || nu == 0.0 || np == 0.0 {
            continue;
        }
        let overlap = inner_product(band, u)?.abs() / (np * nu + f64::MIN_POSITIVE);
        worst = worst.max(overlap);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run_flow, FlowParams};
    use crate::signal::relative_error;
    use crate::tv::{TvConfig, TvVariant};

    fn aniso() -> TvConfig {
        TvConfig {
            variant: TvVariant::Anisotropic,
            ..TvConfig::default()
        }
    }

    fn centred_box(n: usize, w: usize, a: f64) -> Signal {
        let start = (n - w) / 2;
        let b = -a * w as f64 / (n - w) as f64;
        Signal::from_fn_1d(n, 1.0, |i| {
            if (start..start + w).contains(&i) {
                a
            } else {
                b
            }
        })
        .unwrap()
    }

    fn staircase() -> Signal {
        Signal::from_fn_1d(80, 1.0, |i| match i {
            10..=19 => 2.0,
            20..=44 => 0.7,
            60..=63 => -1.0,
            _ => 0.0,
        })
        .unwrap()
        .shifted(3.0)
    }

    #[test]
    fn too_short_trajectory() {
        let f = centred_box(32, 4, 1.0);
        let traj = run_flow(&f, &FlowParams::new(0.1, aniso()).with_horizon(0.2)).unwrap();
        assert!(matches!(
            transform(&traj),
            Err(Error::Length { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn constant_input() {
        let f = Signal::constant(GridSpec::line(20, 1.0).unwrap(), 1.25);
        let traj = run_flow(&f, &FlowParams::new(0.1, aniso())).unwrap();
        let dec = transform(&traj).unwrap();
        assert!(dec.bands.iter().all(|b| b.max_abs() == 0.0));
        assert_eq!(dec.residual.max_abs(), 0.0);
        assert_eq!(reconstruct(&dec), f);
        let s = spectrum(&traj, &dec).unwrap();
        assert!(s.s1.iter().chain(&s.s2).all(|&v| v == 0.0));
        assert_eq!(check_phi_orthogonality(&traj, &dec).unwrap(), 0.0);
    }

    #[test]
    fn eigenfunction_is_a_single_spike() {
        let f = centred_box(128, 10, 2.0); // λ = 0.1
        let traj = run_flow(&f, &FlowParams::for_eigenvalue(0.1, aniso())).unwrap();
        let dec = transform(&traj).unwrap();
        let s = spectrum(&traj, &dec).unwrap();
        let peak = s.s1_peak().unwrap();
        assert!((peak - 10.0).abs() <= traj.dt() + 1e-9, "{peak}");
        let total = s.s1_mass(dec.dt);
        let near: f64 =
            s.s1.iter()
                .zip(&s.times)
                .filter(|(_, &t)| (9.0..=11.0).contains(&t))
                .map(|(v, _)| v * dec.dt)
                .sum();
        assert!(near >= 0.9 * total);
        let e = s.s2_energy(dec.dt);
        assert!((e / l2_norm(&f).powi(2) - 1.0).abs() < 0.01, "{e}");
        assert!(relative_error(&reconstruct(&dec), &f).unwrap() < 1e-12);
        assert!(check_phi_orthogonality(&traj, &dec).unwrap() <= 0.05);
    }

    #[test]
    fn finite_horizon_reconstruction_is_exact() {
        let f = staircase();
        let traj = run_flow(&f, &FlowParams::new(0.5, aniso()).with_horizon(6.0)).unwrap();
        let dec = transform(&traj).unwrap();
        assert!(relative_error(&reconstruct(&dec), &f).unwrap() < 1e-12);
    }

    #[test]
    fn filter_identities() {
        let f = staircase();
        let cfg = aniso().with_tol(1e-10, 100_000);
        let traj = run_flow(&f, &FlowParams::new(0.25, cfg)).unwrap();
        let dec = transform(&traj).unwrap();
        let full = reconstruct(&dec);
        let ones = FilterSpec::Custom {
            gains: vec![1.0; dec.times.len()],
        };
        assert!(relative_error(&apply_filter(&dec, &ones).unwrap(), &full).unwrap() < 1e-14);

        for tc in [0.5, 3.0, 7.3, 1e6] {
            let lo = apply_filter(&dec, &FilterSpec::Lowpass { cutoff: tc }).unwrap();
            let hi = apply_filter(&dec, &FilterSpec::Highpass { cutoff: tc }).unwrap();
            assert!(relative_error(&lo.add(&hi).unwrap(), &full).unwrap() < 1e-14);
            assert!(hi.mean().abs() < 1e-10);
        }
        let lo = apply_filter(&dec, &FilterSpec::Lowpass { cutoff: 1e6 }).unwrap();
        let dev = lo.shifted(-f.mean()).max_abs();
        assert!(dev < 1e-6, "{dev}");
        let bp = apply_filter(&dec, &FilterSpec::Bandpass { t1: 1.0, t2: 4.0 }).unwrap();
        let bs = apply_filter(&dec, &FilterSpec::Bandstop { t1: 1.0, t2: 4.0 }).unwrap();
        assert!(relative_error(&bp.add(&bs).unwrap(), &full).unwrap() < 1e-14);

        // linearity in H
        let h1: Vec<f64> = dec.times.iter().map(|t| (-t).exp()).collect();
        let h2: Vec<f64> = dec.times.iter().map(|t| (t * 0.3).sin()).collect();
        let h12: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a + b).collect();
        let a = apply_filter(&dec, &FilterSpec::Custom { gains: h1 }).unwrap();
        let b = apply_filter(&dec, &FilterSpec::Custom { gains: h2 }).unwrap();
        let ab = apply_filter(&dec, &FilterSpec::Custom { gains: h12 }).unwrap();
        assert!(relative_error(&a.add(&b).unwrap(), &ab).unwrap() < 1e-12);
    }

    #[test]
    fn filter_validation() {
        let f = staircase();
        let traj = run_flow(&f, &FlowParams::new(0.5, aniso()).with_horizon(5.0)).unwrap();
        let dec = transform(&traj).unwrap();
        assert!(apply_filter(&dec, &FilterSpec::Bandpass { t1: 3.0, t2: 3.0 }).is_err());
        assert!(apply_filter(&dec, &FilterSpec::Bandstop { t1: 4.0, t2: 1.0 }).is_err());
        assert!(apply_filter(&dec, &FilterSpec::Lowpass { cutoff: 0.0 }).is_err());
        assert!(apply_filter(&dec, &FilterSpec::Custom { gains: vec![1.0] }).is_err());
    }
}
