//! Nonlinear eigenfunctions `λf ∈ ∂J(f)` of total variation.
//!
//! In 1D, with anisotropic TV and Neumann boundaries, a box of value `a` on
//! `w` samples sitting on zero-mean backgrounds is an exact eigenfunction
//! with `λ = 2/(w·h·a)` as long as each background level satisfies
//! `λ·|b|·L·h = 1` (`L` its length). 2D discs are only approximate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{inner_product, l2_norm, split_mean, GridSpec, Signal};
use crate::sip::{Functional, TotalVariation};

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub signal: Signal,
    pub lambda: f64,
    /// `‖p − λf‖ / ‖p‖` for the canonical subgradient `p`.
    pub residual: f64,
}

/// `J(f) / ‖f‖²`.
pub fn rayleigh_lambda<F: Functional + ?Sized>(f: &Signal, func: &F) -> Result<f64> {
    let n2 = inner_product(f, f)?;
    if n2 == 0.0 {
        return Err(Error::Domain("Rayleigh quotient of the zero signal".into()));
    }
    Ok(func.value(f) / n2)
}

pub fn eigen_residual<F: Functional + ?Sized>(f: &Signal, func: &F) -> Result<Eigenpair> {
    let lambda = rayleigh_lambda(f, func)?;
    let p = func.subgradient(f)?;
    let np = l2_norm(&p);
    let diff = l2_norm(&p.axpy(-lambda, f)?);
    Ok(Eigenpair {
        signal: f.clone(),
        lambda,
        residual: if np > 0.0 { diff / np } else { diff },
    })
}

/// Box of value `a` on a centered window of `w` samples, background
/// `−a·w/(n−w)`; `λ = 2/(w·a)`.
pub fn make_box_1d(n: usize, w: usize, a: f64) -> Result<Eigenpair> {
    if w < 2 || w + 2 > n {
        return Err(Error::Parameter(format!(
            "need 2 <= w <= n-2, got n={n} w={w}"
        )));
    }
    make_box_1d_at(n, w, a, (n - w) / 2)
}

/// Box of value `a` on samples `start..start+w`. The two background levels
/// are chosen separately so the signal is an exact eigenfunction with
/// `λ = 2/(w·a)` at any offset.
pub fn make_box_1d_at(n: usize, w: usize, a: f64, start: usize) -> Result<Eigenpair> {
    let signal = box_signal(n, w, a, start)?;
    eigen_residual(&signal, &TotalVariation::for_grid(signal.grid()))
}

pub(crate) fn box_signal(n: usize, w: usize, a: f64, start: usize) -> Result<Signal> {
    if w < 2 || start == 0 || start + w >= n {
        return Err(Error::Parameter(format!(
            "box of width {w} at {start} needs background on both sides of a length-{n} signal"
        )));
    }
    if !(a != 0.0 && a.is_finite()) {
        return Err(Error::Parameter(format!(
            "amplitude must be non-zero, got {a}"
        )));
    }
    let end = start + w;
    let mass = a * w as f64;
    let left = -mass / (2.0 * start as f64);
    let right = -mass / (2.0 * (n - end) as f64);
    Signal::from_fn_1d(n, 1.0, |i| {
        if i < start {
            left
        } else if i < end {
            a
        } else {
            right
        }
    })
}

/// Zero-mean disc of radius `r` samples and given height on an `n × n` grid,
/// centre `(row, col)`. Boundary pixels carry their area coverage, estimated
/// on an 8 × 8 subgrid.
pub fn disc_signal(n: usize, r: f64, center: (f64, f64), height: f64) -> Result<Signal> {
    check_disc(n, r, center)?;
    let raw = Signal::from_fn_2d(n, 1.0, |i, j| height * disc_coverage(i, j, r, center))?;
    Ok(split_mean(&raw).0)
}

pub(crate) fn check_disc(n: usize, r: f64, center: (f64, f64)) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!(
            "radius must be positive, got {r}"
        )));
    }
    let hi = n as f64 - 3.0;
    let (cy, cx) = center;
    if cy - r < 2.0 || cx - r < 2.0 || cy + r > hi || cx + r > hi {
        return Err(Error::InvalidGrid(format!(
            "disc r={r} at ({cy}, {cx}) leaves less than 2 samples of margin in {n}x{n}"
        )));
    }
    Ok(())
}

pub(crate) fn disc_coverage(i: usize, j: usize, r: f64, (cy, cx): (f64, f64)) -> f64 {
    const SUB: usize = 8;
    let (y, x) = (i as f64 - cy, j as f64 - cx);
    let reach = r + 1.0;
    if y.abs() > reach || x.abs() > reach {
        return 0.0;
    }
    let mut hits = 0;
    for a in 0..SUB {
        let dy = y + (a as f64 + 0.5) / SUB as f64 - 0.5;
        for b in 0..SUB {
            let dx = x + (b as f64 + 0.5) / SUB as f64 - 0.5;
            if dy * dy + dx * dx <= r * r {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUB * SUB) as f64
}

/// [`disc_signal`] with its Rayleigh quotient and measured residual under
/// isotropic TV. Discs are not exact discrete eigenfunctions.
pub fn make_disc_2d(n: usize, r: f64, center: (f64, f64), height: f64) -> Result<Eigenpair> {
    let signal = disc_signal(n, r, center, height)?;
    eigen_residual(&signal, &TotalVariation::for_grid(signal.grid()))
}

/// `(1 − λt)⁺ f`.
pub fn eigen_flow_solution(pair: &Eigenpair, t: f64) -> Signal {
    pair.signal.scaled((1.0 - pair.lambda * t).max(0.0))
}

/// Geometry of a constructed eigenfunction, for manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum EigenGeometry {
    Box1d {
        n: usize,
        w: usize,
        a: f64,
        start: usize,
    },
    Disc2d {
        n: usize,
        r: f64,
        center: (f64, f64),
        height: f64,
    },
}

impl EigenGeometry {
    pub fn build(&self) -> Result<Eigenpair> {
        match *self {
            EigenGeometry::Box1d { n, w, a, start } => make_box_1d_at(n, w, a, start),
            EigenGeometry::Disc2d {
                n,
                r,
                center,
                height,
            } => make_disc_2d(n, r, center, height),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        match *self {
            EigenGeometry::Box1d { n, .. } => GridSpec::line(n, 1.0),
            EigenGeometry::Disc2d { n, .. } => GridSpec::plane(n, n, 1.0),
        }
    }
}
