//! Discrete total variation.
//!
//! Forward differences with a replicate (Neumann) boundary define `grad`;
//! `div` is its exact negative adjoint under [`inner_product`]. With that
//! pairing, `J(u) = sup_{|ξ| ≤ 1} ⟨u, div ξ⟩` and every `div ξ` with a
//! feasible field is a subgradient certificate.
//!
//! The proximal operator is computed on the dual field. Two update rules are
//! available: the classic semi-implicit fixed point
//! `ξ ← (ξ + σ g) / (1 + σ|g|)`, `g = grad(div ξ − f/τ)`, and an accelerated
//! projected-gradient variant of the same dual problem (default), which uses
//! Nesterov extrapolation with adaptive restart. Both stop once the max-norm
//! change of `ξ` drops below `prox_tol`.
//!
//! [`inner_product`]: crate::signal::inner_product

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{GridSpec, Signal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvVariant {
    /// `Σ ‖(grad u)ᵢ‖₂`
    Isotropic,
    /// `Σ Σ_axes |(grad u)ᵢ|`
    Anisotropic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualSolver {
    /// Semi-implicit fixed point `ξ ← (ξ + σg)/(1 + σ|g|)`.
    FixedPoint,
    /// Projected gradient with Nesterov extrapolation and gradient restart.
    Accelerated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    pub variant: TvVariant,
    pub prox_tol: f64,
    pub prox_max_iter: usize,
    pub solver: DualSolver,
}

impl Default for TvConfig {
    fn default() -> Self {
        TvConfig {
            variant: TvVariant::Isotropic,
            prox_tol: 1e-6,
            prox_max_iter: 5000,
            solver: DualSolver::Accelerated,
        }
    }
}

impl TvConfig {
    /// Anisotropic with tolerance `1e-8` on 1D grids, isotropic with the
    /// default `1e-6` on 2D grids. The stopping rule on `ξ` leaves an energy
    /// excess of a few times the tolerance, and 1D solves are cheap.
    pub fn for_grid(grid: &GridSpec) -> Self {
        if grid.dims() == 1 {
            TvConfig {
                variant: TvVariant::Anisotropic,
                ..TvConfig::default()
            }
            .with_tol(1e-8, 20_000)
        } else {
            TvConfig::default()
        }
    }

    pub fn with_tol(mut self, tol: f64, max_iter: usize) -> Self {
        self.prox_tol = tol;
        self.prox_max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prox_tol > 0.0) {
            return Err(Error::Parameter(format!(
                "prox_tol must be positive, got {}",
                self.prox_tol
            )));
        }
        if self.prox_max_iter == 0 {
            return Err(Error::Parameter("prox_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// One real array per grid axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        VectorField {
            components: vec![vec![0.0; grid.len()]; grid.dims()],
            grid: grid.clone(),
        }
    }

    pub fn new(grid: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{} components for a {}-D grid",
                components.len(),
                grid.dims()
            )));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(Error::ShapeMismatch(format!(
                    "component of length {} for {} samples",
                    c.len(),
                    grid.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("non-finite field value".into()));
            }
        }
        Ok(VectorField { grid, components })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// `Σ_axes Σᵢ ξ_{a,i} η_{a,i} · h^d`.
    pub fn inner_product(&self, other: &VectorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let s: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| crate::signal::dot(a, b))
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Largest pointwise magnitude (Euclidean across axes).
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c[i] * c[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Forward differences divided by `h`; zero in the last sample of each axis.
pub fn grad(u: &Signal) -> VectorField {
    let mut out = VectorField::zeros(u.grid());
    grad_into(u.values(), u.grid(), &mut out.components);
    out
}

/// Negative adjoint of [`grad`].
pub fn div(xi: &VectorField) -> Signal {
    let mut out = vec![0.0; xi.grid.len()];
    div_into(&xi.components, &xi.grid, &mut out);
    Signal::from_parts(xi.grid.clone(), out)
}

fn grad_into(u: &[f64], grid: &GridSpec, out: &mut [Vec<f64>]) {
    let shape = grid.shape();
    let h = grid.spacing();
    match shape.len() {
        1 => {
            let n = shape[0];
            let inv = 1.0 / h[0];
            let g = &mut out[0];
            for i in 0..n - 1 {
                g[i] = (u[i + 1] - u[i]) * inv;
            }
            g[n - 1] = 0.0;
        }
        _ => {
            let (rows, cols) = (shape[0], shape[1]);
            let (inv0, inv1) = (1.0 / h[0], 1.0 / h[1]);
            let (g0, rest) = out.split_at_mut(1);
            let (g0, g1) = (&mut g0[0], &mut rest[0]);
            for (i, (g0r, g1r)) in g0
                .chunks_exact_mut(cols)
                .zip(g1.chunks_exact_mut(cols))
                .enumerate()
            {
                let ur = &u[i * cols..(i + 1) * cols];
                if i + 1 < rows {
                    let below = &u[(i + 1) * cols..(i + 2) * cols];
                    for ((g, a), b) in g0r.iter_mut().zip(ur).zip(below) {
                        *g = (b - a) * inv0;
                    }
                } else {
                    g0r.fill(0.0);
                }
                for ((g, a), b) in g1r.iter_mut().zip(ur).zip(&ur[1..]) {
                    *g = (b - a) * inv1;
                }
                g1r[cols - 1] = 0.0;
            }
        }
    }
}

fn div_into(xi: &[Vec<f64>], grid: &GridSpec, out: &mut [f64]) {
    let shape = grid.shape();
    let h = grid.spacing();
    match shape.len() {
        1 => {
            let n = shape[0];
            let inv = 1.0 / h[0];
            let x = &xi[0];
            out[0] = x[0] * inv;
            for i in 1..n - 1 {
                out[i] = (x[i] - x[i - 1]) * inv;
            }
            out[n - 1] = -x[n - 2] * inv;
        }
        _ => {
            let (rows, cols) = (shape[0], shape[1]);
            let (inv0, inv1) = (1.0 / h[0], 1.0 / h[1]);
            let (x0, x1) = (&xi[0], &xi[1]);
            for (i, o) in out.chunks_exact_mut(cols).enumerate() {
                let row = i * cols;
                let cur = &x0[row..row + cols];
                if i == 0 {
                    for (o, c) in o.iter_mut().zip(cur) {
                        *o = c * inv0;
                    }
                } else {
                    let above = &x0[row - cols..row];
                    if i + 1 == rows {
                        for (o, a) in o.iter_mut().zip(above) {
                            *o = -a * inv0;
                        }
                    } else {
                        for ((o, c), a) in o.iter_mut().zip(cur).zip(above) {
                            *o = (c - a) * inv0;
                        }
                    }
                }
                let r1 = &x1[row..row + cols];
                o[0] += r1[0] * inv1;
                for ((o, c), a) in o[1..cols - 1].iter_mut().zip(&r1[1..cols - 1]).zip(r1) {
                    *o += (c - a) * inv1;
                }
                o[cols - 1] -= r1[cols - 2] * inv1;
            }
        }
    }
}

pub fn tv_value(u: &Signal, cfg: &TvConfig) -> f64 {
    let g = grad(u);
    let n = u.len();
    let total: f64 = match (cfg.variant, g.components.len()) {
        (_, 1) => g.components[0].iter().map(|v| v.abs()).sum(),
        (TvVariant::Anisotropic, _) => g
            .components
            .iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .sum(),
        (TvVariant::Isotropic, _) => {
            let (a, b) = (&g.components[0], &g.components[1]);
            (0..n).map(|i| a[i].hypot(b[i])).sum()
        }
    };
    total * u.grid().cell_volume()
}

/// Output of [`prox_tv`]: the minimizer together with its dual certificate.
#[derive(Clone, Debug)]
pub struct ProxResult {
    pub signal: Signal,
    /// Dual field with `|ξᵢ| ≤ 1`; `div ξ ∈ ∂J(signal)`.
    pub dual: VectorField,
    pub iterations: usize,
    pub converged: bool,
}

/// `argmin_u ½‖u − f‖² + τ J(u)`.
pub fn prox_tv(f: &Signal, tau: f64, cfg: &TvConfig) -> Result<ProxResult> {
    prox_tv_warm(f, tau, cfg, None)
}

/// [`prox_tv`] started from a given dual field (e.g. the previous flow step).
pub fn prox_tv_warm(
    f: &Signal,
    tau: f64,
    cfg: &TvConfig,
    warm: Option<&VectorField>,
) -> Result<ProxResult> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    cfg.validate()?;
    let grid = f.grid();
    let mut xi = match warm {
        Some(w) => {
            grid.check_same(w.grid())?;
            w.clone()
        }
        None => VectorField::zeros(grid),
    };
    let scaled: Vec<f64> = f.values().iter().map(|v| v / tau).collect();
    let mut solver = DualIteration::new(grid, cfg.variant);
    let (iterations, converged) = match cfg.solver {
        DualSolver::FixedPoint => solver.fixed_point(&mut xi.components, &scaled, cfg),
        DualSolver::Accelerated => solver.accelerated(&mut xi.components, &scaled, cfg),
    };
    let mut d = vec![0.0; grid.len()];
    div_into(&xi.components, grid, &mut d);
    let values = f
        .values()
        .iter()
        .zip(&d)
        .map(|(fv, dv)| fv - tau * dv)
        .collect();
    Ok(ProxResult {
        signal: Signal::from_parts(grid.clone(), values),
        dual: xi,
        iterations,
        converged,
    })
}

/// Scratch buffers for the dual iterations.
struct DualIteration<'g> {
    grid: &'g GridSpec,
    variant: TvVariant,
    step: f64,
    residual: Vec<f64>,
    gradient: Vec<Vec<f64>>,
}

impl<'g> DualIteration<'g> {
    fn new(grid: &'g GridSpec, variant: TvVariant) -> Self {
        let h = grid.min_spacing();
        // 1/‖div‖², ‖div‖² ≤ 4d/h²
        let step = h * h / (4.0 * grid.dims() as f64);
        DualIteration {
            grid,
            variant,
            step,
            residual: vec![0.0; grid.len()],
            gradient: vec![vec![0.0; grid.len()]; grid.dims()],
        }
    }

    /// `gradient ← grad(div ξ − f/τ)`
    fn dual_gradient(&mut self, xi: &[Vec<f64>], scaled: &[f64]) {
        div_into(xi, self.grid, &mut self.residual);
        for (r, s) in self.residual.iter_mut().zip(scaled) {
            *r -= s;
        }
        grad_into(&self.residual, self.grid, &mut self.gradient);
    }

    fn isotropic(&self) -> bool {
        self.variant == TvVariant::Isotropic && self.grid.dims() == 2
    }

    fn fixed_point(
        &mut self,
        xi: &mut [Vec<f64>],
        scaled: &[f64],
        cfg: &TvConfig,
    ) -> (usize, bool) {
        let sigma = self.step;
        let n = self.grid.len();
        for it in 1..=cfg.prox_max_iter {
            self.dual_gradient(xi, scaled);
            let mut change: f64 = 0.0;
            if self.isotropic() {
                let (g0, g1) = (&self.gradient[0], &self.gradient[1]);
                let (x0, rest) = xi.split_at_mut(1);
                let (x0, x1) = (&mut x0[0], &mut rest[0]);
                for k in 0..n {
                    let denom = 1.0 + sigma * g0[k].hypot(g1[k]);
                    let a = (x0[k] + sigma * g0[k]) / denom;
                    let b = (x1[k] + sigma * g1[k]) / denom;
                    change = change.max((a - x0[k]).abs()).max((b - x1[k]).abs());
                    x0[k] = a;
                    x1[k] = b;
                }
            } else {
                for (x, g) in xi.iter_mut().zip(&self.gradient) {
                    for k in 0..n {
                        let a = (x[k] + sigma * g[k]) / (1.0 + sigma * g[k].abs());
                        change = change.max((a - x[k]).abs());
                        x[k] = a;
                    }
                }
            }
            if change < cfg.prox_tol {
                return (it, true);
            }
        }
        (cfg.prox_max_iter, false)
    }

    fn accelerated(
        &mut self,
        xi: &mut [Vec<f64>],
        scaled: &[f64],
        cfg: &TvConfig,
    ) -> (usize, bool) {
        let sigma = self.step;
        let dims = self.grid.dims();
        let mut y: Vec<Vec<f64>> = xi.to_vec();
        let mut next: Vec<Vec<f64>> = xi.to_vec();
        let mut t: f64 = 1.0;
        for it in 1..=cfg.prox_max_iter {
            self.dual_gradient(&y, scaled);
            // next = P(y + σ g)
            if self.isotropic() {
                let (n0, n1) = next.split_at_mut(1);
                let (g0, g1) = (&self.gradient[0], &self.gradient[1]);
                for ((((a0, a1), y0), y1), (d0, d1)) in n0[0]
                    .iter_mut()
                    .zip(n1[0].iter_mut())
                    .zip(&y[0])
                    .zip(&y[1])
                    .zip(g0.iter().zip(g1))
                {
                    let a = y0 + sigma * d0;
                    let b = y1 + sigma * d1;
                    let m = a * a + b * b;
                    let s = if m > 1.0 { 1.0 / m.sqrt() } else { 1.0 };
                    *a0 = a * s;
                    *a1 = b * s;
                }
            } else {
                for ((nx, yx), g) in next.iter_mut().zip(&y).zip(&self.gradient) {
                    for ((nv, yv), gv) in nx.iter_mut().zip(yx).zip(g) {
                        *nv = (yv + sigma * gv).clamp(-1.0, 1.0);
                    }
                }
            }
            let mut change: f64 = 0.0;
            let mut restart_test = 0.0;
            for ((nx, xx), yx) in next.iter().zip(xi.iter()).zip(&y) {
                for ((nv, xv), yv) in nx.iter().zip(xx).zip(yx) {
                    let step = nv - xv;
                    change = change.max(step.abs());
                    restart_test += (yv - nv) * step;
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if restart_test > 0.0 {
                t = 1.0;
                for a in 0..dims {
                    y[a].copy_from_slice(&next[a]);
                }
            } else {
                let beta = (t - 1.0) / t_next;
                t = t_next;
                for ((yx, nx), xx) in y.iter_mut().zip(&next).zip(xi.iter()) {
                    for ((yv, nv), xv) in yx.iter_mut().zip(nx).zip(xx) {
                        *yv = nv + beta * (nv - xv);
                    }
                }
            }
            for a in 0..dims {
                xi[a].copy_from_slice(&next[a]);
            }
            if change < cfg.prox_tol {
                return (it, true);
            }
        }
        (cfg.prox_max_iter, false)
    }
}

/// A subgradient `p ∈ ∂J(·)` extracted by one implicit step of size `tau`.
#[derive(Clone, Debug)]
pub struct Subgradient {
    pub value: Signal,
    pub tau: f64,
    /// `J` at the signal the subgradient was requested for.
    pub functional_value: f64,
    pub converged: bool,
}

/// Step used when the caller passes `tau = 0`: `0.01·‖v‖∞·h`.
pub fn default_subgradient_tau(v: &Signal) -> f64 {
    let t = 0.01 * v.max_abs() * v.grid().min_spacing();
    if t > 0.0 {
        t
    } else {
        0.01 * v.grid().min_spacing()
    }
}

/// Canonical subgradient `p = (v − prox(v, τ)) / τ`.
///
/// `p` lies exactly in `∂J(prox(v, τ))` and tends to the minimal-norm
/// element of `∂J(v)` as `τ → 0`. A zero `tau` selects
/// [`default_subgradient_tau`].
pub fn subgradient(v: &Signal, tau: f64, cfg: &TvConfig) -> Result<Subgradient> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Parameter(format!("tau must be >= 0, got {tau}")));
    }
    let tau = if tau == 0.0 {
        default_subgradient_tau(v)
    } else {
        tau
    };
    let prox = prox_tv(v, tau, cfg)?;
    Ok(Subgradient {
        value: div(&prox.dual),
        tau,
        functional_value: tv_value(v, cfg),
        converged: prox.converged,
    })
}
