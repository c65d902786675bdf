//! Gradient flow `∂ₜu = −p`, `p ∈ ∂J(u)`, integrated with implicit Euler.
//!
//! Each step is a proximal step, `u_{k+1} = prox_tv(u_k, dt)`, so the recorded
//! `p_{k+1} = (u_k − u_{k+1})/dt` is an exact subgradient at `u_{k+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{l2_norm, split_mean, GridSpec, Signal};
use crate::tv::{prox_tv_warm, TvConfig, VectorField};

/// Number of time steps the flow may take.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Run to time `T` (or earlier extinction).
    Fixed(f64),
    /// Run until extinction, capped at `max_steps`.
    Auto { max_steps: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub dt: f64,
    pub horizon: Horizon,
    pub tv: TvConfig,
    /// Early stop once `‖u‖ < stop_eps · ‖u₀‖`.
    pub stop_eps: f64,
}

impl FlowParams {
    pub const DEFAULT_STOP_EPS: f64 = 1e-4;
    pub const DEFAULT_MAX_STEPS: usize = 100_000;

    pub fn new(dt: f64, tv: TvConfig) -> Self {
        FlowParams {
            dt,
            horizon: Horizon::Auto {
                max_steps: Self::DEFAULT_MAX_STEPS,
            },
            tv,
            stop_eps: Self::DEFAULT_STOP_EPS,
        }
    }

    /// `dt = (1/λ)/50`, enough to place the extinction of an eigenfunction
    /// with eigenvalue `lambda` to within 2%.
    pub fn for_eigenvalue(lambda: f64, tv: TvConfig) -> Self {
        FlowParams::new(1.0 / (50.0 * lambda), tv)
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = Horizon::Fixed(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        match self.horizon {
            Horizon::Fixed(t) if !(t >= 2.0 * self.dt) => {
                return Err(Error::Parameter(format!(
                    "horizon {t} must be at least 2·dt = {}",
                    2.0 * self.dt
                )))
            }
            Horizon::Auto { max_steps } if max_steps < 2 => {
                return Err(Error::Parameter("max_steps must be at least 2".into()))
            }
            _ => {}
        }
        if !(self.stop_eps >= 0.0) {
            return Err(Error::Parameter(format!(
                "stop_eps must be non-negative, got {}",
                self.stop_eps
            )));
        }
        self.tv.validate()
    }

    fn max_steps(&self) -> usize {
        match self.horizon {
            Horizon::Fixed(t) => (t / self.dt + 1e-9).floor() as usize,
            Horizon::Auto { max_steps } => max_steps,
        }
    }
}

/// Time-sampled flow solution `{t_k, u_k, p_k}`, `k = 0..=N`.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub params: FlowParams,
    pub times: Vec<f64>,
    pub states: Vec<Signal>,
    /// `p_k = (u_{k−1} − u_k)/dt`, with `p_0 = p_1`.
    pub subgradients: Vec<Signal>,
    /// Mean stripped from the input before the flow.
    pub mean: f64,
    /// Per-step prox convergence flags (`converged[0]` is always true).
    pub converged: Vec<bool>,
    pub prox_iterations: Vec<usize>,
}

impl FlowTrajectory {
    /// Number of steps `N` (there are `N + 1` states).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn grid(&self) -> &GridSpec {
        self.states[0].grid()
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub(crate) fn is_extinct(&self, k: usize) -> bool {
        is_extinct(
            &self.states[k],
            l2_norm(&self.states[0]),
            self.params.stop_eps,
        )
    }
}

fn is_extinct(u: &Signal, norm0: f64, eps: f64) -> bool {
    norm0 == 0.0 || l2_norm(u) < eps * norm0
}

/// Runs the flow from `f` until the horizon or one step past extinction.
///
/// At least three steps are recorded whenever the horizon allows it, so a
/// spectral transform can always be taken.
pub fn run_flow(f: &Signal, params: &FlowParams) -> Result<FlowTrajectory> {
    params.validate()?;
    let (u0, mean) = split_mean(f);
    let norm0 = l2_norm(&u0);
    let dt = params.dt;
    let max_steps = params.max_steps();

    let mut times = vec![0.0];
    let mut states = vec![u0];
    let mut subgradients: Vec<Signal> = vec![];
    let mut converged = vec![true];
    let mut prox_iterations = vec![0];
    let mut warm: Option<VectorField> = None;

    for k in 1..=max_steps {
        let prev = &states[k - 1];
        if prev.max_abs() == 0.0 {
            // the dual problem of a zero input is solved by ξ = 0
            warm = None;
        }
        let step = prox_tv_warm(prev, dt, &params.tv, warm.as_ref())?;
        let p = prev.sub(&step.signal)?.scaled(1.0 / dt);
        times.push(k as f64 * dt);
        states.push(step.signal);
        subgradients.push(p);
        converged.push(step.converged);
        prox_iterations.push(step.iterations);
        warm = Some(step.dual);
        if k >= 3 && is_extinct(&states[k - 1], norm0, params.stop_eps) {
            break;
        }
    }
    let p0 = subgradients[0].clone();
    subgradients.insert(0, p0);

    Ok(FlowTrajectory {
        params: *params,
        times,
        states,
        subgradients,
        mean,
        converged,
        prox_iterations,
    })
}

/// First recorded `t_k` with `‖u_k‖ < stop_eps·‖u₀‖`, or the final time.
pub fn extinction_time(traj: &FlowTrajectory) -> f64 {
    (0..traj.states.len())
        .find(|&k| traj.is_extinct(k))
        .map(|k| traj.times[k])
        .unwrap_or_else(|| match traj.params.horizon {
            Horizon::Fixed(t) => t,
            Horizon::Auto { .. } => *traj.times.last().unwrap(),
        })
}
