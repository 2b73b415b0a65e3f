//! Sampled-data receding-horizon control, stability verdicts and value
//! iteration.
//!
//! Value iteration uses the indexing `V¹ ≡ 0`, `V^{k+1} = V_{kΔt}`: after `k`
//! Bellman steps of length `Δt` the iterate equals the horizon-`kΔt` value.

mod trace_io;
mod verdict;
mod vi;

use nalgebra::DVector;

pub use trace_io::{read_trace_csv, trace_table, write_trace_csv, TraceTable};
pub use verdict::{classify_stability, fit_decay, StabilityVerdict};
pub use vi::{
    linear_rhc_transition, rhc_vi_gain_agreement, spectral_radius, vi_recursion_linear, vi_value,
};

use crate::error::{check_dim, check_epsilon};
use crate::ocp::{
    default_n_ctrl, evaluate_cost, lqr_initial_guess, solve_finite_horizon, ControlTrajectory,
    HorizonSpec, InitialGuess, SolveOptions, SolveStatus, DEFAULT_N_INT,
};
use crate::systems::ControlAffineSystem;
use crate::{Error, Result};

pub const DEFAULT_SIM_TIME: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct RHCConfig {
    /// Prediction horizon `T`.
    pub horizon: f64,
    /// Sampling interval `Δt`.
    pub dt: f64,
    pub epsilon: f64,
    pub sim_time: f64,
    /// Defaults to `1e3·max(1, ‖x₀‖)`.
    pub diverge_radius: Option<f64>,
    /// Defaults to `1e-2·max(1, ‖x₀‖)`.
    pub settle_radius: Option<f64>,
    /// Control intervals per horizon; defaults to `max(20, ⌈T/0.01⌉)`.
    pub n_ctrl: Option<usize>,
    pub n_int: usize,
    /// Solver settings; `init` is ignored (warm starts are managed by the loop).
    pub solver: SolveOptions,
}

impl RHCConfig {
    pub fn new(horizon: f64, dt: f64, epsilon: f64) -> Self {
        Self {
            horizon,
            dt,
            epsilon,
            sim_time: DEFAULT_SIM_TIME,
            diverge_radius: None,
            settle_radius: None,
            n_ctrl: None,
            n_int: DEFAULT_N_INT,
            solver: SolveOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) {
            return Err(Error::InvalidConfig(format!(
                "need T ≥ dt > 0, got T = {}, dt = {}",
                self.horizon, self.dt
            )));
        }
        if !(self.sim_time >= self.horizon) || !self.sim_time.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sim_time ({}) must be finite and at least T ({})",
                self.sim_time, self.horizon
            )));
        }
        if let (Some(d), Some(s)) = (self.diverge_radius, self.settle_radius) {
            if !(d > s && s > 0.0) {
                return Err(Error::InvalidConfig(
                    "need diverge_radius > settle_radius > 0".into(),
                ));
            }
        }
        if self.n_int == 0 || self.n_ctrl == Some(0) {
            return Err(Error::InvalidConfig("n_ctrl and n_int must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `(diverge_radius, settle_radius)` for a run started at `x0`.
    pub fn radii(&self, x0: &DVector<f64>) -> (f64, f64) {
        let scale = x0.norm().max(1.0);
        (
            self.diverge_radius.unwrap_or(1e3 * scale),
            self.settle_radius.unwrap_or(1e-2 * scale),
        )
    }

    pub fn horizon_spec(&self) -> Result<HorizonSpec> {
        HorizonSpec::new(
            self.horizon,
            self.n_ctrl.unwrap_or_else(|| default_n_ctrl(self.horizon)),
            self.n_int,
        )
    }

    /// Number of closed-loop samples covering `sim_time`.
    pub fn n_samples(&self) -> usize {
        (self.sim_time / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Per-step solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub cost: f64,
    pub converged: bool,
    pub status: SolveStatus,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// A constant input applied on `[t0, t1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedControl {
    pub t0: f64,
    pub t1: f64,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    pub sample_times: Vec<f64>,
    /// `x(t_k)`, `t_k = kΔt`.
    pub sample_states: Vec<DVector<f64>>,
    pub dense_times: Vec<f64>,
    pub dense_states: Vec<DVector<f64>>,
    pub controls: Vec<AppliedControl>,
    pub per_step_reports: Vec<StepReport>,
    /// Running `∫ℓ` at each sample time.
    pub accumulated_cost: Vec<f64>,
    /// Largest jump between the end of one segment and the start of the next.
    pub continuity_error: f64,
    /// The run stopped early because the divergence radius was crossed.
    pub diverged: bool,
}

impl ClosedLoopTrace {
    /// Trace made only of sample points (dense grid = samples); used for
    /// analysing externally produced trajectories.
    pub fn from_samples(times: Vec<f64>, states: Vec<DVector<f64>>) -> Self {
        let n = times.len();
        Self {
            sample_times: times.clone(),
            sample_states: states.clone(),
            dense_times: times,
            dense_states: states,
            controls: Vec::new(),
            per_step_reports: Vec::new(),
            accumulated_cost: vec![0.0; n],
            continuity_error: 0.0,
            diverged: false,
        }
    }

    pub fn final_time(&self) -> f64 {
        self.dense_times.last().copied().unwrap_or(0.0)
    }
}

/// Integrates the plant over `[0, dt]` under the piecewise-constant `ctrl`,
/// using `n_int` RK4 substeps per (possibly partial) control interval.
/// Returns dense times, states and the integral of the running cost.
fn apply_segment(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    ctrl: &ControlTrajectory,
    dt: f64,
    controls: &mut Vec<AppliedControl>,
    t_offset: f64,
) -> (Vec<f64>, Vec<DVector<f64>>, f64) {
    let hz = ctrl.horizon;
    let dtc = hz.dt_ctrl();
    let n = system.state_dim();
    let q = system.input_dim();
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut x = x0.as_slice().to_vec();
    let mut rk = crate::ocp::Rk4::new(n);
    let mut cost = 0.0;
    let mut hval = vec![0.0; q];
    let mut t = 0.0;
    let mut j = 0;
    while t < dt - 1e-12 * dt.max(1.0) && j < hz.n_ctrl {
        let end = ((j + 1) as f64 * dtc).min(dt);
        let len = end - t;
        if len <= 1e-14 {
            j += 1;
            continue;
        }
        let m = ((hz.n_int as f64 * len / dtc - 1e-9).ceil() as usize).max(1);
        let h = len / m as f64;
        let u = &ctrl.values[j];
        let weights = crate::ocp::local_weights(m);
        system.output(&x, &mut hval);
        cost += weights[0] * h * hval.iter().map(|v| v * v).sum::<f64>();
        for i in 0..m {
            rk.step(system, &mut x, u.as_slice(), h);
            system.output(&x, &mut hval);
            cost += weights[i + 1] * h * hval.iter().map(|v| v * v).sum::<f64>();
            times.push(t + (i + 1) as f64 * h);
            states.push(DVector::from_column_slice(&x));
        }
        cost += epsilon * len * u.norm_squared();
        controls.push(AppliedControl {
            t0: t_offset + t,
            t1: t_offset + end,
            u: u.clone(),
        });
        t = end;
        j += 1;
    }
    (times, states, cost)
}

/// The cheaper of the shifted warm start and the LQR rollout; with `Δt`
/// close to `T` the shifted control is mostly padding.
fn better_start(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x: &DVector<f64>,
    hz: HorizonSpec,
    warm: Option<ControlTrajectory>,
) -> Option<ControlTrajectory> {
    let warm = warm?;
    let Ok(lqr) = lqr_initial_guess(system, epsilon, x, hz) else {
        return Some(warm);
    };
    let cost = |c: &ControlTrajectory| {
        evaluate_cost(system, epsilon, x, c)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    if cost(&lqr) < cost(&warm) {
        Some(lqr)
    } else {
        Some(warm)
    }
}

/// Runs the receding-horizon loop from `x0`: solve on `[0, T]`, apply the
/// first `Δt`, warm-start the next solve with the shifted control.
pub fn run_rhc(
    system: &dyn ControlAffineSystem,
    config: &RHCConfig,
    x0: &DVector<f64>,
) -> Result<ClosedLoopTrace> {
    config.validate()?;
    check_dim("initial state", system.state_dim(), x0.len())?;
    let hz = config.horizon_spec()?;
    let (diverge, _) = config.radii(x0);
    let mut trace = ClosedLoopTrace {
        sample_times: vec![0.0],
        sample_states: vec![x0.clone()],
        dense_times: vec![0.0],
        dense_states: vec![x0.clone()],
        controls: Vec::new(),
        per_step_reports: Vec::new(),
        accumulated_cost: vec![0.0],
        continuity_error: 0.0,
        diverged: false,
    };
    let mut x = x0.clone();
    let mut warm: Option<ControlTrajectory> = None;
    let mut opts = config.solver.clone();
    for k in 0..config.n_samples() {
        let t_k = k as f64 * config.dt;
        let dt = config.dt.min(config.sim_time - t_k);
        opts.init = warm.take();
        if config.solver.fallback_init == InitialGuess::Lqr {
            opts.init = better_start(system, config.epsilon, &x, hz, opts.init.take());
        }
        let (ctrl, report) =
            solve_finite_horizon(system, config.epsilon, &x, hz, &opts).map_err(|e| {
                Error::SolverFailure {
                    step: k,
                    source: Box::new(e),
                }
            })?;
        trace.per_step_reports.push(StepReport {
            cost: report.cost,
            converged: report.converged,
            status: report.status,
            iterations: report.iterations,
            grad_norm: report.grad_norm,
        });
        let (times, states, seg_cost) = apply_segment(
            system,
            config.epsilon,
            &x,
            &ctrl,
            dt,
            &mut trace.controls,
            t_k,
        );
        let gap = (&states[0] - trace.dense_states.last().expect("nonempty")).amax();
        trace.continuity_error = trace.continuity_error.max(gap);
        let mut escaped = false;
        for (t, s) in times.iter().zip(&states).skip(1) {
            trace.dense_times.push(t_k + t);
            trace.dense_states.push(s.clone());
            if !s.iter().all(|v| v.is_finite()) || s.norm() >= diverge {
                escaped = true;
                break;
            }
        }
        x = trace.dense_states.last().expect("nonempty").clone();
        trace
            .sample_times
            .push(*trace.dense_times.last().expect("nonempty"));
        trace.sample_states.push(x.clone());
        let acc = trace.accumulated_cost.last().copied().unwrap_or(0.0);
        trace.accumulated_cost.push(acc + seg_cost);
        if escaped {
            trace.diverged = true;
            break;
        }
        warm = Some(ctrl.shifted(dt, hz));
    }
    Ok(trace)
}
