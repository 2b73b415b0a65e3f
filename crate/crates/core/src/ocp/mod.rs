//! Finite-horizon optimal control.
//!
//! Nonlinear plants are handled by direct single shooting: piecewise-constant
//! controls, RK4 substeps, Simpson quadrature of `‖h(x)‖²` and an exact
//! discrete adjoint feeding L-BFGS. Linear plants additionally get Riccati
//! oracles, and linear zero dynamics get the minimum-energy solution.

mod lbfgs;
mod riccati;
mod shooting;

use nalgebra::DVector;

pub use lbfgs::SolveStatus;
pub use riccati::{
    min_energy_value, riccati_step, solve_care, solve_riccati_finite, solve_riccati_terminal,
    CareSolution, MinEnergySolution, RiccatiSolution,
};

use crate::error::{check_dim, check_epsilon};
use crate::systems::{linearize_at_origin, ControlAffineSystem};
use crate::{Error, Result};
use lbfgs::{minimize, LbfgsParams};
use shooting::Shooting;

pub(crate) use shooting::{local_weights, Rk4};

pub const DEFAULT_N_INT: usize = 10;
pub const DEFAULT_TOL_GRAD: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonSpec {
    pub t: f64,
    pub n_ctrl: usize,
    pub n_int: usize,
}

impl HorizonSpec {
    pub fn new(t: f64, n_ctrl: usize, n_int: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidHorizon(format!(
                "T must be positive, got {t}"
            )));
        }
        if n_ctrl == 0 || n_int == 0 {
            return Err(Error::InvalidHorizon(
                "n_ctrl and n_int must be at least 1".into(),
            ));
        }
        Ok(Self { t, n_ctrl, n_int })
    }

    /// `n_ctrl = max(20, ⌈T/0.01⌉)`, `n_int = 10`.
    pub fn with_defaults(t: f64) -> Result<Self> {
        Self::new(t, default_n_ctrl(t), DEFAULT_N_INT)
    }

    pub fn dt_ctrl(&self) -> f64 {
        self.t / self.n_ctrl as f64
    }

    pub fn substep(&self) -> f64 {
        self.dt_ctrl() / self.n_int as f64
    }

    /// Times of the integration grid, `N + 1 = n_ctrl·n_int + 1` points.
    pub fn grid_times(&self) -> Vec<f64> {
        let total = self.n_ctrl * self.n_int;
        (0..=total)
            .map(|k| self.t * k as f64 / total as f64)
            .collect()
    }
}

pub fn default_n_ctrl(t: f64) -> usize {
    ((t / 0.01 - 1e-9).ceil() as usize).max(20)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    pub values: Vec<DVector<f64>>,
    pub horizon: HorizonSpec,
}

impl ControlTrajectory {
    pub fn zeros(q: usize, horizon: HorizonSpec) -> Self {
        Self {
            values: vec![DVector::zeros(q); horizon.n_ctrl],
            horizon,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Piecewise-constant value at time `t`; zero outside `[0, T)`.
    pub fn value_at(&self, t: f64) -> DVector<f64> {
        let q = self.input_dim();
        if t < 0.0 || t >= self.horizon.t {
            return DVector::zeros(q);
        }
        let j = ((t / self.horizon.dt_ctrl()) as usize).min(self.horizon.n_ctrl - 1);
        self.values[j].clone()
    }

    /// Warm start for the next receding-horizon step: `u(· + shift)` sampled
    /// at interval midpoints of `horizon`, zero past the end.
    pub fn shifted(&self, shift: f64, horizon: HorizonSpec) -> Self {
        let dt = horizon.dt_ctrl();
        Self {
            values: (0..horizon.n_ctrl)
                .map(|j| self.value_at(shift + (j as f64 + 0.5) * dt))
                .collect(),
            horizon,
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    fn from_flat(flat: &[f64], q: usize, horizon: HorizonSpec) -> Self {
        Self {
            values: flat
                .chunks(q.max(1))
                .take(horizon.n_ctrl)
                .map(DVector::from_column_slice)
                .collect(),
            horizon,
        }
    }
}

/// Initial iterate used when [`SolveOptions::init`] is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Sampled LQR feedback of the linearization applied to the plant; falls
    /// back to zero controls if the linearization is not stabilizable.
    Lqr,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol_grad: f64,
    pub max_iter: usize,
    pub lbfgs_memory: usize,
    /// Initial iterate; `fallback_init` decides when absent.
    pub init: Option<ControlTrajectory>,
    pub fallback_init: InitialGuess,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_grad: DEFAULT_TOL_GRAD,
            max_iter: DEFAULT_MAX_ITER,
            lbfgs_memory: 10,
            init: None,
            fallback_init: InitialGuess::Zero,
        }
    }
}

/// Controls obtained by running `u = −Kx(t_j)` (held over each interval) on
/// the plant, with `K` the infinite-horizon LQR gain of the linearization at
/// the origin. Controls after a blow-up are zero.
pub fn lqr_initial_guess(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    horizon: HorizonSpec,
) -> Result<ControlTrajectory> {
    check_problem(system, epsilon, x0)?;
    let lin = linearize_at_origin(system);
    let gain = solve_care(&lin.a, &lin.b, &lin.c, epsilon)?.gain;
    let n = system.state_dim();
    let mut rk = Rk4::new(n);
    let mut x = x0.as_slice().to_vec();
    let h = horizon.substep();
    let mut values = Vec::with_capacity(horizon.n_ctrl);
    let mut alive = true;
    for _ in 0..horizon.n_ctrl {
        let u = if alive {
            -(&gain * DVector::from_column_slice(&x))
        } else {
            DVector::zeros(system.input_dim())
        };
        if alive {
            for _ in 0..horizon.n_int {
                rk.step(system, &mut x, u.as_slice(), h);
            }
            alive = x.iter().all(|v| v.is_finite());
        }
        values.push(u);
    }
    Ok(ControlTrajectory { values, horizon })
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub cost: f64,
    pub converged: bool,
    pub status: SolveStatus,
    pub iterations: usize,
    pub grad_norm: f64,
    /// States on the integration grid of the horizon.
    pub state_traj: Vec<DVector<f64>>,
}

fn check_problem(system: &dyn ControlAffineSystem, epsilon: f64, x0: &DVector<f64>) -> Result<()> {
    check_epsilon(epsilon)?;
    check_dim("initial state", system.state_dim(), x0.len())
}

fn check_controls(system: &dyn ControlAffineSystem, ctrl: &ControlTrajectory) -> Result<()> {
    check_dim("control intervals", ctrl.horizon.n_ctrl, ctrl.values.len())?;
    for v in &ctrl.values {
        check_dim("input", system.input_dim(), v.len())?;
    }
    Ok(())
}

/// RK4/Simpson discretisation of `∫₀ᵀ ‖h(x)‖² + ε‖u‖² dt`; this is the exact
/// objective minimised by [`solve_finite_horizon`].
pub fn evaluate_cost(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    ctrl: &ControlTrajectory,
) -> Result<f64> {
    check_problem(system, epsilon, x0)?;
    check_controls(system, ctrl)?;
    Shooting::new(system, epsilon, x0.as_slice().to_vec(), ctrl.horizon).cost(&ctrl.flatten())
}

/// Discretised cost and its adjoint gradient with respect to the control values.
pub fn cost_gradient(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    ctrl: &ControlTrajectory,
) -> Result<(f64, Vec<DVector<f64>>)> {
    check_problem(system, epsilon, x0)?;
    check_controls(system, ctrl)?;
    let q = system.input_dim();
    let (c, g) = Shooting::new(system, epsilon, x0.as_slice().to_vec(), ctrl.horizon)
        .cost_and_gradient(&ctrl.flatten())?;
    Ok((c, g.chunks(q).map(DVector::from_column_slice).collect()))
}

/// Locally optimal piecewise-constant control for the horizon-`T` problem.
///
/// Hitting the iteration cap is not an error: the best iterate is returned
/// with `converged = false` and the status recorded in the report.
pub fn solve_finite_horizon(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    horizon: HorizonSpec,
    opts: &SolveOptions,
) -> Result<(ControlTrajectory, SolveReport)> {
    check_problem(system, epsilon, x0)?;
    let q = system.input_dim();
    let init = match &opts.init {
        Some(c) => {
            if c.horizon != horizon {
                return Err(Error::InvalidConfig(
                    "initial control does not match the horizon".into(),
                ));
            }
            check_controls(system, c)?;
            c.clone()
        }
        None => match opts.fallback_init {
            InitialGuess::Zero => ControlTrajectory::zeros(q, horizon),
            InitialGuess::Lqr => lqr_initial_guess(system, epsilon, x0, horizon)
                .unwrap_or_else(|_| ControlTrajectory::zeros(q, horizon)),
        },
    };
    let problem = Shooting::new(system, epsilon, x0.as_slice().to_vec(), horizon);
    let out = minimize(
        |u| problem.cost_and_gradient(u),
        init.flatten(),
        LbfgsParams {
            tol_grad: opts.tol_grad,
            max_iter: opts.max_iter,
            memory: opts.lbfgs_memory.max(1),
        },
    )?;
    let states = problem.simulate(&out.x)?;
    let n = system.state_dim();
    let report = SolveReport {
        cost: out.f,
        converged: out.status == SolveStatus::Converged,
        status: out.status,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        state_traj: states
            .chunks(n.max(1))
            .map(DVector::from_column_slice)
            .collect(),
    };
    Ok((ControlTrajectory::from_flat(&out.x, q, horizon), report))
}
