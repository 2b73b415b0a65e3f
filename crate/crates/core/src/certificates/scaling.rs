//! Log-log fits of the value function against `ε̃` at fixed fast-slow states.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{finite_horizon_value, DEFAULT_T_PROXY};
use crate::ocp::{solve_care, HorizonSpec, InitialGuess, SolveOptions};
use crate::systems::{ControlAffineSystem, NormalFormModel};
use crate::transforms::scaling_matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScalingMode {
    /// `V_∞`: the algebraic Riccati solution for linear plants, the
    /// horizon-20 value otherwise.
    Infinite,
    Finite {
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFit {
    /// Fast-slow state `z = (ξ̃, η)`, held fixed across the grid.
    pub z: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `log V` against `log ε̃`.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub mode: ScalingMode,
    pub epsilon_tilde: Vec<f64>,
    pub fits: Vec<StateFit>,
    /// Smallest `K̂` with `V ≤ K̂(ε̃‖ξ̃‖² + ε̃^{2r}‖η‖²)` on every sample.
    pub k_hat: f64,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Evaluates `V(x(z))` with `ε = ε̃^{2r}` over the grid for each fast-slow
/// state `z`; by cost invariance this is the rescaled value `Ṽ(ξ̃, η)`.
pub fn verify_performance_scaling(
    system: &dyn ControlAffineSystem,
    model: &dyn NormalFormModel,
    epsilon_tilde_grid: &[f64],
    states: &[DVector<f64>],
    mode: ScalingMode,
) -> Result<ScalingReport> {
    if epsilon_tilde_grid.len() < 2 {
        return Err(Error::InvalidConfig("need at least two grid points".into()));
    }
    if epsilon_tilde_grid.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(Error::InvalidConfig(
            "epsilon_tilde grid must lie in (0, 1]".into(),
        ));
    }
    if states.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (r, q) = (model.relative_degree(), model.input_dim());
    let nx = model.xi_dim();
    let linear = system.linear_matrices();
    let opts = SolveOptions {
        fallback_init: InitialGuess::Lqr,
        ..SolveOptions::default()
    };
    let logs: Vec<f64> = epsilon_tilde_grid.iter().map(|e| e.ln()).collect();
    let mut fits = Vec::with_capacity(states.len());
    let mut k_hat: f64 = 0.0;
    for (i, z) in states.iter().enumerate() {
        if z.len() != model.state_dim() || z.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidConfig(format!(
                "state {i} must be nonzero of dimension {}",
                model.state_dim()
            )));
        }
        let xi_t = z.rows(0, nx).clone_owned();
        let eta = z.rows(nx, z.len() - nx).clone_owned();
        let mut values = Vec::with_capacity(epsilon_tilde_grid.len());
        for (j, &et) in epsilon_tilde_grid.iter().enumerate() {
            let eps = et.powi(2 * r as i32);
            let s = scaling_matrix(et, r, q)?;
            let x = model.from_normal(&s.apply_inverse(&xi_t), &eta);
            let v = match (mode, &linear) {
                (ScalingMode::Infinite, Some(lm)) => {
                    let p = solve_care(&lm.a, &lm.b, &lm.c, eps)?.p;
                    x.dot(&(p * &x))
                }
                (ScalingMode::Infinite, None) => {
                    HorizonSpec::with_defaults(DEFAULT_T_PROXY)
                        .and_then(|hz| finite_horizon_value(system, eps, &x, hz, &opts))
                }
                .map_err(|e| Error::SolverFailure {
                    step: j,
                    source: Box::new(e),
                })?,
                (ScalingMode::Finite { t }, _) => HorizonSpec::with_defaults(t)
                    .and_then(|hz| finite_horizon_value(system, eps, &x, hz, &opts))
                    .map_err(|e| Error::SolverFailure {
                        step: j,
                        source: Box::new(e),
                    })?,
            };
            let bound = et * xi_t.norm_squared() + et.powi(2 * r as i32) * eta.norm_squared();
            k_hat = k_hat.max(v / bound);
            values.push(v);
        }
        let lv: Vec<f64> = values
            .iter()
            .map(|v| v.max(f64::MIN_POSITIVE).ln())
            .collect();
        fits.push(StateFit {
            z: z.iter().copied().collect(),
            slope: slope(&logs, &lv),
            values,
        });
    }
    Ok(ScalingReport {
        mode,
        epsilon_tilde: epsilon_tilde_grid.to_vec(),
        fits,
        k_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::min_energy_value;
    use crate::systems::BuiltinSystem;

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [1.0f64, 0.5, 0.1].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = [1.0f64, 0.5, 0.1]
            .iter()
            .map(|x| (3.0 * x.powi(2)).ln())
            .collect();
        assert!((slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nmp_value_plateaus_at_minimum_energy() {
        let sys = BuiltinSystem::LinearNmp;
        let model = sys.normal_form();
        let grid = [1e-1, 1e-2, 1e-3, 1e-4];
        let z = DVector::from_vec(vec![0.0, 1.0]);
        let rep =
            verify_performance_scaling(&sys, &model, &grid, &[z], ScalingMode::Infinite).unwrap();
        // Zero dynamics η̇ = η + ξ₁ after the normal-form change of variables.
        let a0 = crate::systems::zero_dynamics_jacobian(&model);
        let b0 = model.g0(&DVector::zeros(1));
        let v0 = min_energy_value(&a0, &b0, &DVector::from_element(1, 1.0))
            .unwrap()
            .value;
        let min = rep.fits[0]
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.95 * v0, "{min} vs {v0}");
        assert!(rep.fits[0].slope.abs() < 0.2);
    }

    #[test]
    fn rejects_bad_grids() {
        let sys = BuiltinSystem::LinearNmp;
        let model = sys.normal_form();
        let z = DVector::from_vec(vec![1.0, 0.0]);
        for grid in [&[0.5][..], &[0.5, 2.0][..], &[0.0, 0.5][..]] {
            assert!(verify_performance_scaling(
                &sys,
                &model,
                grid,
                std::slice::from_ref(&z),
                ScalingMode::Infinite
            )
            .is_err());
        }
    }
}
