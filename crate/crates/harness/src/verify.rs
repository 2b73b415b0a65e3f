//! Invariant suites behind `cheapctl verify` and the acceptance tests.
//!
//! Each suite recomputes its quantity from the library and compares it with
//! an independent reference (Riccati integration, closed forms, finite
//! differences). Tolerances are pinned as constants.

use std::time::Instant;

use cheapctl_core::certificates::{verify_performance_scaling, ScalingMode};
use cheapctl_core::ocp::{
    cost_gradient, evaluate_cost, min_energy_value, riccati_step, solve_care, solve_finite_horizon,
    solve_riccati_finite, ControlTrajectory, HorizonSpec, SolveOptions,
};
use cheapctl_core::rhc_vi::vi_recursion_linear;
use cheapctl_core::sampling::BoxSampler;
use cheapctl_core::systems::{
    zero_dynamics_jacobian, BuiltinSystem, ControlAffineSystem, FlexOutput, NormalFormModel,
};
use cheapctl_core::transforms::{check_cost_invariance, check_fast_slow_dynamics};
use nalgebra::DVector;
use serde::Serialize;

use crate::Result;

pub const ORACLE_REL_TOL: f64 = 0.01;
pub const ORACLE_TIME_LIMIT_S: f64 = 30.0;
pub const VI_TOL: f64 = 1e-8;
pub const VI_MAX_K: usize = 16;
pub const VI_DT: f64 = 0.25;
pub const CHEAP_LIMIT_GAP: f64 = 0.05;
pub const SLOPE_OUTPUT: f64 = 1.0;
pub const SLOPE_OUTPUT_TOL: f64 = 0.15;
pub const SLOPE_ETA_TOL: f64 = 0.5;
pub const SCALING_TIME_LIMIT_S: f64 = 300.0;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const COST_INVARIANCE_TOL: f64 = 1e-12;
pub const FAST_SLOW_TOL: f64 = 1e-4;

/// DRE oracle refinement relative to the RK4 stability step.
const DRE_REFINEMENT: f64 = 64.0;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn x(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// DRE value matrix at horizon `t`, integrated with steps `DRE_REFINEMENT`
/// times finer than the RK4 stability step.
pub fn dre_value(
    lm: &cheapctl_core::systems::LinearMatrices,
    epsilon: f64,
    t: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let h = riccati_step(&lm.a, &lm.b, &lm.c, epsilon) / DRE_REFINEMENT;
    let steps = ((t / h).ceil() as usize).max(1);
    Ok(solve_riccati_finite(&lm.a, &lm.b, &lm.c, epsilon, t, steps)?.p0)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCell {
    pub epsilon: f64,
    pub horizon: f64,
    pub shooting: f64,
    pub riccati: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub cells: Vec<OracleCell>,
    pub max_rel_err: f64,
    pub seconds: f64,
}

/// Control interval resolving the fast scale `√ε` of the first-order plant.
pub fn oracle_ctrl_step(epsilon: f64) -> f64 {
    (0.25 * epsilon.sqrt()).min(0.01)
}

/// Direct shooting against `x₀ᵀP(0)x₀` from the DRE on LinearNMP over
/// `ε ∈ {1, …, 1e-4}` × `T ∈ {0.5, 2}` from `x₀ = (1, 1)`.
pub fn oracle_agreement() -> Result<OracleReport> {
    let start = Instant::now();
    let sys = BuiltinSystem::LinearNmp;
    let lm = sys.linear_matrices().expect("linear plant");
    let x0 = x(&[1.0, 1.0]);
    let mut cells = Vec::new();
    for eps in [1.0, 1e-1, 1e-2, 1e-3, 1e-4] {
        for t in [0.5, 2.0] {
            let n_ctrl = (t / oracle_ctrl_step(eps)).ceil() as usize;
            let hz = HorizonSpec::new(t, n_ctrl, cheapctl_core::ocp::DEFAULT_N_INT)?;
            let (_, rep) = solve_finite_horizon(&sys, eps, &x0, hz, &SolveOptions::default())?;
            let p = dre_value(&lm, eps, t)?;
            let v = x0.dot(&(p * &x0));
            cells.push(OracleCell {
                epsilon: eps,
                horizon: t,
                shooting: rep.cost,
                riccati: v,
                rel_err: (rep.cost - v).abs() / v,
            });
        }
    }
    let max_rel_err = cells.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    Ok(OracleReport {
        cells,
        max_rel_err,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn oracle_check() -> Result<CheckOutcome> {
    let r = oracle_agreement()?;
    Ok(CheckOutcome {
        name: "oracle agreement (shooting vs Riccati)".into(),
        passed: r.max_rel_err < ORACLE_REL_TOL && r.seconds < ORACLE_TIME_LIMIT_S,
        detail: format!(
            "{} cells, max rel err {:.2e} (< {ORACLE_REL_TOL:e}), {:.1} s (< {ORACLE_TIME_LIMIT_S} s)",
            r.cells.len(),
            r.max_rel_err,
            r.seconds
        ),
    })
}

/// Largest entrywise gap between `k` VI steps and the DRE at `T = kΔt`,
/// over `k = 1..=k_max`.
pub fn vi_identity_error(epsilon: f64, dt: f64, k_max: usize) -> Result<f64> {
    let lm = BuiltinSystem::LinearNmp
        .linear_matrices()
        .expect("linear plant");
    let mut worst: f64 = 0.0;
    for k in 1..=k_max {
        let p_vi = vi_recursion_linear(&lm.a, &lm.b, &lm.c, epsilon, dt, k)?;
        let p_dre = dre_value(&lm, epsilon, k as f64 * dt)?;
        worst = worst.max((p_vi - p_dre).amax());
    }
    Ok(worst)
}

pub fn vi_identity_check() -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    let eps_list = [1.0, 1e-2, 1e-4];
    for eps in eps_list {
        worst = worst.max(vi_identity_error(eps, VI_DT, VI_MAX_K)?);
    }
    Ok(CheckOutcome {
        name: "VI recursion vs DRE".into(),
        passed: worst < VI_TOL,
        detail: format!(
            "LinearNMP, eps in {eps_list:?}, dt = {VI_DT}, k <= {VI_MAX_K}: max |P_VI - P_DRE| = {worst:.2e} (< {VI_TOL:e})"
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheapLimitReport {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub v0: f64,
    pub final_gap: f64,
}

/// `V_∞^ε((0, 1))` from the CARE on LinearNMP against the minimum-energy value.
pub fn cheap_control_limit() -> Result<CheapLimitReport> {
    let sys = BuiltinSystem::LinearNmp;
    let lm = sys.linear_matrices().expect("linear plant");
    let model = sys.normal_form();
    let a0 = zero_dynamics_jacobian(&model);
    let b0 = model.g0(&DVector::zeros(model.eta_dim()));
    let eta0 = x(&[1.0]);
    let v0 = min_energy_value(&a0, &b0, &eta0)?.value;
    let x0 = model.from_normal(&x(&[0.0]), &eta0);
    let epsilons: Vec<f64> = (2..=8).map(|k| 10f64.powi(-k)).collect();
    let values = epsilons
        .iter()
        .map(|&e| Ok(x0.dot(&(solve_care(&lm.a, &lm.b, &lm.c, e)?.p * &x0))))
        .collect::<Result<Vec<f64>>>()?;
    let final_gap = (values.last().expect("nonempty") - v0).abs() / v0;
    Ok(CheapLimitReport {
        epsilons,
        values,
        v0,
        final_gap,
    })
}

pub fn cheap_limit_check() -> Result<CheckOutcome> {
    let r = cheap_control_limit()?;
    Ok(CheckOutcome {
        name: "cheap-control limit on LinearNMP".into(),
        passed: r.final_gap < CHEAP_LIMIT_GAP,
        detail: format!(
            "V_inf((0,1)) at eps = 1e-8 is {:.5}, minimum-energy value {:.5}, gap {:.2e} (< {CHEAP_LIMIT_GAP})",
            r.values.last().expect("nonempty"),
            r.v0,
            r.final_gap
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSummary {
    pub output_slopes: Vec<f64>,
    pub eta_slopes: Vec<f64>,
    pub eta_target: f64,
    pub seconds: f64,
}

/// Log-log slopes of `V_∞` in `ε̃`: pure-output states on the pendulum and
/// pure-η states on the damped flexible link with output `θ₃`.
pub fn scaling_exponents() -> Result<ScalingSummary> {
    let start = Instant::now();
    let pend = BuiltinSystem::Pendulum;
    let out = verify_performance_scaling(
        &pend,
        &pend.normal_form(),
        &[0.3, 0.1, 0.03],
        &[x(&[1.0, 0.0]), x(&[0.0, 1.0])],
        ScalingMode::Infinite,
    )?;
    let flex = BuiltinSystem::flexible_link(FlexOutput::Theta3, true);
    let model = flex.normal_form();
    let eta = verify_performance_scaling(
        &flex,
        &model,
        &[0.3, 0.2, 0.1],
        &[x(&[0.0, 0.0, 1.0, 0.0]), x(&[0.0, 0.0, 0.0, 1.0])],
        ScalingMode::Infinite,
    )?;
    Ok(ScalingSummary {
        output_slopes: out.fits.iter().map(|f| f.slope).collect(),
        eta_slopes: eta.fits.iter().map(|f| f.slope).collect(),
        eta_target: 2.0 * model.relative_degree() as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn scaling_check() -> Result<CheckOutcome> {
    let s = scaling_exponents()?;
    let ok_out = s
        .output_slopes
        .iter()
        .all(|v| (v - SLOPE_OUTPUT).abs() <= SLOPE_OUTPUT_TOL);
    let ok_eta = s
        .eta_slopes
        .iter()
        .all(|v| (v - s.eta_target).abs() <= SLOPE_ETA_TOL);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|s| format!("{s:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(CheckOutcome {
        name: "value scaling exponents".into(),
        passed: ok_out && ok_eta && s.seconds < SCALING_TIME_LIMIT_S,
        detail: format!(
            "pure-output slopes [{}] (1 +/- {SLOPE_OUTPUT_TOL}), pure-eta slopes [{}] ({} +/- {SLOPE_ETA_TOL}), {:.1} s (< {SCALING_TIME_LIMIT_S} s)",
            fmt(&s.output_slopes),
            fmt(&s.eta_slopes),
            s.eta_target,
            s.seconds
        ),
    })
}

/// Worst `‖g_fd − g_adj‖₂ / ‖g_adj‖₂` over `n_iterates` random control
/// sequences on LinearNMP and the damped flexible link with output `θ₁`.
pub fn gradient_error(n_iterates: usize, seed: u64) -> Result<f64> {
    let plants = [
        (BuiltinSystem::LinearNmp, x(&[1.0, -0.5]), 0.1),
        (
            BuiltinSystem::flexible_link(FlexOutput::Theta1, true),
            x(&[0.5, 0.1, 0.5, -0.2]),
            1e-2,
        ),
    ];
    let mut sampler = BoxSampler::new(seed, 1.0);
    let hz = HorizonSpec::new(0.5, 10, 4)?;
    let mut worst: f64 = 0.0;
    for (sys, x0, eps) in plants {
        for _ in 0..n_iterates {
            let mut ctrl = ControlTrajectory::zeros(sys.input_dim(), hz);
            for v in ctrl.values.iter_mut() {
                *v = sampler.sample(sys.input_dim());
            }
            let (_, g) = cost_gradient(&sys, eps, &x0, &ctrl)?;
            let step = 1e-6;
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..hz.n_ctrl {
                for i in 0..sys.input_dim() {
                    let mut p = ctrl.clone();
                    p.values[j][i] += step;
                    let mut m = ctrl.clone();
                    m.values[j][i] -= step;
                    let fd = (evaluate_cost(&sys, eps, &x0, &p)?
                        - evaluate_cost(&sys, eps, &x0, &m)?)
                        / (2.0 * step);
                    num += (fd - g[j][i]).powi(2);
                    den += g[j][i].powi(2);
                }
            }
            worst = worst.max(num.sqrt() / den.sqrt().max(1e-300));
        }
    }
    Ok(worst)
}

pub fn gradient_check(seed: u64) -> Result<CheckOutcome> {
    let worst = gradient_error(5, seed)?;
    Ok(CheckOutcome {
        name: "adjoint gradient vs central differences".into(),
        passed: worst < GRADIENT_REL_TOL,
        detail: format!("2 plants x 5 iterates, max rel err {worst:.2e} (< {GRADIENT_REL_TOL:e})"),
    })
}

fn all_builtins() -> Vec<BuiltinSystem> {
    vec![
        BuiltinSystem::LinearNmp,
        BuiltinSystem::LinearNmpUnstable,
        BuiltinSystem::Pendulum,
        BuiltinSystem::flexible_link(FlexOutput::Theta1, false),
        BuiltinSystem::flexible_link(FlexOutput::Theta1, true),
        BuiltinSystem::flexible_link(FlexOutput::Theta3, false),
        BuiltinSystem::flexible_link(FlexOutput::Theta3, true),
    ]
}

/// Worst cost-invariance gap and fast-slow residual over every builtin and
/// `ε̃ ∈ {0.5, 0.1}`.
pub fn transform_residuals(n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut cost: f64 = 0.0;
    let mut dyn_res: f64 = 0.0;
    for sys in all_builtins() {
        let model = sys.normal_form();
        for et in [0.5, 0.1] {
            cost = cost.max(check_cost_invariance(&model, et, n_samples, seed)?);
            dyn_res = dyn_res.max(check_fast_slow_dynamics(&model, et, n_samples, seed)?);
        }
    }
    Ok((cost, dyn_res))
}

pub fn transforms_check(seed: u64) -> Result<CheckOutcome> {
    let (cost, dyn_res) = transform_residuals(100, seed)?;
    Ok(CheckOutcome {
        name: "transform identities".into(),
        passed: cost < COST_INVARIANCE_TOL && dyn_res < FAST_SLOW_TOL,
        detail: format!(
            "100 samples per builtin: cost invariance {cost:.2e} (< {COST_INVARIANCE_TOL:e}), fast-slow residual {dyn_res:.2e} (< {FAST_SLOW_TOL:e})"
        ),
    })
}

/// Every suite run by `cheapctl verify`.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        transforms_check(seed)?,
        oracle_check()?,
        vi_identity_check()?,
        cheap_limit_check()?,
        gradient_check(seed)?,
        scaling_check()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_energy_value_is_two_percent() {
        let r = cheap_control_limit().unwrap();
        // η̇ = η − 10ξ: V̂₀(η) = 2aη²/b² = 0.02η².
        assert!((r.v0 - 0.02).abs() < 1e-12);
        assert!(r
            .values
            .windows(2)
            .all(|w| (w[1] - r.v0).abs() <= (w[0] - r.v0).abs()));
    }

    #[test]
    fn vi_identity_small_k() {
        assert!(vi_identity_error(1e-2, 0.25, 4).unwrap() < VI_TOL);
    }

    #[test]
    fn oracle_step_resolves_fast_scale() {
        assert_eq!(oracle_ctrl_step(1.0), 0.01);
        assert!((oracle_ctrl_step(1e-4) - 2.5e-3).abs() < 1e-15);
    }
}
