use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, check_epsilon};
use crate::linalg::{eigenvalues, max_abs, spectral_norm, symmetrize};
use crate::ocp::{
    riccati_step, solve_finite_horizon, solve_riccati_finite, solve_riccati_terminal, HorizonSpec,
    SolveOptions,
};
use crate::systems::ControlAffineSystem;
use crate::{Error, Result};

/// Value-iteration iterate `V^k(x0)`, with `V¹ ≡ 0` and `V^{k+1} = V_{kΔt}`.
/// `k = 0` is rejected; for `k ≥ 2` this is the horizon-`(k−1)Δt` value.
pub fn vi_value(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    k: usize,
    dt: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_dim("initial state", system.state_dim(), x0.len())?;
    if k == 0 {
        return Err(Error::InvalidHorizon("VI iterates start at k = 1".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidHorizon(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if k == 1 {
        return Ok(0.0);
    }
    let horizon = HorizonSpec::with_defaults((k - 1) as f64 * dt)?;
    let (_, report) = solve_finite_horizon(system, epsilon, x0, horizon, opts)?;
    Ok(report.cost)
}

fn check_abc(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    check_dim("A columns", n, a.ncols())?;
    check_dim("B rows", n, b.nrows())?;
    check_dim("C columns", n, c.ncols())?;
    Ok(())
}

/// Quadratic value-iteration for a linear plant: `k` exact Bellman steps of
/// length `dt` from `V¹ ≡ 0`, returning `P` with `V^{k+1}(x) = xᵀPx`.
///
/// Each step solves the `dt`-horizon LQ problem with terminal weight `P`
/// through the flow of the Hamiltonian matrix
/// `Ĥ = [[A, −BBᵀ/√ε], [−CᵀC/√ε, −Aᵀ]]` acting on `P̂ = P/√ε`, which keeps
/// the blocks balanced for small `ε`.
pub fn vi_recursion_linear(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    dt: f64,
    k: usize,
) -> Result<DMatrix<f64>> {
    check_abc(a, b, c)?;
    check_epsilon(epsilon)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidHorizon(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n = a.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let se = epsilon.sqrt();
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n))
        .copy_from(&(-(b * b.transpose()) / se));
    ham.view_mut((n, 0), (n, n))
        .copy_from(&(-(c.transpose() * c) / se));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let substeps = (spectral_norm(&ham) * dt).ceil().max(1.0) as usize;
    let e = (&ham * (-dt / substeps as f64)).exp();
    let e11 = e.view((0, 0), (n, n)).clone_owned();
    let e12 = e.view((0, n), (n, n)).clone_owned();
    let e21 = e.view((n, 0), (n, n)).clone_owned();
    let e22 = e.view((n, n), (n, n)).clone_owned();
    let mut p_hat = DMatrix::zeros(n, n);
    for _ in 0..k * substeps {
        let x = &e11 + &e12 * &p_hat;
        let lam = &e21 + &e22 * &p_hat;
        let x_inv = x.try_inverse().ok_or(Error::StepTooLarge)?;
        p_hat = symmetrize(&(lam * x_inv));
        if !p_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::StepTooLarge);
        }
    }
    Ok(p_hat * se)
}

/// Largest relative gap between the two feedback-gain schedules on `[0, dt]`:
/// the horizon-`k·dt` Riccati solution versus one Bellman step with terminal
/// weight from [`vi_recursion_linear`] (`k − 1` steps). Both schedules use
/// `n` RK4 steps per `dt`, refined until the step respects [`riccati_step`].
pub fn rhc_vi_gain_agreement(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    dt: f64,
    k: usize,
    n: usize,
) -> Result<f64> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidHorizon("need k ≥ 1 and n ≥ 1".into()));
    }
    let n = n.max((dt / riccati_step(a, b, c, epsilon)).ceil() as usize);
    let rhc = solve_riccati_finite(a, b, c, epsilon, k as f64 * dt, k * n)?;
    let terminal = vi_recursion_linear(a, b, c, epsilon, dt, k - 1)?;
    let vi = solve_riccati_terminal(a, b, c, epsilon, dt, n, &terminal)?;
    // The RHC solution may have refined its grid; compare at shared times.
    let stride = (rhc.times.len() - 1) / (k * n);
    let vi_stride = (vi.times.len() - 1) / n;
    let mut scale: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for i in 0..=n {
        let g_rhc = &rhc.gains[i * stride];
        let g_vi = &vi.gains[i * vi_stride];
        scale = scale.max(max_abs(g_rhc));
        gap = gap.max(max_abs(&(g_rhc - g_vi)));
    }
    Ok(gap / scale.max(1e-300))
}

/// One-interval state-transition matrix of the linear RHC loop: on `[0, dt]`
/// the open-loop optimal control of the horizon-`T` problem coincides with the
/// Riccati feedback, so `x(dt) = Φx(0)` with `Φ̇ = (A − BK(s))Φ`. At least
/// `m` RK4 steps are used.
pub fn linear_rhc_transition(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    horizon: f64,
    dt: f64,
    m: usize,
) -> Result<DMatrix<f64>> {
    check_abc(a, b, c)?;
    check_epsilon(epsilon)?;
    if !(dt > 0.0) || !(horizon >= dt) || m == 0 {
        return Err(Error::InvalidHorizon(format!(
            "need T ≥ dt > 0 and m ≥ 1, got T = {horizon}, dt = {dt}, m = {m}"
        )));
    }
    let nx = a.nrows();
    let step = riccati_step(a, b, c, epsilon);
    let tail = horizon - dt;
    let terminal = if tail > 0.0 {
        let steps = ((tail / step).ceil() as usize).max(1);
        solve_riccati_finite(a, b, c, epsilon, tail, steps)?.p0
    } else {
        DMatrix::zeros(nx, nx)
    };
    let m = m.max((dt / step).ceil() as usize);
    // Gains at the RK4 half-steps need a grid twice as fine.
    let sol = solve_riccati_terminal(a, b, c, epsilon, dt, 2 * m, &terminal)?;
    let stride = (sol.times.len() - 1) / (2 * m);
    let gain = |i: usize| &sol.gains[i * stride];
    let h = dt / m as f64;
    let mut phi = DMatrix::identity(nx, nx);
    for j in 0..m {
        let f = |s: usize, p: &DMatrix<f64>| (a - b * gain(2 * j + s)) * p;
        let k1 = f(0, &phi);
        let k2 = f(1, &(&phi + &k1 * (h / 2.0)));
        let k3 = f(1, &(&phi + &k2 * (h / 2.0)));
        let k4 = f(2, &(&phi + &k3 * h));
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(phi)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::solve_care;
    use crate::systems::{BuiltinSystem, ControlAffineSystem};

    fn linear_nmp() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let lm = BuiltinSystem::LinearNmp.linear_matrices().unwrap();
        (lm.a, lm.b, lm.c)
    }

    #[test]
    fn first_iterate_is_zero_and_second_is_one_step() {
        let (a, b, c) = linear_nmp();
        assert_eq!(
            vi_recursion_linear(&a, &b, &c, 0.1, 0.25, 0).unwrap(),
            DMatrix::zeros(2, 2)
        );
        let p = vi_recursion_linear(&a, &b, &c, 0.1, 0.25, 1).unwrap();
        let dre = solve_riccati_finite(&a, &b, &c, 0.1, 0.25, 2000).unwrap();
        assert!(max_abs(&(p - dre.p0)) < 1e-10);
    }

    #[test]
    fn recursion_matches_riccati_horizon() {
        let (a, b, c) = linear_nmp();
        for &eps in &[1.0, 1e-2] {
            for k in [2usize, 5, 9] {
                let p = vi_recursion_linear(&a, &b, &c, eps, 0.25, k).unwrap();
                let t = k as f64 * 0.25;
                let steps = (t / riccati_step(&a, &b, &c, eps) * 64.0).ceil() as usize;
                let dre = solve_riccati_finite(&a, &b, &c, eps, t, steps).unwrap();
                let err = max_abs(&(&p - &dre.p0));
                assert!(err < 1e-8, "eps={eps} k={k} err={err:e} p={p}");
            }
        }
    }

    #[test]
    fn scalar_recursion_converges_to_care() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let a = DMatrix::zeros(1, 1);
        let p = vi_recursion_linear(&a, &one, &one, 1.0, 0.5, 80).unwrap();
        let care = solve_care(&a, &one, &one, 1.0).unwrap();
        assert!((p[(0, 0)] - care.p[(0, 0)]).abs() < 1e-9);
    }

    #[test]
    fn gain_schedules_agree() {
        let (a, b, c) = linear_nmp();
        for k in [1usize, 4, 8] {
            let gap = rhc_vi_gain_agreement(&a, &b, &c, 1e-2, 0.25, k, 200).unwrap();
            assert!(gap < 1e-6, "k={k} gap={gap}");
        }
    }

    #[test]
    fn vi_value_indexing() {
        let sys = BuiltinSystem::LinearNmp;
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let opts = SolveOptions::default();
        assert!(vi_value(&sys, 1.0, &x0, 0, 0.25, &opts).is_err());
        assert_eq!(vi_value(&sys, 1.0, &x0, 1, 0.25, &opts).unwrap(), 0.0);
        let v = vi_value(&sys, 1.0, &x0, 5, 0.25, &opts).unwrap();
        let (a, b, c) = linear_nmp();
        let p = solve_riccati_finite(&a, &b, &c, 1.0, 1.0, 2000).unwrap().p0;
        let oracle = (x0.transpose() * p * &x0)[(0, 0)];
        assert!((v - oracle).abs() < 0.01 * oracle);
    }

    #[test]
    fn transition_of_short_horizon_nmp_loop_is_unstable() {
        let (a, b, c) = linear_nmp();
        let phi = linear_rhc_transition(&a, &b, &c, 1e-4, 0.25, 0.25, 100).unwrap();
        assert!(spectral_radius(&phi) > 1.0);
        let phi = linear_rhc_transition(&a, &b, &c, 1e-4, 4.0, 0.25, 100).unwrap();
        assert!(spectral_radius(&phi) < 1.0);
    }
}
