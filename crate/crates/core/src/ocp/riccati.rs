//! Riccati oracles for linear plants and the minimum-energy problem of the
//! linear zero dynamics.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, check_epsilon};
use crate::linalg::{
    care_residual, is_hurwitz, max_abs, solve_lyapunov, spectral_abscissa, spectral_norm,
    symmetrize,
};
use crate::{Error, Result};

/// Solution of the differential Riccati equation on `[0, T]`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// `P(0)`; the finite-horizon value is `x₀ᵀP(0)x₀`.
    pub p0: DMatrix<f64>,
    /// Uniform time grid `t_i = i·T/n`.
    pub times: Vec<f64>,
    /// `P(t_i)`.
    pub p: Vec<DMatrix<f64>>,
    /// Feedback gains `K(t_i) = BᵀP(t_i)/ε`, so that `u = −K(t)x`.
    pub gains: Vec<DMatrix<f64>>,
}

fn check_abc(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    check_dim("A columns", n, a.ncols())?;
    check_dim("B rows", n, b.nrows())?;
    check_dim("C columns", n, c.ncols())?;
    Ok(())
}

fn dre_rhs(
    a: &DMatrix<f64>,
    bbt: &DMatrix<f64>,
    ctc: &DMatrix<f64>,
    eps: f64,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    // dP/dτ in reversed time τ = T − t.
    a.transpose() * p + p * a - p * bbt * p / eps + ctc
}

fn integrate_dre(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    eps: f64,
    t: f64,
    n_steps: usize,
    terminal: &DMatrix<f64>,
) -> Option<Vec<DMatrix<f64>>> {
    let bbt = b * b.transpose();
    let ctc = c.transpose() * c;
    let h = t / n_steps as f64;
    let mut p = terminal.clone();
    // Stored in reversed time; index i is τ = i·h.
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(p.clone());
    for _ in 0..n_steps {
        let k1 = dre_rhs(a, &bbt, &ctc, eps, &p);
        let k2 = dre_rhs(a, &bbt, &ctc, eps, &(&p + &k1 * (h / 2.0)));
        let k3 = dre_rhs(a, &bbt, &ctc, eps, &(&p + &k2 * (h / 2.0)));
        let k4 = dre_rhs(a, &bbt, &ctc, eps, &(&p + &k3 * h));
        p = symmetrize(&(&p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        out.push(p.clone());
    }
    Some(out)
}

/// Integrates `−Ṗ = AᵀP + PA − (1/ε)PBBᵀP + CᵀC` backward from `P(T) = P_T`
/// with `n_steps` RK4 steps. The step count is doubled up to three times if
/// the integration overflows.
pub fn solve_riccati_terminal(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    t: f64,
    n_steps: usize,
    terminal: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    check_abc(a, b, c)?;
    check_epsilon(epsilon)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidHorizon(format!(
            "T must be finite and ≥ 0, got {t}"
        )));
    }
    if n_steps == 0 {
        return Err(Error::InvalidHorizon("n_steps must be ≥ 1".into()));
    }
    let mut steps = n_steps;
    for _ in 0..4 {
        if let Some(mut rev) = integrate_dre(a, b, c, epsilon, t, steps, terminal) {
            rev.reverse();
            let times = (0..=steps).map(|i| t * i as f64 / steps as f64).collect();
            let gains = rev.iter().map(|p| b.transpose() * p / epsilon).collect();
            return Ok(RiccatiSolution {
                p0: rev[0].clone(),
                times,
                p: rev,
                gains,
            });
        }
        steps *= 2;
    }
    Err(Error::StepTooLarge)
}

pub fn solve_riccati_finite(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    t: f64,
    n_steps: usize,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    solve_riccati_terminal(a, b, c, epsilon, t, n_steps, &DMatrix::zeros(n, n))
}

/// Step size for which RK4 on the Riccati equation stays well inside its
/// stability region: `1/(‖A‖ + ‖B‖‖C‖/√ε + 1)`.
pub fn riccati_step(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, epsilon: f64) -> f64 {
    1.0 / (spectral_norm(a) + spectral_norm(b) * spectral_norm(c) / epsilon.sqrt() + 1.0)
}

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    /// `K = BᵀP/ε`.
    pub gain: DMatrix<f64>,
    /// Max-abs entry of the CARE residual.
    pub residual: f64,
    pub newton_iterations: usize,
    /// Spectral abscissa of `A − BK`.
    pub closed_loop_abscissa: f64,
}

const CARE_TOL: f64 = 1e-10;
const CARE_ACCEPT: f64 = 1e-9;

/// Newton–Kleinman for `AᵀP + PA − PBBᵀP/ρ + Q = 0`: given a stabilizing
/// gain `K`, solve `(A − BK)ᵀX + X(A − BK) = −(Q + KᵀRK)` and set
/// `K ← R⁻¹BᵀX`, with `R = ρI`.
fn newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    rho: f64,
    mut gain: DMatrix<f64>,
    residual: impl Fn(&DMatrix<f64>) -> f64,
) -> Result<(DMatrix<f64>, usize, f64)> {
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    let mut iters = 0;
    for it in 1..=60 {
        iters = it;
        let acl = a - b * &gain;
        if !is_hurwitz(&acl) {
            return Err(Error::NotStabilizable);
        }
        let rhs = q + gain.transpose() * &gain * rho;
        let x = solve_lyapunov(&acl, &rhs)?;
        gain = b.transpose() * &x / rho;
        let res = residual(&x);
        let improved = best.as_ref().is_none_or(|(_, r)| res < *r);
        if improved {
            best = Some((x, res));
        }
        if res < CARE_TOL || (!improved && it > 5) {
            break;
        }
    }
    let (x, res) = best.expect("at least one Newton step");
    Ok((x, iters, res))
}

/// Stabilizing solution of `AᵀP + PA − (1/ε)PBBᵀP + CᵀC = 0`.
///
/// Initialisation integrates the Riccati equation in reversed time, doubling
/// the horizon until `‖Π(τ) − Π(τ/2)‖ < 1e-6·‖Π(τ)‖` and the induced gain is
/// stabilizing; Newton–Kleinman then polishes the result to a residual below
/// `1e-10`.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
) -> Result<CareSolution> {
    check_abc(a, b, c)?;
    check_epsilon(epsilon)?;
    let n = a.nrows();
    let h = riccati_step(a, b, c, epsilon);
    let bbt = b * b.transpose();
    let ctc = c.transpose() * c;

    let mut p = DMatrix::zeros(n, n);
    let mut tau = 0.0;
    let mut half = p.clone();
    let mut target = 1.0_f64;
    let tau_max = 4096.0;
    let init = loop {
        // Integrate Π from τ = target/2 (stored in `half`) to τ = target.
        let steps = ((target - tau) / h).ceil().max(1.0) as usize;
        let hh = (target - tau) / steps as f64;
        for _ in 0..steps {
            let k1 = dre_rhs(a, &bbt, &ctc, epsilon, &p);
            let k2 = dre_rhs(a, &bbt, &ctc, epsilon, &(&p + &k1 * (hh / 2.0)));
            let k3 = dre_rhs(a, &bbt, &ctc, epsilon, &(&p + &k2 * (hh / 2.0)));
            let k4 = dre_rhs(a, &bbt, &ctc, epsilon, &(&p + &k3 * hh));
            p = symmetrize(&(&p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hh / 6.0)));
            tau += hh;
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NotStabilizable);
        }
        // Relative test: at small ε the slow entries of Π are themselves tiny
        // for short horizons, so an absolute threshold stops too early.
        let settled = max_abs(&(&p - &half)) < 1e-6 * max_abs(&p);
        if settled && is_hurwitz(&(a - &bbt * &p / epsilon)) {
            break p.clone();
        }
        if target >= tau_max {
            break p.clone();
        }
        half = p.clone();
        target *= 2.0;
    };

    let gain0 = b.transpose() * &init / epsilon;
    let resid = |x: &DMatrix<f64>| max_abs(&care_residual(a, b, c, epsilon, x));
    let (p, newton_iterations, residual) = newton_kleinman(a, b, &ctc, epsilon, gain0, resid)?;
    if !(residual < CARE_ACCEPT) {
        return Err(Error::Linalg(format!(
            "CARE residual {residual:.3e} above tolerance"
        )));
    }
    let gain = b.transpose() * &p / epsilon;
    let closed_loop_abscissa = spectral_abscissa(&(a - b * &gain));
    if !(closed_loop_abscissa < 0.0) {
        return Err(Error::NotStabilizable);
    }
    Ok(CareSolution {
        p,
        gain,
        residual,
        newton_iterations,
        closed_loop_abscissa,
    })
}

#[derive(Debug, Clone)]
pub struct MinEnergySolution {
    pub p0: DMatrix<f64>,
    /// `V̂₀(η₀) = η₀ᵀP₀η₀`.
    pub value: f64,
    /// Gain `L` of the minimum-energy output `ξ₁ = μ₀(η) = −Lη`, `L = B₀ᵀP₀`.
    pub feedback_gain: DMatrix<f64>,
    /// Spectral abscissa of `A₀ − B₀L`.
    pub closed_loop_abscissa: f64,
}

/// Minimum-energy value for linear zero dynamics `η̇ = A₀η + B₀ξ₁` with cost
/// `∫‖ξ₁‖²`: the stabilizing solution of `A₀ᵀP + PA₀ − PB₀B₀ᵀP = 0`.
pub fn min_energy_value(
    a0: &DMatrix<f64>,
    b0: &DMatrix<f64>,
    eta0: &DVector<f64>,
) -> Result<MinEnergySolution> {
    let p = a0.nrows();
    check_dim("A0 columns", p, a0.ncols())?;
    check_dim("B0 rows", p, b0.nrows())?;
    check_dim("eta0", p, eta0.len())?;
    let q = b0.ncols();
    if p == 0 || is_hurwitz(a0) {
        let p0 = DMatrix::zeros(p, p);
        return Ok(MinEnergySolution {
            value: 0.0,
            feedback_gain: DMatrix::zeros(q, p),
            closed_loop_abscissa: spectral_abscissa(a0),
            p0,
        });
    }
    // Any stabilizing gain will do to start Newton–Kleinman; take one from a
    // regularised CARE with unit state weight.
    let start = solve_care(a0, b0, &DMatrix::identity(p, p), 1.0)?;
    let zero_q = DMatrix::zeros(p, p);
    let resid =
        |x: &DMatrix<f64>| max_abs(&(a0.transpose() * x + x * a0 - x * b0 * b0.transpose() * x));
    let (p0, _, residual) = newton_kleinman(a0, b0, &zero_q, 1.0, start.gain, resid)?;
    if !(residual < CARE_ACCEPT) {
        return Err(Error::NotStabilizable);
    }
    let feedback_gain = b0.transpose() * &p0;
    let closed_loop_abscissa = spectral_abscissa(&(a0 - b0 * &feedback_gain));
    if !(closed_loop_abscissa < 0.0) {
        return Err(Error::NotStabilizable);
    }
    Ok(MinEnergySolution {
        value: (eta0.transpose() * &p0 * eta0)[(0, 0)],
        p0,
        feedback_gain,
        closed_loop_abscissa,
    })
}
