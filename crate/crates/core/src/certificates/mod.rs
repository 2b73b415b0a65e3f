//! Detectability certificates, the sampled-data horizon bound and
//! performance-scaling fits.
//!
//! Throughout, `σ(x) = ‖x‖²`. Certificate constants are stated in fast-slow
//! coordinates `z = (ξ̃, η)`; [`fast_slow_state`] maps plant states there.

mod decay;
mod detectability;
mod scaling;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use decay::{check_composite_decay, DecayReport};
pub use detectability::{
    build_w_linear, build_w_linear_with, pole_placement_injection, CertificateOptions,
    CertificateReport, DetectabilityCertificate,
};
pub use scaling::{verify_performance_scaling, ScalingMode, ScalingReport, StateFit};

use crate::ocp::{solve_finite_horizon, HorizonSpec, InitialGuess, SolveOptions};
use crate::rhc_vi::vi_recursion_linear;
use crate::systems::{ControlAffineSystem, NormalFormModel};
use crate::transforms::scaling_matrix;
use crate::{Error, Result};

/// Default horizon of the finite-horizon proxy for `V_∞`.
pub const DEFAULT_T_PROXY: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonBound {
    pub alpha_v: f64,
    pub alpha_w_hi: f64,
    pub alpha_w_lo: f64,
    pub k_w: f64,
    pub dt: f64,
    /// `M(Δt) = exp(−K_W α̲_W Δt / (ᾱ_V + ᾱ_W))`.
    pub m_dt: f64,
    /// Horizons `T > T*` are certified.
    pub t_star: f64,
}

/// `M(Δt)` and `T* = ᾱ_V(ᾱ_V + ᾱ_W) / (K_W α̲_W (1 − M(Δt)))`.
pub fn horizon_bound(
    alpha_v: f64,
    alpha_w_hi: f64,
    alpha_w_lo: f64,
    k_w: f64,
    dt: f64,
) -> Result<HorizonBound> {
    for (name, v) in [
        ("alpha_v", alpha_v),
        ("alpha_w_hi", alpha_w_hi),
        ("alpha_w_lo", alpha_w_lo),
        ("k_w", k_w),
        ("dt", dt),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::DegenerateConstants(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    let rate = k_w * alpha_w_lo * dt / (alpha_v + alpha_w_hi);
    let m_dt = (-rate).exp();
    // 1 − M computed without cancellation.
    let one_minus_m = -(-rate).exp_m1();
    if !(m_dt < 1.0) || !(one_minus_m > 0.0) {
        return Err(Error::DegenerateConstants(format!(
            "M(dt) = {m_dt} is not below 1"
        )));
    }
    let t_star = alpha_v * (alpha_v + alpha_w_hi) / (k_w * alpha_w_lo * one_minus_m);
    Ok(HorizonBound {
        alpha_v,
        alpha_w_hi,
        alpha_w_lo,
        k_w,
        dt,
        m_dt,
        t_star,
    })
}

/// `z = (S(ε̃)ξ, η)` for a plant state `x`.
pub fn fast_slow_state(
    model: &dyn NormalFormModel,
    epsilon_tilde: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (xi, eta) = model.to_normal(x);
    let s = scaling_matrix(epsilon_tilde, model.relative_degree(), model.input_dim())?;
    let xi_t = s.apply(&xi);
    Ok(DVector::from_iterator(
        xi_t.len() + eta.len(),
        xi_t.iter().chain(eta.iter()).copied(),
    ))
}

/// Horizon-`T` value matrix of a linear plant, `V_T(x) = xᵀPx`.
pub fn linear_value_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    t: f64,
) -> Result<DMatrix<f64>> {
    vi_recursion_linear(a, b, c, epsilon, t, 1)
}

/// Horizon-`T` value: exact quadratic form for linear plants, direct
/// shooting on the grid `horizon` otherwise.
pub fn finite_horizon_value(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    x0: &DVector<f64>,
    horizon: HorizonSpec,
    opts: &SolveOptions,
) -> Result<f64> {
    if let Some(lm) = system.linear_matrices() {
        let p = linear_value_matrix(&lm.a, &lm.b, &lm.c, epsilon, horizon.t)?;
        return Ok(x0.dot(&(p * x0)));
    }
    let (_, report) = solve_finite_horizon(system, epsilon, x0, horizon, opts)?;
    Ok(report.cost)
}

/// Sample estimate of `ᾱ_V = sup V_∞(x)/‖x‖²` using the horizon-`t_proxy`
/// value as a stand-in for `V_∞`. Being a maximum over finitely many samples
/// of a finite-horizon value, it is an estimate from below, not a bound.
pub fn estimate_alpha_v(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    samples: &[DVector<f64>],
    t_proxy: f64,
) -> Result<f64> {
    let horizon = HorizonSpec::with_defaults(t_proxy)?;
    estimate_alpha_v_with(system, epsilon, samples, horizon, &|x| x.norm_squared())
}

/// As [`estimate_alpha_v`] on a caller-chosen proxy grid and with a
/// caller-supplied `σ`, e.g. `‖z(x)‖²` in fast-slow coordinates. Samples with
/// `σ(x) = 0` are skipped.
pub fn estimate_alpha_v_with(
    system: &dyn ControlAffineSystem,
    epsilon: f64,
    samples: &[DVector<f64>],
    horizon: HorizonSpec,
    sigma: &dyn Fn(&DVector<f64>) -> f64,
) -> Result<f64> {
    let opts = SolveOptions {
        fallback_init: InitialGuess::Lqr,
        ..SolveOptions::default()
    };
    let mut best: Option<f64> = None;
    for (i, x) in samples.iter().enumerate() {
        let s = sigma(x);
        if !(s > 0.0) {
            continue;
        }
        let v = finite_horizon_value(system, epsilon, x, horizon, &opts).map_err(|e| {
            Error::SolverFailure {
                step: i,
                source: Box::new(e),
            }
        })?;
        let ratio = v / s;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(Error::EmptySamples)
}

/// A detectability certificate, the sampled `ᾱ_V` and the resulting bound
/// for one `(ε, Δt)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledHorizonCertificate {
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    pub certificate: CertificateReport,
    pub bound: HorizonBound,
}

/// Builds `W` at `ε̃ = ε^{1/(2r)}`, estimates `ᾱ_V` against `σ = ‖z‖²` from
/// `n_alpha` points of the certificate's sampling box in fast-slow
/// coordinates, and evaluates the bound at `dt`.
pub fn certify_horizon(
    system: &dyn ControlAffineSystem,
    model: &dyn NormalFormModel,
    epsilon: f64,
    dt: f64,
    proxy: HorizonSpec,
    n_alpha: usize,
    opts: &CertificateOptions,
) -> Result<SampledHorizonCertificate> {
    let r = model.relative_degree();
    let et = crate::transforms::CheapControlWeights::from_epsilon(epsilon, r)?.epsilon_tilde;
    let cert = build_w_linear_with(model, et, opts)?;
    let s = scaling_matrix(et, r, model.input_dim())?;
    let nx = model.xi_dim();
    let mut sampler = crate::sampling::BoxSampler::new(opts.seed ^ 0x5eed_a1fa, opts.half_width);
    let samples: Vec<DVector<f64>> = (0..n_alpha)
        .map(|_| {
            let z = sampler.sample_nonzero(model.state_dim());
            let xi = s.apply_inverse(&z.rows(0, nx).clone_owned());
            model.from_normal(&xi, &z.rows(nx, z.len() - nx).clone_owned())
        })
        .collect();
    let sigma = |x: &DVector<f64>| fast_slow_state(model, et, x).map_or(0.0, |z| z.norm_squared());
    let alpha_v = estimate_alpha_v_with(system, epsilon, &samples, proxy, &sigma)?;
    let bound = horizon_bound(alpha_v, cert.alpha_w_hi, cert.alpha_w_lo, cert.k_w, dt)?;
    Ok(SampledHorizonCertificate {
        epsilon,
        epsilon_tilde: et,
        certificate: cert.report(),
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{BuiltinSystem, FlexOutput, LinearSystem};
    use proptest::prelude::*;

    #[test]
    fn unit_constants() {
        let hb = horizon_bound(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((hb.m_dt - (-0.5f64).exp()).abs() < 1e-15);
        assert!((hb.m_dt - 0.60653).abs() < 1e-5);
        let exact = 2.0 / (1.0 - (-0.5f64).exp());
        assert!((hb.t_star - exact).abs() < 1e-12);
        // 2/(1 − e^{−1/2}) = 5.08299…
        assert!((hb.t_star - 5.0831).abs() < 2e-4);
    }

    #[test]
    fn tiny_sampling_interval_pushes_threshold_out() {
        let hb = horizon_bound(1.0, 1.0, 1.0, 1.0, 1e-9).unwrap();
        assert!(hb.t_star > 1e6);
        assert!(hb.m_dt < 1.0);
    }

    #[test]
    fn degenerate_constants_are_rejected() {
        assert!(matches!(
            horizon_bound(0.0, 1.0, 1.0, 1.0, 1.0),
            Err(Error::DegenerateConstants(_))
        ));
        assert!(matches!(
            horizon_bound(1.0, 1.0, 1.0, 1.0, 1e-300),
            Err(Error::DegenerateConstants(_))
        ));
    }

    proptest! {
        #[test]
        fn threshold_monotonicity(
            av in 0.01f64..10.0, awh in 0.01f64..10.0, ratio in 0.05f64..1.0,
            kw in 0.01f64..10.0, dt in 0.01f64..2.0, f in 1.1f64..3.0,
        ) {
            let awl = ratio * awh;
            let t = |av, awh, awl, kw, dt| horizon_bound(av, awh, awl, kw, dt).unwrap().t_star;
            let base = t(av, awh, awl, kw, dt);
            prop_assert!(t(av, awh, awl, kw * f, dt) < base);
            prop_assert!(t(av, awh, (awl * f).min(awh), kw, dt) <= base);
            prop_assert!(t(av, awh, awl * 0.5, kw, dt) > base);
            prop_assert!(t(av, awh, awl, kw, dt * f) < base);
            prop_assert!(t(av * f, awh, awl, kw, dt) > base);
            prop_assert!(t(av * 0.5, awh, awl, kw, dt) < base);
            prop_assert!(t(av, awh * f, awl, kw, dt) > base);
        }
    }

    fn scalar_integrator() -> LinearSystem {
        let one = DMatrix::from_element(1, 1, 1.0);
        LinearSystem::new(DMatrix::zeros(1, 1), one.clone(), one).unwrap()
    }

    #[test]
    fn alpha_v_of_scalar_integrator() {
        let sys = scalar_integrator();
        let samples = vec![DVector::zeros(1), DVector::from_element(1, 10.0)];
        let est = estimate_alpha_v(&sys, 1.0, &samples, DEFAULT_T_PROXY).unwrap();
        // tanh(20) = 1 to double precision.
        assert!((est - 1.0).abs() < 1e-9);
        assert!(matches!(
            estimate_alpha_v(&sys, 1.0, &[], DEFAULT_T_PROXY),
            Err(Error::EmptySamples)
        ));
        assert!(matches!(
            estimate_alpha_v(&sys, 1.0, &[DVector::zeros(1)], DEFAULT_T_PROXY),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn cheaper_control_lowers_alpha_v_on_minimum_phase_plant() {
        let sys = BuiltinSystem::flexible_link(FlexOutput::Theta1, true);
        let lin = crate::systems::linearize_at_origin(&sys);
        let lsys = LinearSystem::new(lin.a, lin.b, lin.c).unwrap();
        let samples: Vec<_> = (0..4)
            .map(|i| DVector::from_fn(4, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let hi = estimate_alpha_v(&lsys, 1.0, &samples, DEFAULT_T_PROXY).unwrap();
        let lo = estimate_alpha_v(&lsys, 1e-4, &samples, DEFAULT_T_PROXY).unwrap();
        assert!(lo < hi, "{lo} vs {hi}");
    }

    #[test]
    fn value_matrix_matches_riccati() {
        let lm = BuiltinSystem::LinearNmp.linear_matrices().unwrap();
        let p = linear_value_matrix(&lm.a, &lm.b, &lm.c, 1e-2, 2.0).unwrap();
        let dre = crate::ocp::solve_riccati_finite(&lm.a, &lm.b, &lm.c, 1e-2, 2.0, 20000).unwrap();
        assert!(crate::linalg::max_abs(&(p - dre.p0)) < 1e-9);
    }

    #[test]
    fn fast_slow_state_scales_xi() {
        let model = BuiltinSystem::Pendulum.normal_form();
        let z = fast_slow_state(&model, 0.1, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn certified_horizon_on_pendulum() {
        let sys = BuiltinSystem::Pendulum;
        let model = sys.normal_form();
        let hz = HorizonSpec::new(20.0, 10_000, 10).unwrap();
        let opts = CertificateOptions::default();
        let c = certify_horizon(&sys, &model, 1e-10, 20.0, hz, 8, &opts).unwrap();
        assert!((c.epsilon_tilde - 10f64.powf(-2.5)).abs() < 1e-15);
        assert!(
            c.bound.t_star > 0.0 && c.bound.t_star < 20.0,
            "{}",
            c.bound.t_star
        );
        let nmp = BuiltinSystem::LinearNmp;
        assert!(matches!(
            certify_horizon(&nmp, &nmp.normal_form(), 1e-4, 1.0, hz, 8, &opts),
            Err(Error::NotMinimumPhase)
        ));
    }
}
