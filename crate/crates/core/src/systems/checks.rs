//! Numerical guards for the analytically supplied normal forms.

use nalgebra::DVector;

use super::{
    eval_drift, eval_dynamics, eval_input_matrix, eval_output, ControlAffineSystem, NormalFormModel,
};
use crate::linalg::{min_singular_value, spectral_norm};
use crate::sampling::BoxSampler;
use crate::{Error, Result};

/// Sampling half-width used by every consistency and growth check.
pub const SAMPLE_BOX: f64 = 2.0;
const CONSISTENCY_THRESHOLD: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub max_residual: f64,
    pub n_samples: usize,
}

/// Checks `f(0) = 0` and `h(0) = 0`.
pub fn check_equilibrium(system: &dyn ControlAffineSystem) -> Result<()> {
    let zero = DVector::zeros(system.state_dim());
    let f0 = eval_drift(system, &zero).amax();
    let h0 = eval_output(system, &zero)?.amax();
    if f0 > 1e-12 || h0 > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "origin is not an equilibrium with zero output (|f(0)| = {f0:.2e}, |h(0)| = {h0:.2e})"
        )));
    }
    Ok(())
}

/// Differentiates `x ↦ (ξ, η)` along the plant vector field and compares with
/// the strict-feedback right-hand side at random `(x, u)` in the sampling box.
pub fn check_normal_form_consistency(
    system: &dyn ControlAffineSystem,
    model: &dyn NormalFormModel,
    n_samples: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
    }
    let (n, q) = (system.state_dim(), system.input_dim());
    let mut sampler = BoxSampler::new(seed, SAMPLE_BOX);
    let mut worst = 0.0_f64;
    for _ in 0..n_samples {
        let x = sampler.sample(n);
        let u = sampler.sample(q);
        let xdot = eval_dynamics(system, &x, &u)?;
        let (xi_p, eta_p) = model.to_normal(&(&x + &xdot * FD_STEP));
        let (xi_m, eta_m) = model.to_normal(&(&x - &xdot * FD_STEP));
        let dxi_fd = (xi_p - xi_m) / (2.0 * FD_STEP);
        let deta_fd = (eta_p - eta_m) / (2.0 * FD_STEP);
        let (xi, eta) = model.to_normal(&x);
        let (dxi, deta) = model.rhs(&xi, &eta, &u);
        let res = (dxi_fd - dxi).amax().max(if eta.is_empty() {
            0.0
        } else {
            (deta_fd - deta).amax()
        });
        worst = worst.max(if res.is_finite() { res } else { f64::INFINITY });
    }
    if !(worst < CONSISTENCY_THRESHOLD) {
        return Err(Error::InconsistentNormalForm { residual: worst });
    }
    Ok(ConsistencyReport {
        max_residual: worst,
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateReport {
    /// `max ‖to_normal(from_normal(ξ,η)) − (ξ,η)‖_∞`.
    pub roundtrip_error: f64,
    /// `max ‖h(from_normal(ξ,η)) − ξ₁‖_∞`.
    pub output_error: f64,
}

pub fn check_coordinate_maps(
    system: &dyn ControlAffineSystem,
    model: &dyn NormalFormModel,
    n_samples: usize,
    seed: u64,
) -> Result<CoordinateReport> {
    let q = model.input_dim();
    let mut sampler = BoxSampler::new(seed, SAMPLE_BOX);
    let mut report = CoordinateReport {
        roundtrip_error: 0.0,
        output_error: 0.0,
    };
    for _ in 0..n_samples {
        let xi = sampler.sample(model.xi_dim());
        let eta = sampler.sample(model.eta_dim());
        let x = model.from_normal(&xi, &eta);
        let (xi2, eta2) = model.to_normal(&x);
        let mut err = (&xi2 - &xi).amax();
        if !eta.is_empty() {
            err = err.max((&eta2 - &eta).amax());
        }
        report.roundtrip_error = report.roundtrip_error.max(err);
        let y = eval_output(system, &x)?;
        report.output_error = report.output_error.max((y - xi.rows(0, q)).amax());
    }
    Ok(report)
}

/// Sampled growth constants; `c()` is the single worst-case constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub drift_ratio: f64,
    pub b_bar_ratio: f64,
    pub a_bar_norm: f64,
    pub f0_ratio: f64,
    pub g0_norm: f64,
    pub input_norm: f64,
}

impl GrowthReport {
    pub fn c(&self) -> f64 {
        [
            self.drift_ratio,
            self.b_bar_ratio,
            self.a_bar_norm,
            self.f0_ratio,
            self.g0_norm,
            self.input_norm,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn check_growth_assumption(
    system: &dyn ControlAffineSystem,
    model: &dyn NormalFormModel,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
    }
    let n = system.state_dim();
    let mut sampler = BoxSampler::new(seed, SAMPLE_BOX);
    let mut r = GrowthReport {
        drift_ratio: 0.0,
        b_bar_ratio: 0.0,
        a_bar_norm: 0.0,
        f0_ratio: 0.0,
        g0_norm: 0.0,
        input_norm: 0.0,
    };
    for _ in 0..n_samples {
        let x = sampler.sample_nonzero(n);
        r.drift_ratio = r.drift_ratio.max(eval_drift(system, &x).norm() / x.norm());
        r.input_norm = r
            .input_norm
            .max(spectral_norm(&eval_input_matrix(system, &x)));
        let (xi, eta) = model.to_normal(&x);
        let denom = xi.norm() + eta.norm();
        if denom > 0.0 {
            r.b_bar_ratio = r.b_bar_ratio.max(model.b_bar(&xi, &eta).norm() / denom);
        }
        r.a_bar_norm = r.a_bar_norm.max(spectral_norm(&model.a_bar(&xi, &eta)));
        if model.eta_dim() > 0 {
            let eta_s = sampler.sample_nonzero(model.eta_dim());
            r.f0_ratio = r.f0_ratio.max(model.f0(&eta_s).norm() / eta_s.norm());
            r.g0_norm = r.g0_norm.max(spectral_norm(&model.g0(&eta_s)));
        }
    }
    Ok(r)
}

/// Smallest singular value of `Ā` over sampled `(ξ, η)`.
pub fn a_bar_min_singular_value(model: &dyn NormalFormModel, n_samples: usize, seed: u64) -> f64 {
    let mut sampler = BoxSampler::new(seed, SAMPLE_BOX);
    (0..n_samples)
        .map(|_| {
            let xi = sampler.sample(model.xi_dim());
            let eta = sampler.sample(model.eta_dim());
            min_singular_value(&model.a_bar(&xi, &eta))
        })
        .fold(f64::INFINITY, f64::min)
}
