use nalgebra::{Complex, DMatrix, DVector};

use super::NormalFormModel;
use crate::linalg::{eigenvalues, fd_jacobian};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    ExpMinimumPhase,
    ExpNonMinimumPhase,
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVerdict {
    pub kind: PhaseKind,
    pub zero_eigenvalues: Vec<Complex<f64>>,
    /// Distance of the spectral abscissa from the imaginary axis.
    pub margin: f64,
}

impl PhaseVerdict {
    pub fn is_minimum_phase(&self) -> bool {
        self.kind == PhaseKind::ExpMinimumPhase
    }
}

/// `∂f̄₀/∂η` at `η = 0` by central differences with step `1e-6`.
pub fn zero_dynamics_jacobian(model: &dyn NormalFormModel) -> DMatrix<f64> {
    let p = model.eta_dim();
    if p == 0 {
        return DMatrix::zeros(0, 0);
    }
    fd_jacobian(|eta| model.f0(eta), &DVector::zeros(p), 1e-6)
}

/// Local exponential phase of the zero dynamics from the spectrum of the
/// linearized zero dynamics. Full-state linearizable models are minimum-phase.
pub fn classify_phase(model: &dyn NormalFormModel, tol: f64) -> PhaseVerdict {
    if model.eta_dim() == 0 {
        return PhaseVerdict {
            kind: PhaseKind::ExpMinimumPhase,
            zero_eigenvalues: Vec::new(),
            margin: f64::INFINITY,
        };
    }
    let eig = eigenvalues(&zero_dynamics_jacobian(model));
    let max_re = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let min_re = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let kind = if max_re < -tol {
        PhaseKind::ExpMinimumPhase
    } else if min_re > tol {
        PhaseKind::ExpNonMinimumPhase
    } else {
        PhaseKind::Marginal
    };
    PhaseVerdict {
        kind,
        zero_eigenvalues: eig,
        margin: max_re.abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{BuiltinSystem, FlexOutput};

    const TOL: f64 = 1e-8;

    #[test]
    fn linear_nmp_is_exponentially_nonminimum_phase() {
        let v = classify_phase(&BuiltinSystem::LinearNmp.normal_form(), TOL);
        assert_eq!(v.kind, PhaseKind::ExpNonMinimumPhase);
        assert_eq!(v.zero_eigenvalues.len(), 1);
        assert!((v.zero_eigenvalues[0].re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn full_state_linearizable_is_minimum_phase() {
        let th1 = BuiltinSystem::flexible_link(FlexOutput::Theta1, false).normal_form();
        assert_eq!(classify_phase(&th1, TOL).kind, PhaseKind::ExpMinimumPhase);
        let pend = BuiltinSystem::Pendulum.normal_form();
        assert_eq!(classify_phase(&pend, TOL).kind, PhaseKind::ExpMinimumPhase);
    }

    #[test]
    fn damped_theta3_is_minimum_phase() {
        let th3 = BuiltinSystem::flexible_link(FlexOutput::Theta3, true).normal_form();
        let v = classify_phase(&th3, TOL);
        assert_eq!(v.kind, PhaseKind::ExpMinimumPhase);
        // s² + 0.5 s + (K − 1) = 0 → Re s = −0.25
        assert!(v
            .zero_eigenvalues
            .iter()
            .all(|z| (z.re + 0.25).abs() < 1e-6));
    }

    #[test]
    fn frictionless_theta3_is_not_minimum_phase() {
        // Zero dynamics η̈₁ = (1 − K)η₁ are a centre at ±i√(K−1): not
        // asymptotically stable, but not exponentially anti-stable either.
        let th3 = BuiltinSystem::flexible_link(FlexOutput::Theta3, false).normal_form();
        let v = classify_phase(&th3, TOL);
        assert!(!v.is_minimum_phase());
        assert_eq!(v.kind, PhaseKind::Marginal);
        for z in &v.zero_eigenvalues {
            assert!(z.re.abs() < 1e-6);
            assert!((z.im.abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constructed_unstable_plant_keeps_the_unstable_zero() {
        let v = classify_phase(&BuiltinSystem::LinearNmpUnstable.normal_form(), TOL);
        assert_eq!(v.kind, PhaseKind::ExpNonMinimumPhase);
    }
}
