//! Built-in plants with hand-derived strict-feedback normal forms.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{ControlAffineSystem, LinearMatrices, NormalFormModel};
use crate::{Error, Result};

/// Output choice for the flexible-link manipulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlexOutput {
    /// `y = x₁` (arm angle): full-state linearizable, relative degree 4.
    Theta1,
    /// `y = x₃` (motor angle): relative degree 2 with two-dimensional zeros.
    Theta3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinSystem {
    /// State `(θ₁, θ̇₁, θ₂, θ̇₂)`:
    /// `ẋ₂ = sin x₁ + K(x₃ − x₁) − β₁x₂`, `ẋ₄ = K(x₁ − x₃) − β₂x₄ + u`.
    FlexibleLink {
        k: f64,
        beta1: f64,
        beta2: f64,
        output: FlexOutput,
    },
    /// Passively stable linear plant with an unstable zero:
    /// `A = [[-2, 1], [-10, 1]]`, `B = e₁`, `y = x₁`.
    LinearNmp,
    /// Constructed plant for the large-ε experiments: `LinearNmp` with the
    /// sign of `a₁₁` flipped, so `ẋ = −f(x)` is exponentially stable while
    /// the zero at `+1` is kept.
    LinearNmpUnstable,
    /// Inverted pendulum `ẋ₁ = x₂`, `ẋ₂ = sin x₁ + u`, `y = x₁`.
    Pendulum,
}

pub const DEFAULT_SPRING: f64 = 2.0;
pub const DAMPED_FRICTION: f64 = 0.5;

impl BuiltinSystem {
    pub const NAMES: [&'static str; 5] = [
        "linear_nmp",
        "flexible_link_theta1",
        "flexible_link_theta3",
        "pendulum",
        "linear_nmp_unstable",
    ];

    pub fn flexible_link(output: FlexOutput, damped: bool) -> Self {
        let beta = if damped { DAMPED_FRICTION } else { 0.0 };
        BuiltinSystem::FlexibleLink {
            k: DEFAULT_SPRING,
            beta1: beta,
            beta2: beta,
            output,
        }
    }

    /// Looks up a builtin by scenario name; `K`, `beta1`, `beta2` are read from `params`.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let flex = |output| -> Result<Self> {
            let k = get("K", DEFAULT_SPRING);
            let beta1 = get("beta1", 0.0);
            let beta2 = get("beta2", 0.0);
            if !(k > 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "flexible link spring coefficient K must exceed 1, got {k}"
                )));
            }
            if beta1 < 0.0 || beta2 < 0.0 {
                return Err(Error::InvalidConfig(
                    "flexible link friction coefficients must be nonnegative".into(),
                ));
            }
            Ok(BuiltinSystem::FlexibleLink {
                k,
                beta1,
                beta2,
                output,
            })
        };
        match name {
            "linear_nmp" => Ok(BuiltinSystem::LinearNmp),
            "linear_nmp_unstable" => Ok(BuiltinSystem::LinearNmpUnstable),
            "pendulum" => Ok(BuiltinSystem::Pendulum),
            "flexible_link_theta1" => flex(FlexOutput::Theta1),
            "flexible_link_theta3" => flex(FlexOutput::Theta3),
            other => Err(Error::InvalidConfig(format!("unknown system `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta1,
                ..
            } => "flexible_link_theta1",
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta3,
                ..
            } => "flexible_link_theta3",
            BuiltinSystem::LinearNmp => "linear_nmp",
            BuiltinSystem::LinearNmpUnstable => "linear_nmp_unstable",
            BuiltinSystem::Pendulum => "pendulum",
        }
    }

    pub fn normal_form(&self) -> BuiltinNormalForm {
        BuiltinNormalForm(*self)
    }

    fn linear_a11(&self) -> f64 {
        match self {
            BuiltinSystem::LinearNmpUnstable => 2.0,
            _ => -2.0,
        }
    }
}

impl ControlAffineSystem for BuiltinSystem {
    fn state_dim(&self) -> usize {
        match self {
            BuiltinSystem::FlexibleLink { .. } => 4,
            _ => 2,
        }
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            BuiltinSystem::FlexibleLink {
                k, beta1, beta2, ..
            } => {
                out[0] = x[1];
                out[1] = x[0].sin() + k * (x[2] - x[0]) - beta1 * x[1];
                out[2] = x[3];
                out[3] = k * (x[0] - x[2]) - beta2 * x[3];
            }
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => {
                out[0] = self.linear_a11() * x[0] + x[1];
                out[1] = -10.0 * x[0] + x[1];
            }
            BuiltinSystem::Pendulum => {
                out[0] = x[1];
                out[1] = x[0].sin();
            }
        }
    }

    fn input_matrix(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            BuiltinSystem::FlexibleLink { .. } => out[3] = 1.0,
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => out[0] = 1.0,
            BuiltinSystem::Pendulum => out[1] = 1.0,
        }
    }

    fn output(&self, x: &[f64], out: &mut [f64]) {
        out[0] = match self {
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta3,
                ..
            } => x[2],
            _ => x[0],
        };
    }

    fn label(&self) -> String {
        self.name().to_string()
    }

    fn vector_field(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.drift(x, out);
        match self {
            BuiltinSystem::FlexibleLink { .. } => out[3] += u[0],
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => out[0] += u[0],
            BuiltinSystem::Pendulum => out[1] += u[0],
        }
    }

    fn state_jacobian(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match *self {
            BuiltinSystem::FlexibleLink {
                k, beta1, beta2, ..
            } => {
                // row-major 4x4
                out[1] = 1.0;
                out[4] = x[0].cos() - k;
                out[5] = -beta1;
                out[6] = k;
                out[11] = 1.0;
                out[12] = k;
                out[14] = -k;
                out[15] = -beta2;
            }
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => {
                out[0] = self.linear_a11();
                out[1] = 1.0;
                out[2] = -10.0;
                out[3] = 1.0;
            }
            BuiltinSystem::Pendulum => {
                out[1] = 1.0;
                out[2] = x[0].cos();
            }
        }
    }

    fn output_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta3,
                ..
            } => out[2] = 1.0,
            _ => out[0] = 1.0,
        }
    }

    fn linear_matrices(&self) -> Option<LinearMatrices> {
        match self {
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => Some(LinearMatrices {
                a: DMatrix::from_row_slice(2, 2, &[self.linear_a11(), 1.0, -10.0, 1.0]),
                b: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
                c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            }),
            _ => None,
        }
    }
}

/// Analytic strict-feedback normal form of a [`BuiltinSystem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinNormalForm(pub BuiltinSystem);

fn v(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

impl NormalFormModel for BuiltinNormalForm {
    fn relative_degree(&self) -> usize {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta1,
                ..
            } => 4,
            BuiltinSystem::FlexibleLink { .. } | BuiltinSystem::Pendulum => 2,
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => 1,
        }
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn eta_dim(&self) -> usize {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta1,
                ..
            }
            | BuiltinSystem::Pendulum => 0,
            BuiltinSystem::FlexibleLink { .. } => 2,
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => 1,
        }
    }

    fn b_bar(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                k,
                beta1,
                beta2,
                output: FlexOutput::Theta1,
            } => {
                let x = self.from_normal(xi, eta);
                let val = -xi[0].sin() * xi[1] * xi[1]
                    + xi[0].cos() * xi[2]
                    + k * (k * (x[0] - x[2]) - beta2 * x[3])
                    - k * xi[2]
                    - beta1 * xi[3];
                v(&[val])
            }
            BuiltinSystem::FlexibleLink {
                k,
                beta2,
                output: FlexOutput::Theta3,
                ..
            } => v(&[k * (eta[0] - xi[0]) - beta2 * xi[1]]),
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => {
                v(&[self.0.linear_a11() * xi[0] + eta[0]])
            }
            BuiltinSystem::Pendulum => v(&[xi[0].sin()]),
        }
    }

    fn a_bar(&self, _xi: &DVector<f64>, _eta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a_bar_gamma())
    }

    fn f0(&self, eta: &DVector<f64>) -> DVector<f64> {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                k,
                beta1,
                output: FlexOutput::Theta3,
                ..
            } => v(&[eta[1], eta[0].sin() - k * eta[0] - beta1 * eta[1]]),
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => v(&[eta[0]]),
            _ => DVector::zeros(0),
        }
    }

    fn g0(&self, _eta: &DVector<f64>) -> DMatrix<f64> {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                k,
                output: FlexOutput::Theta3,
                ..
            } => DMatrix::from_row_slice(2, 1, &[0.0, k]),
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => {
                DMatrix::from_element(1, 1, -10.0)
            }
            _ => DMatrix::zeros(0, 1),
        }
    }

    fn to_normal(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                k,
                beta1,
                output: FlexOutput::Theta1,
                ..
            } => {
                let xi3 = x[0].sin() + k * (x[2] - x[0]) - beta1 * x[1];
                let xi4 = x[0].cos() * x[1] + k * (x[3] - x[1]) - beta1 * xi3;
                (v(&[x[0], x[1], xi3, xi4]), DVector::zeros(0))
            }
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta3,
                ..
            } => (v(&[x[2], x[3]]), v(&[x[0], x[1]])),
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => (v(&[x[0]]), v(&[x[1]])),
            BuiltinSystem::Pendulum => (v(&[x[0], x[1]]), DVector::zeros(0)),
        }
    }

    fn from_normal(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                k,
                beta1,
                output: FlexOutput::Theta1,
                ..
            } => {
                let x3 = xi[0] + (xi[2] - xi[0].sin() + beta1 * xi[1]) / k;
                let x4 = xi[1] + (xi[3] - xi[0].cos() * xi[1] + beta1 * xi[2]) / k;
                v(&[xi[0], xi[1], x3, x4])
            }
            BuiltinSystem::FlexibleLink {
                output: FlexOutput::Theta3,
                ..
            } => v(&[eta[0], eta[1], xi[0], xi[1]]),
            BuiltinSystem::LinearNmp | BuiltinSystem::LinearNmpUnstable => v(&[xi[0], eta[0]]),
            BuiltinSystem::Pendulum => v(&[xi[0], xi[1]]),
        }
    }

    fn a_bar_gamma(&self) -> f64 {
        match self.0 {
            BuiltinSystem::FlexibleLink {
                k,
                output: FlexOutput::Theta1,
                ..
            } => k,
            _ => 1.0,
        }
    }
}
