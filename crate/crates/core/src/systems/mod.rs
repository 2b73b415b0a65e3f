//! Control-affine plants `ẋ = f(x) + g(x)u`, `y = h(x)`, their strict-feedback
//! normal forms, and phase classification of the zero dynamics.
//!
//! The [`ControlAffineSystem`] trait works on flat slices because the
//! shooting solver evaluates it millions of times per closed-loop run;
//! [`eval_dynamics`] and friends wrap it for `DVector` callers.

mod builtin;
mod checks;
mod normal_form;
mod phase;

pub use builtin::{BuiltinNormalForm, BuiltinSystem, FlexOutput};
pub use checks::{
    a_bar_min_singular_value, check_coordinate_maps, check_equilibrium, check_growth_assumption,
    check_normal_form_consistency, ConsistencyReport, CoordinateReport, GrowthReport,
};
pub use normal_form::{block_matrices, BlockMatrices, NormalFormModel};
pub use phase::{classify_phase, zero_dynamics_jacobian, PhaseKind, PhaseVerdict};

use nalgebra::{DMatrix, DVector};

use crate::error::check_dim;
use crate::Result;

/// Constant matrices of a linear plant `ẋ = Ax + Bu`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// A square control-affine plant. Matrices are passed row-major.
pub trait ControlAffineSystem: Send + Sync {
    fn state_dim(&self) -> usize;

    /// Number of inputs, equal to the number of outputs.
    fn input_dim(&self) -> usize;

    fn drift(&self, x: &[f64], out: &mut [f64]);

    /// `g(x)` as a row-major `n × q` matrix.
    fn input_matrix(&self, x: &[f64], out: &mut [f64]);

    fn output(&self, x: &[f64], out: &mut [f64]);

    fn label(&self) -> String {
        "custom".to_string()
    }

    /// `f(x) + g(x)u`.
    fn vector_field(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, q) = (self.state_dim(), self.input_dim());
        self.drift(x, out);
        let mut g = vec![0.0; n * q];
        self.input_matrix(x, &mut g);
        for i in 0..n {
            for j in 0..q {
                out[i] += g[i * q + j] * u[j];
            }
        }
    }

    /// `∂(f(x) + g(x)u)/∂x`, row-major `n × n`. Central differences unless overridden.
    fn state_jacobian(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.state_dim();
        let step = 1e-6;
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + step;
            self.vector_field(&xp, u, &mut fp);
            xp[j] = orig - step;
            self.vector_field(&xp, u, &mut fm);
            xp[j] = orig;
            for i in 0..n {
                out[i * n + j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
    }

    /// `∂h/∂x`, row-major `q × n`. Central differences unless overridden.
    fn output_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let (n, q) = (self.state_dim(), self.input_dim());
        let step = 1e-6;
        let mut xp = x.to_vec();
        let mut hp = vec![0.0; q];
        let mut hm = vec![0.0; q];
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + step;
            self.output(&xp, &mut hp);
            xp[j] = orig - step;
            self.output(&xp, &mut hm);
            xp[j] = orig;
            for i in 0..q {
                out[i * n + j] = (hp[i] - hm[i]) / (2.0 * step);
            }
        }
    }

    /// Exact `(A, B, C)` when the plant is linear; enables the Riccati oracles.
    fn linear_matrices(&self) -> Option<LinearMatrices> {
        None
    }
}

/// Evaluates `f(x) + g(x)u`.
pub fn eval_dynamics(
    system: &dyn ControlAffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("state", system.state_dim(), x.len())?;
    check_dim("input", system.input_dim(), u.len())?;
    let mut out = DVector::zeros(x.len());
    system.vector_field(x.as_slice(), u.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub fn eval_output(system: &dyn ControlAffineSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("state", system.state_dim(), x.len())?;
    let mut out = DVector::zeros(system.input_dim());
    system.output(x.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub fn eval_drift(system: &dyn ControlAffineSystem, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(system.state_dim());
    system.drift(x.as_slice(), out.as_mut_slice());
    out
}

pub fn eval_input_matrix(system: &dyn ControlAffineSystem, x: &DVector<f64>) -> DMatrix<f64> {
    let (n, q) = (system.state_dim(), system.input_dim());
    let mut g = vec![0.0; n * q];
    system.input_matrix(x.as_slice(), &mut g);
    DMatrix::from_row_slice(n, q, &g)
}

/// Jacobian linearization `(A, B, C)` at the origin.
pub fn linearize_at_origin(system: &dyn ControlAffineSystem) -> LinearMatrices {
    if let Some(lin) = system.linear_matrices() {
        return lin;
    }
    let (n, q) = (system.state_dim(), system.input_dim());
    let zero_x = vec![0.0; n];
    let zero_u = vec![0.0; q];
    let mut a = vec![0.0; n * n];
    system.state_jacobian(&zero_x, &zero_u, &mut a);
    let mut b = vec![0.0; n * q];
    system.input_matrix(&zero_x, &mut b);
    let mut c = vec![0.0; q * n];
    system.output_jacobian(&zero_x, &mut c);
    LinearMatrices {
        a: DMatrix::from_row_slice(n, n, &a),
        b: DMatrix::from_row_slice(n, q, &b),
        c: DMatrix::from_row_slice(q, n, &c),
    }
}

/// Linear plant `ẋ = Ax + Bu`, `y = Cx`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    matrices: LinearMatrices,
    label: String,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("C columns", n, c.ncols())?;
        check_dim("outputs (square system)", b.ncols(), c.nrows())?;
        Ok(Self {
            matrices: LinearMatrices { a, b, c },
            label: "linear".to_string(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn matrices(&self) -> &LinearMatrices {
        &self.matrices
    }
}

impl ControlAffineSystem for LinearSystem {
    fn state_dim(&self) -> usize {
        self.matrices.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.matrices.b.ncols()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let a = &self.matrices.a;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|j| a[(i, j)] * x[j]).sum();
        }
    }

    fn input_matrix(&self, _x: &[f64], out: &mut [f64]) {
        let b = &self.matrices.b;
        let q = b.ncols();
        for i in 0..b.nrows() {
            for j in 0..q {
                out[i * q + j] = b[(i, j)];
            }
        }
    }

    fn output(&self, x: &[f64], out: &mut [f64]) {
        let c = &self.matrices.c;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|j| c[(i, j)] * x[j]).sum();
        }
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn vector_field(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (a, b) = (&self.matrices.a, &self.matrices.b);
        for (i, o) in out.iter_mut().enumerate() {
            let ax: f64 = (0..x.len()).map(|j| a[(i, j)] * x[j]).sum();
            let bu: f64 = (0..u.len()).map(|j| b[(i, j)] * u[j]).sum();
            *o = ax + bu;
        }
    }

    fn state_jacobian(&self, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        let a = &self.matrices.a;
        let n = a.nrows();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = a[(i, j)];
            }
        }
    }

    fn output_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        let c = &self.matrices.c;
        let n = c.ncols();
        for i in 0..c.nrows() {
            for j in 0..n {
                out[i * n + j] = c[(i, j)];
            }
        }
    }

    fn linear_matrices(&self) -> Option<LinearMatrices> {
        Some(self.matrices.clone())
    }
}

type VecMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatMap = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Plant assembled from closures; Jacobians fall back to finite differences.
pub struct FnSystem {
    n: usize,
    q: usize,
    drift: VecMap,
    input: MatMap,
    output: VecMap,
    label: String,
}

impl FnSystem {
    pub fn new(
        n: usize,
        q: usize,
        drift: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        input: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        output: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            q,
            drift: Box::new(drift),
            input: Box::new(input),
            output: Box::new(output),
            label: "custom".to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl ControlAffineSystem for FnSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.q
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let v = (self.drift)(&DVector::from_column_slice(x));
        out.copy_from_slice(v.as_slice());
    }

    fn input_matrix(&self, x: &[f64], out: &mut [f64]) {
        let g = (self.input)(&DVector::from_column_slice(x));
        for i in 0..self.n {
            for j in 0..self.q {
                out[i * self.q + j] = g[(i, j)];
            }
        }
    }

    fn output(&self, x: &[f64], out: &mut [f64]) {
        let v = (self.output)(&DVector::from_column_slice(x));
        out.copy_from_slice(v.as_slice());
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
