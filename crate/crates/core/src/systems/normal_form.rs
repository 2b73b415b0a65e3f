use nalgebra::{DMatrix, DVector};

/// Block matrices of the strict-feedback form with `q` channels of uniform
/// relative degree `r`. `ξ = (ξ_1, …, ξ_r)` with each block of size `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrices {
    /// Block shift-up: `(Fξ)_k = ξ_{k+1}`, `(Fξ)_r = 0`.
    pub f: DMatrix<f64>,
    /// Bottom-block injector.
    pub g: DMatrix<f64>,
    /// Top-block selector, `y = Cξ = ξ_1`.
    pub c: DMatrix<f64>,
}

pub fn block_matrices(q: usize, r: usize) -> BlockMatrices {
    let dim = q * r;
    let mut f = DMatrix::zeros(dim, dim);
    for k in 0..r.saturating_sub(1) {
        for j in 0..q {
            f[(k * q + j, (k + 1) * q + j)] = 1.0;
        }
    }
    let mut g = DMatrix::zeros(dim, q);
    let mut c = DMatrix::zeros(q, dim);
    for j in 0..q {
        g[((r - 1) * q + j, j)] = 1.0;
        c[(j, j)] = 1.0;
    }
    BlockMatrices { f, g, c }
}

/// Strict-feedback representation
///
/// ```text
/// ξ̇ = Fξ + G[b̄(ξ,η) + Ā(ξ,η)u]
/// η̇ = f̄₀(η) + ḡ₀(η)ξ₁
/// y = ξ₁
/// ```
///
/// together with the coordinate change `x ↔ (ξ, η)`.
pub trait NormalFormModel: Send + Sync {
    fn relative_degree(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn eta_dim(&self) -> usize;

    fn xi_dim(&self) -> usize {
        self.input_dim() * self.relative_degree()
    }

    fn state_dim(&self) -> usize {
        self.xi_dim() + self.eta_dim()
    }

    fn b_bar(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64>;

    fn a_bar(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DMatrix<f64>;

    fn f0(&self, eta: &DVector<f64>) -> DVector<f64>;

    fn g0(&self, eta: &DVector<f64>) -> DMatrix<f64>;

    fn to_normal(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>);

    #[allow(clippy::wrong_self_convention)]
    fn from_normal(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64>;

    /// Lower bound `γ` on the smallest singular value of `Ā`.
    fn a_bar_gamma(&self) -> f64;

    fn block_matrices(&self) -> BlockMatrices {
        block_matrices(self.input_dim(), self.relative_degree())
    }

    /// Right-hand side of the strict-feedback dynamics: `(ξ̇, η̇)`.
    fn rhs(
        &self,
        xi: &DVector<f64>,
        eta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let q = self.input_dim();
        let bm = self.block_matrices();
        let drive = self.b_bar(xi, eta) + self.a_bar(xi, eta) * u;
        let dxi = &bm.f * xi + &bm.g * drive;
        let deta = if self.eta_dim() == 0 {
            DVector::zeros(0)
        } else {
            let xi1 = xi.rows(0, q).into_owned();
            self.f0(eta) + self.g0(eta) * xi1
        };
        (dxi, deta)
    }
}
