//! Cheap-control reparameterisation `ε = ε̃^{2r}` and the fast-slow scaling
//! `ξ̃ = S(ε̃)ξ`, `ũ = ε̃^r u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, check_epsilon};
use crate::sampling::BoxSampler;
use crate::systems::NormalFormModel;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheapControlWeights {
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    pub r: usize,
}

impl CheapControlWeights {
    pub fn from_epsilon(epsilon: f64, r: usize) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            epsilon_tilde: epsilon.powf(1.0 / (2 * r.max(1)) as f64),
            r: r.max(1),
        })
    }

    pub fn from_epsilon_tilde(epsilon_tilde: f64, r: usize) -> Result<Self> {
        check_epsilon(epsilon_tilde)?;
        let r = r.max(1);
        Ok(Self {
            epsilon: epsilon_tilde.powi(2 * r as i32),
            epsilon_tilde,
            r,
        })
    }

    /// `ε̃^r = √ε`, the input scaling factor.
    pub fn input_scale(&self) -> f64 {
        self.epsilon_tilde.powi(self.r as i32)
    }
}

/// Block-diagonal `S(ε̃) = diag(I, ε̃I, …, ε̃^{r−1}I)` with `q × q` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    pub epsilon_tilde: f64,
    pub r: usize,
    pub q: usize,
}

impl ScalingMatrix {
    /// Weight of block `k` (zero-based), `ε̃^k`.
    pub fn block_weight(&self, k: usize) -> f64 {
        self.epsilon_tilde.powi(k as i32)
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.q * self.r, |i, _| self.block_weight(i / self.q))
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diagonal())
    }

    pub fn apply(&self, xi: &DVector<f64>) -> DVector<f64> {
        xi.component_mul(&self.diagonal())
    }

    pub fn apply_inverse(&self, xi_tilde: &DVector<f64>) -> DVector<f64> {
        xi_tilde.component_div(&self.diagonal())
    }
}

pub fn scaling_matrix(eps_tilde: f64, r: usize, q: usize) -> Result<ScalingMatrix> {
    check_epsilon(eps_tilde)?;
    if r == 0 || q == 0 {
        return Err(crate::Error::InvalidConfig(
            "scaling matrix needs r ≥ 1 and q ≥ 1".into(),
        ));
    }
    Ok(ScalingMatrix {
        epsilon_tilde: eps_tilde,
        r,
        q,
    })
}

fn weights_scaling(model: &dyn NormalFormModel, w: &CheapControlWeights) -> Result<ScalingMatrix> {
    scaling_matrix(w.epsilon_tilde, model.relative_degree(), model.input_dim())
}

/// `(ξ, u) ↦ (S(ε̃)ξ, ε̃^r u)`.
pub fn to_fast_slow(
    model: &dyn NormalFormModel,
    w: &CheapControlWeights,
    xi: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("xi", model.xi_dim(), xi.len())?;
    check_dim("input", model.input_dim(), u.len())?;
    let s = weights_scaling(model, w)?;
    Ok((s.apply(xi), u * w.input_scale()))
}

pub fn from_fast_slow(
    model: &dyn NormalFormModel,
    w: &CheapControlWeights,
    xi_tilde: &DVector<f64>,
    u_tilde: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("xi", model.xi_dim(), xi_tilde.len())?;
    check_dim("input", model.input_dim(), u_tilde.len())?;
    let s = weights_scaling(model, w)?;
    Ok((s.apply_inverse(xi_tilde), u_tilde / w.input_scale()))
}

/// `ℓ = ‖h‖² + ε‖u‖²`.
pub fn running_cost(h_val: &DVector<f64>, u: &DVector<f64>, epsilon: f64) -> f64 {
    h_val.norm_squared() + epsilon * u.norm_squared()
}

/// Fast-slow right-hand side: returns `(ε̃·dξ̃/dt, dη/dt)` where
/// `ε̃·dξ̃/dt = Fξ̃ + G[ε̃^r b̃ + Ãũ]` and `η̇ = f̄₀(η) + ḡ₀(η)ξ̃₁`.
pub fn fast_slow_rhs(
    model: &dyn NormalFormModel,
    w: &CheapControlWeights,
    xi_tilde: &DVector<f64>,
    eta: &DVector<f64>,
    u_tilde: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let s = weights_scaling(model, w)?;
    let xi = s.apply_inverse(xi_tilde);
    let bm = model.block_matrices();
    let drive = model.b_bar(&xi, eta) * w.input_scale() + model.a_bar(&xi, eta) * u_tilde;
    let fast = &bm.f * xi_tilde + &bm.g * drive;
    let slow = if model.eta_dim() == 0 {
        DVector::zeros(0)
    } else {
        let q = model.input_dim();
        model.f0(eta) + model.g0(eta) * xi_tilde.rows(0, q)
    };
    Ok((fast, slow))
}

/// Largest relative gap between `‖ξ₁‖² + ε‖u‖²` and `‖ξ̃₁‖² + ‖ũ‖²` over random
/// points in `[−2, 2]`, with absolute floor `1e-12`.
pub fn check_cost_invariance(
    model: &dyn NormalFormModel,
    epsilon_tilde: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let w = CheapControlWeights::from_epsilon_tilde(epsilon_tilde, model.relative_degree())?;
    let q = model.input_dim();
    let mut sampler = BoxSampler::new(seed, 2.0);
    let mut worst = 0.0_f64;
    for _ in 0..n_samples {
        let xi = sampler.sample(model.xi_dim());
        let u = sampler.sample(q);
        let (xt, ut) = to_fast_slow(model, &w, &xi, &u)?;
        let original = running_cost(&xi.rows(0, q).into_owned(), &u, w.epsilon);
        let scaled = xt.rows(0, q).norm_squared() + ut.norm_squared();
        worst = worst.max((original - scaled).abs() / original.abs().max(1e-12));
    }
    Ok(worst)
}

/// Integrates the strict-feedback dynamics with RK4 from random initial points
/// and constant random inputs, maps the trajectory through `S(ε̃)` and checks
/// the fast-slow equations by central differences. Returns the largest residual norm.
pub fn check_fast_slow_dynamics(
    model: &dyn NormalFormModel,
    epsilon_tilde: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let w = CheapControlWeights::from_epsilon_tilde(epsilon_tilde, model.relative_degree())?;
    let s = weights_scaling(model, &w)?;
    let (nx, ne) = (model.xi_dim(), model.eta_dim());
    let mut sampler = BoxSampler::new(seed, 1.0);
    let h = 1e-3;
    let steps = 20;
    let mut worst = 0.0_f64;
    for _ in 0..n_samples {
        let mut z = sampler.sample(nx + ne);
        let u = sampler.sample(model.input_dim());
        let rhs = |z: &DVector<f64>| {
            let (dxi, deta) = model.rhs(
                &z.rows(0, nx).into_owned(),
                &z.rows(nx, ne).into_owned(),
                &u,
            );
            let mut out = DVector::zeros(nx + ne);
            out.rows_mut(0, nx).copy_from(&dxi);
            out.rows_mut(nx, ne).copy_from(&deta);
            out
        };
        let mut traj = vec![z.clone()];
        for _ in 0..steps {
            let k1 = rhs(&z);
            let k2 = rhs(&(&z + &k1 * (h / 2.0)));
            let k3 = rhs(&(&z + &k2 * (h / 2.0)));
            let k4 = rhs(&(&z + &k3 * h));
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            traj.push(z.clone());
        }
        let fast = |z: &DVector<f64>| s.apply(&z.rows(0, nx).into_owned());
        let u_tilde = &u * w.input_scale();
        for k in 1..steps {
            let (zk, zp, zm) = (&traj[k], &traj[k + 1], &traj[k - 1]);
            let dxi_t = (fast(zp) - fast(zm)) / (2.0 * h);
            let deta = (zp.rows(nx, ne) - zm.rows(nx, ne)) / (2.0 * h);
            let eta = zk.rows(nx, ne).into_owned();
            let (f_rhs, s_rhs) = fast_slow_rhs(model, &w, &fast(zk), &eta, &u_tilde)?;
            let res = (dxi_t * epsilon_tilde - f_rhs).norm().max(if ne == 0 {
                0.0
            } else {
                (deta - s_rhs).norm()
            });
            worst = worst.max(res);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{BuiltinSystem, FlexOutput};
    use proptest::prelude::*;

    #[test]
    fn scaling_examples() {
        assert_eq!(
            scaling_matrix(1.0, 3, 1).unwrap().matrix(),
            DMatrix::identity(3, 3)
        );
        let s = scaling_matrix(0.5, 2, 1).unwrap();
        assert_eq!(s.diagonal().as_slice(), &[1.0, 0.5]);
        let s = scaling_matrix(0.1, 2, 2).unwrap();
        assert_eq!(s.diagonal().as_slice(), &[1.0, 1.0, 0.1, 0.1]);
        assert!(scaling_matrix(0.0, 2, 1).is_err());
        assert!(scaling_matrix(-1.0, 2, 1).is_err());
    }

    #[test]
    fn fast_slow_example() {
        let model = BuiltinSystem::Pendulum.normal_form();
        let w = CheapControlWeights::from_epsilon_tilde(0.1, 2).unwrap();
        let (xt, ut) = to_fast_slow(
            &model,
            &w,
            &DVector::from_vec(vec![1.0, 1.0]),
            &DVector::from_vec(vec![5.0]),
        )
        .unwrap();
        assert!((xt[0] - 1.0).abs() < 1e-15 && (xt[1] - 0.1).abs() < 1e-15);
        assert!((ut[0] - 0.05).abs() < 1e-15);
        let w1 = CheapControlWeights::from_epsilon_tilde(1.0, 2).unwrap();
        let xi = DVector::from_vec(vec![0.3, -0.7]);
        let u = DVector::from_vec(vec![2.0]);
        assert_eq!(to_fast_slow(&model, &w1, &xi, &u).unwrap(), (xi, u));
    }

    #[test]
    fn running_cost_examples() {
        let z = DVector::zeros(1);
        assert_eq!(running_cost(&z, &z, 0.3), 0.0);
        let h = DVector::from_vec(vec![1.0]);
        let u = DVector::from_vec(vec![2.0]);
        assert_eq!(running_cost(&h, &u, 0.25), 2.0);
    }

    #[test]
    fn identities_hold_on_builtins() {
        for sys in [
            BuiltinSystem::LinearNmp,
            BuiltinSystem::Pendulum,
            BuiltinSystem::flexible_link(FlexOutput::Theta1, false),
            BuiltinSystem::flexible_link(FlexOutput::Theta3, true),
        ] {
            let m = sys.normal_form();
            for et in [1.0, 0.3, 0.05] {
                assert!(check_cost_invariance(&m, et, 100, 1).unwrap() < 1e-12);
                assert!(check_fast_slow_dynamics(&m, et, 10, 2).unwrap() < 1e-4);
            }
        }
    }

    proptest! {
        #[test]
        fn weights_roundtrip(eps in 1e-12f64..10.0, r in 1usize..6) {
            let w = CheapControlWeights::from_epsilon(eps, r).unwrap();
            let back = w.epsilon_tilde.powi(2 * r as i32);
            prop_assert!((back - eps).abs() <= 1e-12 * eps);
        }

        #[test]
        fn fast_slow_roundtrip(et in 1e-3f64..1.0, a in -5.0f64..5.0, b in -5.0f64..5.0,
                               c in -5.0f64..5.0, d in -5.0f64..5.0, u in -5.0f64..5.0) {
            let m = BuiltinSystem::flexible_link(FlexOutput::Theta1, false).normal_form();
            let w = CheapControlWeights::from_epsilon_tilde(et, 4).unwrap();
            let xi = DVector::from_vec(vec![a, b, c, d]);
            let uv = DVector::from_vec(vec![u]);
            let (xt, ut) = to_fast_slow(&m, &w, &xi, &uv).unwrap();
            let (xi2, u2) = from_fast_slow(&m, &w, &xt, &ut).unwrap();
            prop_assert!((xi2 - &xi).amax() <= 1e-12 * xi.amax().max(1.0));
            prop_assert!((u2 - &uv).amax() <= 1e-12 * u.abs().max(1.0));
        }

        #[test]
        fn scaling_is_monotone(e1 in 1e-3f64..1.0, e2 in 1e-3f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = scaling_matrix(lo, 3, 2).unwrap().diagonal();
            let b = scaling_matrix(hi, 3, 2).unwrap().diagonal();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x <= y));
        }
    }
}
