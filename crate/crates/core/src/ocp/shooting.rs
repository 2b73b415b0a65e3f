//! RK4 single-shooting discretisation of the finite-horizon cost and its
//! discrete adjoint.

use super::HorizonSpec;
use crate::systems::ControlAffineSystem;
use crate::{Error, Result};

/// Local quadrature weights (in units of the substep `h`) on `m` substeps.
pub(crate) fn local_weights(m: usize) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    match m {
        0 => {}
        1 => {
            w[0] = 0.5;
            w[1] = 0.5;
        }
        _ => {
            let simpson_len = if m.is_multiple_of(2) { m } else { m - 3 };
            for i in (0..simpson_len).step_by(2) {
                w[i] += 1.0 / 3.0;
                w[i + 1] += 4.0 / 3.0;
                w[i + 2] += 1.0 / 3.0;
            }
            if m % 2 == 1 {
                let s = simpson_len;
                for (k, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[s + k] += 3.0 / 8.0 * c;
                }
            }
        }
    }
    w
}

/// Global weights `W[k]` such that `Σ W[k] ‖h(x_k)‖²` approximates `∫‖h‖²`.
pub(crate) fn global_weights(hz: &HorizonSpec) -> Vec<f64> {
    let m = hz.n_int;
    let h = hz.substep();
    let local = local_weights(m);
    let mut w = vec![0.0; hz.n_ctrl * m + 1];
    for j in 0..hz.n_ctrl {
        for (i, lw) in local.iter().enumerate() {
            w[j * m + i] += lw * h;
        }
    }
    w
}

/// Scratch buffers for one RK4 step on an `n`-dimensional state.
pub(crate) struct Rk4 {
    n: usize,
    pub k: [Vec<f64>; 4],
    pub z: [Vec<f64>; 4],
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        Self {
            n,
            k: [v(), v(), v(), v()],
            z: [v(), v(), v(), v()],
        }
    }

    /// Advances `x` by one step of size `h` in place, keeping the stage points.
    pub fn step(&mut self, sys: &dyn ControlAffineSystem, x: &mut [f64], u: &[f64], h: f64) {
        let n = self.n;
        let coeff = [0.0, 0.5 * h, 0.5 * h, h];
        for s in 0..4 {
            if s == 0 {
                self.z[0].copy_from_slice(x);
            } else {
                let (zs, ks) = (&mut self.z, &self.k);
                for i in 0..n {
                    zs[s][i] = x[i] + coeff[s] * ks[s - 1][i];
                }
            }
            sys.vector_field(&self.z[s], u, &mut self.k[s]);
        }
        for i in 0..n {
            x[i] +=
                h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }
}

pub(crate) struct Shooting<'a> {
    pub sys: &'a dyn ControlAffineSystem,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub horizon: HorizonSpec,
    weights: Vec<f64>,
}

impl<'a> Shooting<'a> {
    pub fn new(
        sys: &'a dyn ControlAffineSystem,
        epsilon: f64,
        x0: Vec<f64>,
        horizon: HorizonSpec,
    ) -> Self {
        let weights = global_weights(&horizon);
        Self {
            sys,
            epsilon,
            x0,
            horizon,
            weights,
        }
    }

    fn n(&self) -> usize {
        self.sys.state_dim()
    }

    fn q(&self) -> usize {
        self.sys.input_dim()
    }

    /// States on the integration grid, flattened row by row (`(N+1)·n`).
    pub fn simulate(&self, u: &[f64]) -> Result<Vec<f64>> {
        let (n, q) = (self.n(), self.q());
        let m = self.horizon.n_int;
        let h = self.horizon.substep();
        let total = self.horizon.n_ctrl * m;
        let mut states = Vec::with_capacity((total + 1) * n);
        states.extend_from_slice(&self.x0);
        let mut x = self.x0.clone();
        let mut rk = Rk4::new(n);
        for j in 0..self.horizon.n_ctrl {
            let uj = &u[j * q..(j + 1) * q];
            for _ in 0..m {
                rk.step(self.sys, &mut x, uj, h);
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteCost);
                }
                states.extend_from_slice(&x);
            }
        }
        Ok(states)
    }

    /// Discretised cost from precomputed grid states.
    pub fn cost_from_states(&self, states: &[f64], u: &[f64]) -> Result<f64> {
        let (n, q) = (self.n(), self.q());
        let mut hval = vec![0.0; q];
        let mut state_part = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            self.sys.output(&states[k * n..(k + 1) * n], &mut hval);
            state_part += w * hval.iter().map(|v| v * v).sum::<f64>();
        }
        let control_part: f64 = u.iter().map(|v| v * v).sum::<f64>();
        let cost = state_part + self.epsilon * self.horizon.dt_ctrl() * control_part;
        if !cost.is_finite() {
            return Err(Error::NonFiniteCost);
        }
        Ok(cost)
    }

    pub fn cost(&self, u: &[f64]) -> Result<f64> {
        let states = self.simulate(u)?;
        self.cost_from_states(&states, u)
    }

    /// Cost and its exact gradient with respect to the flattened control values.
    pub fn cost_and_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (n, q) = (self.n(), self.q());
        let m = self.horizon.n_int;
        let h = self.horizon.substep();
        let states = self.simulate(u)?;
        let cost = self.cost_from_states(&states, u)?;

        let total = self.horizon.n_ctrl * m;
        let mut grad = vec![0.0; u.len()];
        let mut hval = vec![0.0; q];
        let mut cjac = vec![0.0; q * n];
        let out_grad = |k: usize, hval: &mut [f64], cjac: &mut [f64], acc: &mut [f64]| {
            let x = &states[k * n..(k + 1) * n];
            self.sys.output(x, hval);
            self.sys.output_jacobian(x, cjac);
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..q {
                    s += cjac[i * n + j] * hval[i];
                }
                acc[j] += 2.0 * self.weights[k] * s;
            }
        };

        let mut lam = vec![0.0; n];
        out_grad(total, &mut hval, &mut cjac, &mut lam);

        let mut rk = Rk4::new(n);
        let mut jac = vec![vec![0.0; n * n]; 4];
        let mut gmat = vec![vec![0.0; n * q]; 4];
        let mut mu = vec![vec![0.0; n]; 4];
        let mut tmp = vec![0.0; n];
        for step in (0..total).rev() {
            let j = step / m;
            let uj = &u[j * q..(j + 1) * q];
            let mut x = states[step * n..(step + 1) * n].to_vec();
            rk.step(self.sys, &mut x, uj, h);
            for s in 0..4 {
                self.sys.state_jacobian(&rk.z[s], uj, &mut jac[s]);
                self.sys.input_matrix(&rk.z[s], &mut gmat[s]);
            }
            // aᵀμ for a row-major n×n Jacobian.
            let at_mul = |a: &[f64], v: &[f64], out: &mut [f64]| {
                for c in 0..n {
                    let mut s = 0.0;
                    for r in 0..n {
                        s += a[r * n + c] * v[r];
                    }
                    out[c] = s;
                }
            };
            // μ₄ = h/6 λ
            for i in 0..n {
                mu[3][i] = h / 6.0 * lam[i];
            }
            // μ₃ = h/3 λ + h a₄ᵀμ₄
            at_mul(&jac[3], &mu[3], &mut tmp);
            for i in 0..n {
                mu[2][i] = h / 3.0 * lam[i] + h * tmp[i];
            }
            // μ₂ = h/3 λ + h/2 a₃ᵀμ₃
            at_mul(&jac[2], &mu[2], &mut tmp);
            for i in 0..n {
                mu[1][i] = h / 3.0 * lam[i] + 0.5 * h * tmp[i];
            }
            // μ₁ = h/6 λ + h/2 a₂ᵀμ₂
            at_mul(&jac[1], &mu[1], &mut tmp);
            for i in 0..n {
                mu[0][i] = h / 6.0 * lam[i] + 0.5 * h * tmp[i];
            }
            let mut new_lam = lam.clone();
            for s in 0..4 {
                at_mul(&jac[s], &mu[s], &mut tmp);
                for i in 0..n {
                    new_lam[i] += tmp[i];
                }
                for c in 0..q {
                    let mut acc = 0.0;
                    for r in 0..n {
                        acc += gmat[s][r * q + c] * mu[s][r];
                    }
                    grad[j * q + c] += acc;
                }
            }
            lam = new_lam;
            out_grad(step, &mut hval, &mut cjac, &mut lam);
        }
        let reg = 2.0 * self.epsilon * self.horizon.dt_ctrl();
        for (g, v) in grad.iter_mut().zip(u) {
            *g += reg * v;
        }
        Ok((cost, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_polynomials() {
        for m in 1..=8 {
            let w = local_weights(m);
            let h = 1.0 / m as f64;
            let deg = if m == 1 { 1 } else { 3 };
            for p in 0..=deg {
                let approx: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(i, wi)| wi * h * (i as f64 * h).powi(p))
                    .sum();
                assert!((approx - 1.0 / (p + 1) as f64).abs() < 1e-13, "m={m} p={p}");
            }
        }
    }

    #[test]
    fn global_weights_sum_to_horizon() {
        let hz = HorizonSpec::new(2.5, 7, 5).unwrap();
        let total: f64 = global_weights(&hz).iter().sum();
        assert!((total - 2.5).abs() < 1e-13);
    }
}
