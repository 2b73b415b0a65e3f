//! Limited-memory BFGS with a bracketing strong-Wolfe line search.

use std::collections::VecDeque;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterationsExceeded,
    /// No step satisfying the sufficient-decrease condition was found.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsParams {
    pub tol_grad: f64,
    pub max_iter: usize,
    pub memory: usize,
}

const C1: f64 = 1e-4;
/// Strong-Wolfe curvature constant. A fairly exact search pays off on the
/// badly conditioned quadratics produced by small control weights.
const C2: f64 = 0.1;
const MAX_LS: usize = 40;

type Trial = (Vec<f64>, f64, Vec<f64>);

/// Bracketing search for a step satisfying the strong Wolfe conditions, with
/// quadratic (value) and secant (slope) interpolation. Falls back to the best
/// sufficient-decrease point found; `None` if there is none.
fn line_search<F>(
    eval: &mut F,
    x: &[f64],
    f: f64,
    d: &[f64],
    dg0: f64,
    gnorm: f64,
    first: bool,
) -> Result<Option<Trial>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut alpha = if first { 1.0 / gnorm } else { 1.0 };
    // Bracket ends: (step, value, slope).
    let (mut lo, mut f_lo, mut dg_lo) = (0.0_f64, f, dg0);
    let mut hi: Option<(f64, f64, Option<f64>)> = None;
    let mut best: Option<Trial> = None;
    for _ in 0..MAX_LS {
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (ft, gt) = match eval(&xt) {
            Ok(v) => v,
            Err(Error::NonFiniteCost) => (f64::INFINITY, Vec::new()),
            Err(e) => return Err(e),
        };
        if !ft.is_finite() || ft > f + C1 * alpha * dg0 || ft >= f_lo {
            let dgt = (!gt.is_empty()).then(|| dot(d, &gt));
            hi = Some((alpha, ft, dgt));
        } else {
            let dgt = dot(d, &gt);
            if dgt.abs() <= -C2 * dg0 {
                return Ok(Some((xt, ft, gt)));
            }
            let improves = best.as_ref().is_none_or(|b| ft < b.1);
            if dgt > 0.0 {
                hi = Some((alpha, ft, Some(dgt)));
            } else {
                lo = alpha;
                f_lo = ft;
                dg_lo = dgt;
            }
            if improves {
                best = Some((xt, ft, gt));
            }
        }
        alpha = match hi {
            None => {
                // Still descending: extrapolate along the slope secant.
                let cand = if dg_lo > dg0 {
                    lo * dg0 / (dg0 - dg_lo)
                } else {
                    4.0 * lo
                };
                cand.clamp(1.5 * lo, 10.0 * lo)
            }
            Some((a_hi, f_hi, dg_hi)) => {
                let w = a_hi - lo;
                let cand = match dg_hi {
                    Some(dh) if f_hi.is_finite() && dh > 0.0 && dh > dg_lo => {
                        lo - dg_lo * w / (dh - dg_lo)
                    }
                    _ if f_hi.is_finite() => {
                        let denom = 2.0 * (f_hi - f_lo - dg_lo * w);
                        if denom > 0.0 {
                            lo - dg_lo * w * w / denom
                        } else {
                            lo + 0.5 * w
                        }
                    }
                    _ => lo + 0.5 * w,
                };
                cand.clamp(lo + 0.1 * w, a_hi - 0.1 * w)
            }
        };
        if let Some((a_hi, _, _)) = hi {
            if (a_hi - lo) <= 1e-14 * a_hi.max(1.0) {
                break;
            }
        }
    }
    Ok(best)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimises `eval`, which returns `(f, ∇f)`. A `NonFiniteCost` error during
/// the line search is treated as `f = +∞`; any other error is propagated.
pub(crate) fn minimize<F>(mut eval: F, x0: Vec<f64>, params: LbfgsParams) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = eval(&x)?;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    loop {
        let gnorm = norm(&g);
        if gnorm <= params.tol_grad {
            return Ok(LbfgsOutcome {
                x,
                f,
                grad_norm: gnorm,
                iterations,
                status: SolveStatus::Converged,
            });
        }
        if iterations >= params.max_iter {
            return Ok(LbfgsOutcome {
                x,
                f,
                grad_norm: gnorm,
                iterations,
                status: SolveStatus::MaxIterationsExceeded,
            });
        }

        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for i in 0..n {
                d[i] += (a - b) * s[i];
            }
        }
        let mut dg0 = dot(&d, &g);
        if !(dg0 < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            dg0 = -gnorm * gnorm;
        }

        let Some((xn, fn_, gn)) = line_search(&mut eval, &x, f, &d, dg0, gnorm, pairs.is_empty())?
        else {
            return Ok(LbfgsOutcome {
                x,
                f,
                grad_norm: gnorm,
                iterations,
                status: SolveStatus::LineSearchStalled,
            });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if pairs.len() == params.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fn_;
        g = gn;
        iterations += 1;
    }
}
