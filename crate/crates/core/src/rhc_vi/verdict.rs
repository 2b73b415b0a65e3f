use super::{ClosedLoopTrace, RHCConfig};

/// Cap reported for the decay rate of traces that vanish exactly.
pub const LAMBDA_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityVerdict {
    /// `‖x(t)‖ ≲ M e^{−λt} ‖x₀‖` fitted on the decaying tail.
    Stabilized {
        m: f64,
        lambda: f64,
    },
    Diverged {
        escape_time: f64,
    },
    Inconclusive,
}

impl StabilityVerdict {
    /// `1` stabilized, `−1` diverged, `0` inconclusive.
    pub fn code(&self) -> i8 {
        match self {
            StabilityVerdict::Stabilized { .. } => 1,
            StabilityVerdict::Diverged { .. } => -1,
            StabilityVerdict::Inconclusive => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StabilityVerdict::Stabilized { .. } => "stabilized",
            StabilityVerdict::Diverged { .. } => "diverged",
            StabilityVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Least-squares fit of `log‖x(t_k)‖ ≈ a − λt_k` over the samples from the
/// peak norm onwards, followed by `M = max_k ‖x_k‖e^{λt_k}/‖x₀‖`.
/// Exactly vanishing traces give `(0, LAMBDA_CAP)`.
pub fn fit_decay(times: &[f64], norms: &[f64]) -> (f64, f64) {
    let peak =
        norms.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    if peak.1 <= 0.0 {
        return (0.0, LAMBDA_CAP);
    }
    let pts: Vec<(f64, f64)> = times[peak.0..]
        .iter()
        .zip(&norms[peak.0..])
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let lambda = if pts.len() < 2 {
        LAMBDA_CAP
    } else {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        if sxx > 0.0 {
            (-sxy / sxx).min(LAMBDA_CAP)
        } else {
            LAMBDA_CAP
        }
    };
    let n0 = norms[0];
    let m = if n0 > 0.0 {
        times
            .iter()
            .zip(norms)
            .map(|(t, v)| v * (lambda * t).exp() / n0)
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    (m, lambda)
}

/// Threshold rules: diverged if the norm ever reaches the divergence radius;
/// stabilized if the run covers `sim_time`, every state in the final 20% of
/// it lies within the settle radius, and the fitted decay rate is positive;
/// inconclusive otherwise.
pub fn classify_stability(trace: &ClosedLoopTrace, config: &RHCConfig) -> StabilityVerdict {
    let Some(x0) = trace.sample_states.first() else {
        return StabilityVerdict::Inconclusive;
    };
    let (diverge, settle) = config.radii(x0);
    for (t, x) in trace.dense_times.iter().zip(&trace.dense_states) {
        let r = x.norm();
        if !r.is_finite() || r >= diverge {
            return StabilityVerdict::Diverged { escape_time: *t };
        }
    }
    let sim_time = config.sim_time;
    if trace.final_time() < sim_time * (1.0 - 1e-9) {
        return StabilityVerdict::Inconclusive;
    }
    let tail_start = 0.8 * sim_time;
    let settled = trace
        .dense_times
        .iter()
        .zip(&trace.dense_states)
        .filter(|(t, _)| **t >= tail_start - 1e-12)
        .all(|(_, x)| x.norm() <= settle);
    if !settled {
        return StabilityVerdict::Inconclusive;
    }
    let norms: Vec<f64> = trace.sample_states.iter().map(|x| x.norm()).collect();
    let (m, lambda) = fit_decay(&trace.sample_times, &norms);
    if lambda > 0.0 {
        StabilityVerdict::Stabilized { m, lambda }
    } else {
        StabilityVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn synthetic(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> ClosedLoopTrace {
        let n = (t_end / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let states = times
            .iter()
            .map(|&t| DVector::from_vec(vec![f(t), 0.0]))
            .collect();
        ClosedLoopTrace::from_samples(times, states)
    }

    fn config() -> RHCConfig {
        RHCConfig::new(0.25, 0.25, 1.0)
    }

    #[test]
    fn zero_trace_is_stabilized_with_capped_rate() {
        let v = classify_stability(&synthetic(|_| 0.0, 20.0, 0.25), &config());
        assert_eq!(
            v,
            StabilityVerdict::Stabilized {
                m: 0.0,
                lambda: LAMBDA_CAP
            }
        );
    }

    #[test]
    fn exponential_growth_diverges() {
        let v = classify_stability(&synthetic(|t| (0.5 * t).exp(), 20.0, 0.25), &config());
        match v {
            StabilityVerdict::Diverged { escape_time } => {
                // e^{0.5t} ≥ 1000 first at t ≥ 2 ln 1000 ≈ 13.8.
                assert!((escape_time - 14.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exponential_decay_is_fitted() {
        let v = classify_stability(
            &synthetic(|t| 2.0 * (-3.0 * t).exp(), 20.0, 0.25),
            &config(),
        );
        match v {
            StabilityVerdict::Stabilized { m, lambda } => {
                assert!((lambda - 3.0).abs() < 0.05);
                assert!((m - 1.0).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slow_decay_is_inconclusive() {
        let v = classify_stability(&synthetic(|t| (-0.05 * t).exp(), 20.0, 0.25), &config());
        assert_eq!(v, StabilityVerdict::Inconclusive);
    }

    #[test]
    fn truncated_run_is_inconclusive() {
        let v = classify_stability(&synthetic(|t| (-3.0 * t).exp(), 10.0, 0.25), &config());
        assert_eq!(v, StabilityVerdict::Inconclusive);
    }
}
