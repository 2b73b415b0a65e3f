//! Empirical contraction of the composite function `Y_T = W + V_T` along a
//! receding-horizon run.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{fast_slow_state, DetectabilityCertificate};
use crate::rhc_vi::{run_rhc, RHCConfig};
use crate::systems::{ControlAffineSystem, NormalFormModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub sample_times: Vec<f64>,
    /// `Y_T(x(t_k))` at every sample with a solve.
    pub y: Vec<f64>,
    /// `Y(t_{k+1}) / Y(t_k)` for consecutive samples with `Y(t_k) > 0`.
    pub ratios: Vec<f64>,
    pub max_ratio: Option<f64>,
    /// The run left the divergence radius.
    pub diverged: bool,
    /// `x0 = 0`: nothing to contract.
    pub trivial: bool,
    pub passed: bool,
}

/// Runs the loop from `x0` and evaluates `Y_T = W + V_T` at each sample,
/// with `V_T` the optimal cost of the solve at that sample. Passes iff every
/// ratio is below one and the run did not diverge.
pub fn check_composite_decay(
    system: &dyn ControlAffineSystem,
    model: &dyn NormalFormModel,
    config: &RHCConfig,
    certificate: &DetectabilityCertificate,
    x0: &DVector<f64>,
) -> Result<DecayReport> {
    let r = model.relative_degree() as i32;
    let eps = certificate.epsilon_tilde.powi(2 * r);
    if ((config.epsilon - eps) / eps).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "certificate was built for epsilon = {eps}, loop uses {}",
            config.epsilon
        )));
    }
    if x0.iter().all(|v| *v == 0.0) {
        return Ok(DecayReport {
            sample_times: vec![0.0],
            y: vec![0.0],
            ratios: Vec::new(),
            max_ratio: None,
            diverged: false,
            trivial: true,
            passed: true,
        });
    }
    let trace = run_rhc(system, config, x0)?;
    let mut y = Vec::with_capacity(trace.per_step_reports.len());
    let mut times = Vec::with_capacity(y.capacity());
    for (k, report) in trace.per_step_reports.iter().enumerate() {
        let z = fast_slow_state(model, certificate.epsilon_tilde, &trace.sample_states[k])?;
        y.push(certificate.w(&z) + report.cost);
        times.push(trace.sample_times[k]);
    }
    let ratios: Vec<f64> = y
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let max_ratio = ratios.iter().copied().reduce(f64::max);
    let passed = !trace.diverged && ratios.iter().all(|r| *r < 1.0);
    Ok(DecayReport {
        sample_times: times,
        y,
        ratios,
        max_ratio,
        diverged: trace.diverged,
        trivial: false,
        passed,
    })
}
