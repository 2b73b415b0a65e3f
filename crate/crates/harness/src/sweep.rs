//! Parallel sweeps over the scenario grid.

use cheapctl_core::certificates::{certify_horizon, CertificateOptions, SampledHorizonCertificate};
use cheapctl_core::ocp::HorizonSpec;
use cheapctl_core::rhc_vi::{classify_stability, run_rhc, ClosedLoopTrace, StabilityVerdict};
use cheapctl_core::systems::classify_phase;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Result, Scenario};

/// Verdict label of cells whose run returned an error.
pub const FAILED: &str = "failed";

/// One grid cell. Optional fields are empty when they do not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub system: String,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub x0_id: usize,
    pub verdict: String,
    /// `1` stabilized, `−1` diverged, `0` inconclusive or failed.
    pub code: i8,
    pub lambda: Option<f64>,
    pub m: Option<f64>,
    pub escape_time: Option<f64>,
    /// Running cost accumulated along the closed loop.
    pub cost: Option<f64>,
    pub final_norm: Option<f64>,
    pub solves: usize,
    pub iterations: usize,
    pub unconverged: usize,
    pub max_grad_norm: Option<f64>,
    /// Certified threshold for this `(system, ε, Δt)`, when one was built.
    pub t_star: Option<f64>,
    pub certified: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub scenario: String,
    pub seed: u64,
    /// Grid order: system, then ε, then T, then x₀, each in list order.
    pub rows: Vec<SweepRow>,
}

/// Outcome of a certificate attempt for one `(system, ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub system: String,
    pub epsilon: f64,
    pub certificate: Option<SampledHorizonCertificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub result: SweepResult,
    pub certificates: Vec<CertificateEntry>,
}

impl SweepResult {
    /// Certified cells whose verdict is not stabilized.
    pub fn counterexamples(&self) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.certified && r.code != 1)
            .collect()
    }

    pub fn certified_count(&self) -> usize {
        self.rows.iter().filter(|r| r.certified).count()
    }
}

fn certificate_entry(sc: &Scenario, sys_idx: usize, epsilon: f64) -> CertificateEntry {
    let name = sc.systems[sys_idx].clone();
    let attempt = || -> Result<SampledHorizonCertificate> {
        let sys = sc.builtin(sys_idx)?;
        let model = sys.normal_form();
        let proxy = HorizonSpec::new(
            sc.cert_proxy_t,
            sc.n_ctrl(sc.cert_proxy_t)
                .unwrap_or_else(|| cheapctl_core::ocp::default_n_ctrl(sc.cert_proxy_t)),
            sc.n_int,
        )?;
        let opts = CertificateOptions {
            seed: sc.seed,
            ..CertificateOptions::default()
        };
        Ok(certify_horizon(
            &sys,
            &model,
            epsilon,
            sc.dt,
            proxy,
            sc.cert_samples,
            &opts,
        )?)
    };
    match attempt() {
        Ok(c) => CertificateEntry {
            system: name,
            epsilon,
            certificate: Some(c),
            error: None,
        },
        Err(e) => CertificateEntry {
            system: name,
            epsilon,
            certificate: None,
            error: Some(e.to_string()),
        },
    }
}

fn verdict_row(base: SweepRow, trace: &ClosedLoopTrace, verdict: StabilityVerdict) -> SweepRow {
    let reports = &trace.per_step_reports;
    let (m, lambda, escape) = match verdict {
        StabilityVerdict::Stabilized { m, lambda } => (Some(m), Some(lambda), None),
        StabilityVerdict::Diverged { escape_time } => (None, None, Some(escape_time)),
        StabilityVerdict::Inconclusive => (None, None, None),
    };
    SweepRow {
        verdict: verdict.kind().to_string(),
        code: verdict.code(),
        lambda,
        m,
        escape_time: escape,
        cost: trace.accumulated_cost.last().copied(),
        final_norm: trace.dense_states.last().map(|x| x.norm()),
        solves: reports.len(),
        iterations: reports.iter().map(|r| r.iterations).sum(),
        unconverged: reports.iter().filter(|r| !r.converged).count(),
        max_grad_norm: reports.iter().map(|r| r.grad_norm).reduce(f64::max),
        ..base
    }
}

fn run_cell(
    sc: &Scenario,
    sys_idx: usize,
    epsilon: f64,
    horizon: f64,
    x0_id: usize,
    t_star: Option<f64>,
) -> SweepRow {
    let base = SweepRow {
        system: sc.systems[sys_idx].clone(),
        epsilon,
        horizon,
        dt: sc.dt,
        x0_id,
        verdict: FAILED.to_string(),
        code: 0,
        lambda: None,
        m: None,
        escape_time: None,
        cost: None,
        final_norm: None,
        solves: 0,
        iterations: 0,
        unconverged: 0,
        max_grad_norm: None,
        t_star,
        certified: t_star.is_some_and(|ts| horizon > ts),
        error: String::new(),
    };
    let cfg = sc.rhc_config(epsilon, horizon);
    let outcome = sc
        .builtin(sys_idx)
        .and_then(|sys| Ok(run_rhc(&sys, &cfg, &sc.x0(x0_id))?));
    match outcome {
        Ok(trace) => {
            let verdict = classify_stability(&trace, &cfg);
            verdict_row(base, &trace, verdict)
        }
        Err(e) => SweepRow {
            // One physical line per record keeps the `#` metadata unambiguous.
            error: e.to_string().replace(['\n', '\r'], " "),
            ..base
        },
    }
}

/// Runs every grid cell on the current rayon pool and merges the rows in grid
/// order. A cell whose run fails is recorded with verdict `failed`; the sweep
/// itself only fails on an invalid scenario.
pub fn run_sweep(scenario: &Scenario) -> Result<SweepRun> {
    scenario.validate()?;
    let mut certificates = Vec::new();
    if scenario.certify {
        let pairs: Vec<(usize, f64)> = (0..scenario.systems.len())
            .flat_map(|s| scenario.epsilon_list.iter().map(move |&e| (s, e)))
            .collect();
        certificates = pairs
            .par_iter()
            .map(|&(s, e)| {
                let sys = scenario.builtin(s);
                let mp = sys.map(|sys| classify_phase(&sys.normal_form(), 1e-8).is_minimum_phase());
                match mp {
                    Ok(true) => certificate_entry(scenario, s, e),
                    Ok(false) => CertificateEntry {
                        system: scenario.systems[s].clone(),
                        epsilon: e,
                        certificate: None,
                        error: Some("not minimum-phase; no certificate applies".into()),
                    },
                    Err(err) => CertificateEntry {
                        system: scenario.systems[s].clone(),
                        epsilon: e,
                        certificate: None,
                        error: Some(err.to_string()),
                    },
                }
            })
            .collect();
    }
    let t_star = |s: usize, e_idx: usize| -> Option<f64> {
        let n_eps = scenario.epsilon_list.len();
        certificates
            .get(s * n_eps + e_idx)
            .and_then(|c| c.certificate.as_ref())
            .map(|c| c.bound.t_star)
    };
    let mut cells = Vec::new();
    for s in 0..scenario.systems.len() {
        for (ei, &e) in scenario.epsilon_list.iter().enumerate() {
            for &t in &scenario.t_list {
                for x in 0..scenario.x0_list.len() {
                    cells.push((s, e, t, x, t_star(s, ei)));
                }
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(s, e, t, x, ts)| run_cell(scenario, s, e, t, x, ts))
        .collect();
    Ok(SweepRun {
        result: SweepResult {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            rows,
        },
        certificates,
    })
}

/// Runs `f` on a dedicated pool with `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| crate::HarnessError::Config {
                    field: "workers".into(),
                    message: e.to_string(),
                })?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
