//! `cheapctl` subcommands.
//!
//! Exit codes: `0` success, `1` a check failed (or a run could not be
//! completed), `2` invalid configuration or arguments.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use cheapctl_core::certificates::{certify_horizon, horizon_bound, CertificateOptions};
use cheapctl_core::ocp::HorizonSpec;
use cheapctl_core::rhc_vi::{
    classify_stability, rhc_vi_gain_agreement, run_rhc, trace_table, vi_recursion_linear,
    write_trace_csv, StabilityVerdict,
};
use cheapctl_core::systems::{BuiltinSystem, ControlAffineSystem};
use clap::{Args, Parser, Subcommand};

use crate::output::{emit_phase_diagram, write_json, write_sweep_file};
use crate::sweep::{run_sweep, with_workers};
use crate::verify::{dre_value, VI_TOL};
use crate::{HarnessError, Result, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const SCENARIO_COPY: &str = "scenario.cfg";

#[derive(Debug, Parser)]
#[command(
    name = "cheapctl",
    version,
    about = "Cheap-control receding-horizon experiments"
)]
pub struct Cli {
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "CHEAPCTL_WORKERS")]
    pub workers: Option<usize>,
    /// Seed for sampled checks; overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One closed-loop run; writes the trace CSV.
    Simulate(SimulateArgs),
    /// Runs a scenario grid; writes the sweep CSV and phase diagrams.
    Sweep(SweepArgs),
    /// Evaluates the horizon bound from constants or a built certificate.
    Bound(BoundArgs),
    /// Compares value iteration with the Riccati equation on a linear plant.
    ViCompare(ViCompareArgs),
    /// Runs the invariant suites.
    Verify,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario supplying defaults (first list entries) and solver settings.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Prediction horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial state, comma separated.
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub sim_time: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub alpha_v: Option<f64>,
    #[arg(long)]
    pub alpha_w_hi: Option<f64>,
    #[arg(long)]
    pub alpha_w_lo: Option<f64>,
    #[arg(long)]
    pub k_w: Option<f64>,
    /// Sampling interval Δt.
    #[arg(long)]
    pub dt: f64,
    /// Build the certificate for this builtin instead of taking constants.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Horizon of the finite-horizon proxy for the infinite-horizon value.
    #[arg(long, default_value_t = 20.0)]
    pub proxy_t: f64,
    /// Control interval of the proxy solves.
    #[arg(long)]
    pub ctrl_step: Option<f64>,
    /// Samples for the value-growth estimate.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    /// Also write the result as JSON into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ViCompareArgs {
    #[arg(long, default_value = "linear_nmp")]
    pub system: String,
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.25)]
    pub dt: f64,
    /// Number of Bellman steps; step j is compared with the horizon jΔt.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = VI_TOL)]
    pub tol: f64,
}

fn config(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<i32> {
    let mut sc = match &args.scenario {
        Some(p) => Scenario::from_path(p)?,
        None => Scenario::default(),
    };
    if let Some(s) = &args.system {
        sc.systems = vec![s.clone()];
    }
    sc.systems.truncate(1);
    if let Some(e) = args.epsilon {
        sc.epsilon_list = vec![e];
    }
    sc.epsilon_list.truncate(1);
    if let Some(t) = args.horizon {
        sc.t_list = vec![t];
    }
    sc.t_list.truncate(1);
    if let Some(dt) = args.dt {
        sc.dt = dt;
    }
    if let Some(x0) = &args.x0 {
        sc.x0_list = vec![x0
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| config("x0", format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?];
    }
    sc.x0_list.truncate(1);
    if let Some(t) = args.sim_time {
        sc.sim_time = t;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate()?;
    let sys = sc.builtin(0)?;
    let cfg = sc.rhc_config(sc.epsilon_list[0], sc.t_list[0]);
    let trace = run_rhc(&sys, &cfg, &sc.x0(0))?;
    let verdict = classify_stability(&trace, &cfg);
    create_dir(&args.out)?;
    let path = args.out.join(TRACE_FILE);
    let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    write_trace_csv(&trace_table(&trace), file)?;
    let detail = match verdict {
        StabilityVerdict::Stabilized { m, lambda } => format!(", M = {m:.4}, lambda = {lambda:.4}"),
        StabilityVerdict::Diverged { escape_time } => format!(", escape at t = {escape_time:.4}"),
        StabilityVerdict::Inconclusive => String::new(),
    };
    println!(
        "{} eps={:e} T={} dt={}: {} (code {}){detail}",
        sys.name(),
        cfg.epsilon,
        cfg.horizon,
        cfg.dt,
        verdict.kind(),
        verdict.code(),
    );
    println!("trace written to {}", path.display());
    Ok(EXIT_OK)
}

fn sweep(args: &SweepArgs, workers: Option<usize>, seed: Option<u64>) -> Result<i32> {
    let mut sc = Scenario::from_path(&args.scenario)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let run = with_workers(workers, || run_sweep(&sc))??;
    create_dir(&args.out)?;
    write_sweep_file(&run.result, &args.out.join(SWEEP_FILE))?;
    emit_phase_diagram(&run.result, &args.out)?;
    let copy = args.out.join(SCENARIO_COPY);
    std::fs::write(&copy, sc.to_text()).map_err(|e| HarnessError::io(&copy, e))?;
    if sc.certify {
        write_json(&run.certificates, &args.out.join(CERTIFICATES_FILE))?;
    }
    let count = |kind: &str| run.result.rows.iter().filter(|r| r.verdict == kind).count();
    println!(
        "{}: {} cells, {} stabilized, {} diverged, {} inconclusive, {} failed",
        sc.name,
        run.result.rows.len(),
        count("stabilized"),
        count("diverged"),
        count("inconclusive"),
        count(crate::sweep::FAILED)
    );
    if sc.certify {
        for c in &run.certificates {
            match (&c.certificate, &c.error) {
                (Some(cert), _) => println!(
                    "  {} eps={:e}: T* = {:.4} (alpha_V ~ {:.3e})",
                    c.system, c.epsilon, cert.bound.t_star, cert.bound.alpha_v
                ),
                (None, Some(e)) => {
                    println!("  {} eps={:e}: no certificate ({e})", c.system, c.epsilon)
                }
                (None, None) => {}
            }
        }
        let bad = run.result.counterexamples();
        println!(
            "certified cells (T > T*): {}, not stabilized among them: {}",
            run.result.certified_count(),
            bad.len()
        );
        if !bad.is_empty() {
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    Ok(EXIT_OK)
}

fn bound(args: &BoundArgs, seed: Option<u64>) -> Result<i32> {
    let constants = [args.alpha_v, args.alpha_w_hi, args.alpha_w_lo, args.k_w];
    let hb = match (&args.system, constants.iter().all(Option::is_some)) {
        (None, true) => horizon_bound(
            args.alpha_v.unwrap_or_default(),
            args.alpha_w_hi.unwrap_or_default(),
            args.alpha_w_lo.unwrap_or_default(),
            args.k_w.unwrap_or_default(),
            args.dt,
        )
        .map_err(|e| config("constants", e.to_string()))?,
        (Some(name), false) if constants.iter().all(Option::is_none) => {
            let eps = args
                .epsilon
                .ok_or_else(|| config("epsilon", "required with --system"))?;
            let sys = BuiltinSystem::from_name(name, &Default::default())
                .map_err(|e| config("system", e.to_string()))?;
            let n_ctrl = args.ctrl_step.map_or_else(
                || cheapctl_core::ocp::default_n_ctrl(args.proxy_t),
                |h| ((args.proxy_t / h).ceil() as usize).max(1),
            );
            let proxy = HorizonSpec::new(args.proxy_t, n_ctrl, cheapctl_core::ocp::DEFAULT_N_INT)?;
            let opts = CertificateOptions {
                seed: seed.unwrap_or(0),
                ..CertificateOptions::default()
            };
            let cert = certify_horizon(&sys, &sys.normal_form(), eps, args.dt, proxy, args.samples, &opts)?;
            println!(
                "{name} eps={eps:e}: eps_tilde = {:.6e}, alpha_V ~ {:.6e}, alpha_W in [{:.6e}, {:.6e}], K_W = {:.6e}",
                cert.epsilon_tilde, cert.bound.alpha_v, cert.bound.alpha_w_lo, cert.bound.alpha_w_hi, cert.bound.k_w
            );
            if let Some(dir) = &args.out {
                create_dir(dir)?;
                write_json(&cert, &dir.join("bound.json"))?;
            }
            cert.bound
        }
        _ => {
            return Err(config(
                "bound",
                "give either all of --alpha-v --alpha-w-hi --alpha-w-lo --k-w, or --system with --epsilon",
            ))
        }
    };
    println!("M(dt) = {:.6}", hb.m_dt);
    println!("T* = {:.6}", hb.t_star);
    if let (Some(dir), None) = (&args.out, &args.system) {
        create_dir(dir)?;
        write_json(&hb, &dir.join("bound.json"))?;
    }
    Ok(EXIT_OK)
}

fn vi_compare(args: &ViCompareArgs) -> Result<i32> {
    let sys = BuiltinSystem::from_name(&args.system, &Default::default())
        .map_err(|e| config("system", e.to_string()))?;
    let lm = sys
        .linear_matrices()
        .ok_or_else(|| config("system", format!("{} is not a linear plant", args.system)))?;
    if args.k == 0 {
        return Err(config("k", "must be at least 1"));
    }
    if !(args.dt > 0.0) {
        return Err(config("dt", "must be positive"));
    }
    println!("{:>3} {:>8} {:>14}", "k", "T", "max|P_VI-P_DRE|");
    let mut worst: f64 = 0.0;
    for k in 1..=args.k {
        let t = k as f64 * args.dt;
        let p_vi = vi_recursion_linear(&lm.a, &lm.b, &lm.c, args.epsilon, args.dt, k)?;
        let gap = (p_vi - dre_value(&lm, args.epsilon, t)?).amax();
        worst = worst.max(gap);
        println!("{k:>3} {t:>8.4} {gap:>14.3e}");
    }
    let gain = rhc_vi_gain_agreement(&lm.a, &lm.b, &lm.c, args.epsilon, args.dt, args.k, 50)?;
    println!("max |P_k - P_DRE| = {worst:.3e} (tol {:e})", args.tol);
    println!("RHC/VI gain schedule relative gap on [0, dt] = {gain:.3e}");
    Ok(if worst < args.tol {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn verify(seed: Option<u64>) -> Result<i32> {
    let outcomes = crate::verify::run_all(seed.unwrap_or(0))?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    Ok(if outcomes.iter().all(|o| o.passed) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Sweep(a) => sweep(a, cli.workers, cli.seed),
        Command::Bound(a) => bound(a, cli.seed),
        Command::ViCompare(a) => vi_compare(a),
        Command::Verify => verify(cli.seed),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_CHECK_FAILED
            }
        }
    }
}
