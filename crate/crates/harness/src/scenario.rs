//! Flat key-value scenario files.
//!
//! One `key = value` pair per line; `#` starts a comment. Scalar lists are
//! comma separated, `x0_list` separates vectors with `;` and components with
//! `,`. Example:
//!
//! ```text
//! name = nmp_small_eps
//! system = linear_nmp
//! epsilon_list = 1e-1, 1e-2, 1e-3
//! T_list = 0.25, 4
//! dt = 0.25
//! x0_list = 0, 1
//! sim_time = 20
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cheapctl_core::ocp::{InitialGuess, SolveOptions, DEFAULT_MAX_ITER, DEFAULT_TOL_GRAD};
use cheapctl_core::rhc_vi::RHCConfig;
use cheapctl_core::systems::{BuiltinSystem, ControlAffineSystem};
use nalgebra::DVector;

use crate::{HarnessError, Result};

/// Keys forwarded to the builtin constructor.
pub const SYSTEM_PARAMS: [&str; 3] = ["K", "beta1", "beta2"];

const DEFAULT_CERT_SAMPLES: usize = 8;
const DEFAULT_CERT_PROXY_T: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Builtin names; the sweep runs every system on the same grid.
    pub systems: Vec<String>,
    pub params: BTreeMap<String, f64>,
    pub epsilon_list: Vec<f64>,
    pub t_list: Vec<f64>,
    pub dt: f64,
    pub x0_list: Vec<Vec<f64>>,
    pub sim_time: f64,
    pub settle_radius: Option<f64>,
    pub diverge_radius: Option<f64>,
    /// Length of one control interval; the default grid is used when absent.
    pub ctrl_step: Option<f64>,
    pub n_int: usize,
    pub tol_grad: f64,
    pub max_iter: usize,
    pub init: InitialGuess,
    /// Build a horizon certificate per `(system, ε)` and flag cells with `T > T*`.
    pub certify: bool,
    pub cert_samples: usize,
    pub cert_proxy_t: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            systems: Vec::new(),
            params: BTreeMap::new(),
            epsilon_list: Vec::new(),
            t_list: Vec::new(),
            dt: 0.0,
            x0_list: Vec::new(),
            sim_time: cheapctl_core::rhc_vi::DEFAULT_SIM_TIME,
            settle_radius: None,
            diverge_radius: None,
            ctrl_step: None,
            n_int: cheapctl_core::ocp::DEFAULT_N_INT,
            tol_grad: DEFAULT_TOL_GRAD,
            max_iter: DEFAULT_MAX_ITER,
            init: InitialGuess::Zero,
            certify: false,
            cert_samples: DEFAULT_CERT_SAMPLES,
            cert_proxy_t: DEFAULT_CERT_PROXY_T,
            seed: 0,
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_f64(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| config_err(field, format!("`{}` is not a number", s.trim())))
}

fn parse_usize(field: &str, s: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| {
        config_err(
            field,
            format!("`{}` is not a nonnegative integer", s.trim()),
        )
    })
}

fn parse_list(field: &str, s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .enumerate()
        .map(|(i, v)| parse_f64(&format!("{field}[{i}]"), v))
        .collect()
}

fn parse_vectors(field: &str, s: &str) -> Result<Vec<Vec<f64>>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .enumerate()
        .map(|(i, v)| parse_list(&format!("{field}[{i}]"), v))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("scenario", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates a scenario document.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(&format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(config_err(key, "duplicate key"));
            }
            match key {
                "name" => sc.name = value.to_string(),
                "system" => {
                    sc.systems = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }
                k if SYSTEM_PARAMS.contains(&k) => {
                    sc.params.insert(k.to_string(), parse_f64(k, value)?);
                }
                "epsilon_list" => sc.epsilon_list = parse_list(key, value)?,
                "T_list" => sc.t_list = parse_list(key, value)?,
                "dt" => sc.dt = parse_f64(key, value)?,
                "x0_list" => sc.x0_list = parse_vectors(key, value)?,
                "sim_time" => sc.sim_time = parse_f64(key, value)?,
                "settle_radius" => sc.settle_radius = Some(parse_f64(key, value)?),
                "diverge_radius" => sc.diverge_radius = Some(parse_f64(key, value)?),
                "ctrl_step" => sc.ctrl_step = Some(parse_f64(key, value)?),
                "n_int" => sc.n_int = parse_usize(key, value)?,
                "tol_grad" => sc.tol_grad = parse_f64(key, value)?,
                "max_iter" => sc.max_iter = parse_usize(key, value)?,
                "init" => {
                    sc.init = match value {
                        "zero" => InitialGuess::Zero,
                        "lqr" => InitialGuess::Lqr,
                        other => {
                            return Err(config_err(
                                key,
                                format!("`{other}` is not one of zero, lqr"),
                            ))
                        }
                    }
                }
                "certify" => {
                    sc.certify = value
                        .parse::<bool>()
                        .map_err(|_| config_err(key, "expected true or false"))?
                }
                "cert_samples" => sc.cert_samples = parse_usize(key, value)?,
                "cert_proxy_T" => sc.cert_proxy_t = parse_f64(key, value)?,
                "seed" => {
                    sc.seed = value
                        .parse::<u64>()
                        .map_err(|_| config_err(key, "expected an unsigned integer"))?
                }
                other => return Err(config_err(other, "unknown key")),
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Canonical text form; `parse(to_text(s)) == s`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "system = {}", self.systems.join(", "));
        for (k, v) in &self.params {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        let _ = writeln!(out, "epsilon_list = {}", fmt_list(&self.epsilon_list));
        let _ = writeln!(out, "T_list = {}", fmt_list(&self.t_list));
        let _ = writeln!(out, "dt = {:?}", self.dt);
        let x0: Vec<String> = self.x0_list.iter().map(|v| fmt_list(v)).collect();
        let _ = writeln!(out, "x0_list = {}", x0.join("; "));
        let _ = writeln!(out, "sim_time = {:?}", self.sim_time);
        if let Some(v) = self.settle_radius {
            let _ = writeln!(out, "settle_radius = {v:?}");
        }
        if let Some(v) = self.diverge_radius {
            let _ = writeln!(out, "diverge_radius = {v:?}");
        }
        if let Some(v) = self.ctrl_step {
            let _ = writeln!(out, "ctrl_step = {v:?}");
        }
        let _ = writeln!(out, "n_int = {}", self.n_int);
        let _ = writeln!(out, "tol_grad = {:?}", self.tol_grad);
        let _ = writeln!(out, "max_iter = {}", self.max_iter);
        let init = match self.init {
            InitialGuess::Zero => "zero",
            InitialGuess::Lqr => "lqr",
        };
        let _ = writeln!(out, "init = {init}");
        let _ = writeln!(out, "certify = {}", self.certify);
        let _ = writeln!(out, "cert_samples = {}", self.cert_samples);
        let _ = writeln!(out, "cert_proxy_T = {:?}", self.cert_proxy_t);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |field: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(
                    field,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        {
            return Err(config_err(
                "name",
                "must be nonempty and use only [A-Za-z0-9_.-]",
            ));
        }
        if self.systems.is_empty() {
            return Err(config_err("system", "must name at least one builtin"));
        }
        for (list, field) in [
            (&self.epsilon_list, "epsilon_list"),
            (&self.t_list, "T_list"),
        ] {
            if list.is_empty() {
                return Err(config_err(field, "must be nonempty"));
            }
            for (i, v) in list.iter().enumerate() {
                pos(&format!("{field}[{i}]"), *v)?;
            }
        }
        if self.x0_list.is_empty() {
            return Err(config_err("x0_list", "must be nonempty"));
        }
        pos("dt", self.dt)?;
        let t_min = self.t_list.iter().copied().fold(f64::INFINITY, f64::min);
        let t_max = self.t_list.iter().copied().fold(0.0, f64::max);
        if self.dt > t_min {
            return Err(config_err(
                "dt",
                format!("must not exceed min(T_list) = {t_min}"),
            ));
        }
        pos("sim_time", self.sim_time)?;
        if self.sim_time < t_max {
            return Err(config_err(
                "sim_time",
                format!("must be at least max(T_list) = {t_max}"),
            ));
        }
        if let Some(v) = self.settle_radius {
            pos("settle_radius", v)?;
        }
        if let Some(v) = self.diverge_radius {
            pos("diverge_radius", v)?;
            if let Some(s) = self.settle_radius {
                if v <= s {
                    return Err(config_err("diverge_radius", "must exceed settle_radius"));
                }
            }
        }
        if let Some(v) = self.ctrl_step {
            pos("ctrl_step", v)?;
        }
        if self.n_int == 0 {
            return Err(config_err("n_int", "must be at least 1"));
        }
        pos("tol_grad", self.tol_grad)?;
        if self.max_iter == 0 {
            return Err(config_err("max_iter", "must be at least 1"));
        }
        if self.cert_samples == 0 {
            return Err(config_err("cert_samples", "must be at least 1"));
        }
        pos("cert_proxy_T", self.cert_proxy_t)?;
        for (i, name) in self.systems.iter().enumerate() {
            let sys = BuiltinSystem::from_name(name, &self.params)
                .map_err(|e| config_err(&format!("system[{i}]"), e.to_string()))?;
            for (j, x0) in self.x0_list.iter().enumerate() {
                if x0.len() != sys.state_dim() {
                    return Err(config_err(
                        &format!("x0_list[{j}]"),
                        format!(
                            "{name} has state dimension {}, got {}",
                            sys.state_dim(),
                            x0.len()
                        ),
                    ));
                }
                if x0.iter().any(|v| !v.is_finite()) {
                    return Err(config_err(&format!("x0_list[{j}]"), "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn builtin(&self, index: usize) -> Result<BuiltinSystem> {
        let name = self
            .systems
            .get(index)
            .ok_or_else(|| config_err("system", format!("no system at index {index}")))?;
        BuiltinSystem::from_name(name, &self.params)
            .map_err(|e| config_err(&format!("system[{index}]"), e.to_string()))
    }

    pub fn x0(&self, index: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.x0_list[index])
    }

    /// Control intervals for a horizon of length `t`.
    pub fn n_ctrl(&self, t: f64) -> Option<usize> {
        self.ctrl_step
            .map(|h| ((t / h - 1e-9).ceil() as usize).max(1))
    }

    pub fn solver(&self) -> SolveOptions {
        SolveOptions {
            tol_grad: self.tol_grad,
            max_iter: self.max_iter,
            fallback_init: self.init,
            ..SolveOptions::default()
        }
    }

    pub fn rhc_config(&self, epsilon: f64, horizon: f64) -> RHCConfig {
        let mut cfg = RHCConfig::new(horizon, self.dt, epsilon);
        cfg.sim_time = self.sim_time;
        cfg.settle_radius = self.settle_radius;
        cfg.diverge_radius = self.diverge_radius;
        cfg.n_ctrl = self.n_ctrl(horizon);
        cfg.n_int = self.n_int;
        cfg.solver = self.solver();
        cfg
    }
}
