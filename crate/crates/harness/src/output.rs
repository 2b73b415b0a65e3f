//! Versioned CSV outputs.
//!
//! Every file starts with the schema line `# schema=1`; further `#` lines
//! carry `key=value` metadata. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sweep::{SweepResult, SweepRow};
use crate::{HarnessError, Result};

pub const SCHEMA_LINE: &str = "# schema=1";

/// Splits a file into its `# key=value` metadata and the CSV body.
fn split_header(input: impl Read) -> Result<(BTreeMap<String, String>, String)> {
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    let mut schema_seen = false;
    for line in BufReader::new(input).lines() {
        let line = line.map_err(|e| HarnessError::Format(e.to_string()))?;
        if let Some(rest) = line.strip_prefix('#') {
            for pair in rest.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
            if line.trim() == SCHEMA_LINE {
                schema_seen = true;
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    if !schema_seen || meta.get("schema").map(String::as_str) != Some("1") {
        return Err(HarnessError::Format("missing `# schema=1` header".into()));
    }
    Ok((meta, body))
}

fn meta_get<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| HarnessError::Format(format!("missing `{key}` metadata")))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_sweep_csv(result: &SweepResult, mut out: impl Write) -> Result<()> {
    let io = |e| HarnessError::Format(format!("write failed: {e}"));
    writeln!(out, "{SCHEMA_LINE}").map_err(io)?;
    writeln!(out, "# scenario={} seed={}", result.scenario, result.seed).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    for row in &result.rows {
        w.serialize(row)?;
    }
    if result.rows.is_empty() {
        w.write_record(SWEEP_COLUMNS)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

const SWEEP_COLUMNS: [&str; 19] = [
    "system",
    "epsilon",
    "T",
    "dt",
    "x0_id",
    "verdict",
    "code",
    "lambda",
    "m",
    "escape_time",
    "cost",
    "final_norm",
    "solves",
    "iterations",
    "unconverged",
    "max_grad_norm",
    "t_star",
    "certified",
    "error",
];

pub fn read_sweep_csv(input: impl Read) -> Result<SweepResult> {
    let (meta, body) = split_header(input)?;
    let scenario = meta_get(&meta, "scenario")?.to_string();
    let seed = meta_get(&meta, "seed")?
        .parse()
        .map_err(|_| HarnessError::Format("bad seed".into()))?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let rows = rdr.deserialize().collect::<Result<Vec<SweepRow>, _>>()?;
    Ok(SweepResult {
        scenario,
        seed,
        rows,
    })
}

/// Verdict codes of one `(system, x₀)` slice: rows ε, columns T, both in
/// scenario list order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    pub system: String,
    pub x0_id: usize,
    pub epsilons: Vec<f64>,
    pub horizons: Vec<f64>,
    pub codes: Vec<Vec<i8>>,
}

impl PhaseMatrix {
    /// Whether the ε values of column `col` with `code` form a down-set: every
    /// tested ε below a member is a member too.
    pub fn is_down_set(&self, col: usize, code: i8) -> bool {
        let members: Vec<f64> = self
            .epsilons
            .iter()
            .zip(&self.codes)
            .filter(|(_, row)| row[col] == code)
            .map(|(e, _)| *e)
            .collect();
        self.epsilons
            .iter()
            .zip(&self.codes)
            .all(|(e, row)| row[col] == code || members.iter().all(|m| e > m))
    }

    pub fn column(&self, horizon: f64) -> Option<usize> {
        self.horizons.iter().position(|t| *t == horizon)
    }

    pub fn file_name(&self) -> String {
        format!("phase_{}_x0-{}.csv", self.system, self.x0_id)
    }
}

fn push_unique(v: &mut Vec<f64>, x: f64) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// One matrix per `(system, x₀)` in order of first appearance.
pub fn phase_matrices(result: &SweepResult) -> Vec<PhaseMatrix> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in &result.rows {
        let k = (r.system.clone(), r.x0_id);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(system, x0_id)| {
            let rows: Vec<&SweepRow> = result
                .rows
                .iter()
                .filter(|r| r.system == system && r.x0_id == x0_id)
                .collect();
            let mut epsilons = Vec::new();
            let mut horizons = Vec::new();
            for r in &rows {
                push_unique(&mut epsilons, r.epsilon);
                push_unique(&mut horizons, r.horizon);
            }
            let codes = epsilons
                .iter()
                .map(|e| {
                    horizons
                        .iter()
                        .map(|t| {
                            rows.iter()
                                .find(|r| r.epsilon == *e && r.horizon == *t)
                                .map_or(0, |r| r.code)
                        })
                        .collect()
                })
                .collect();
            PhaseMatrix {
                system,
                x0_id,
                epsilons,
                horizons,
                codes,
            }
        })
        .collect()
}

pub fn write_phase_matrix(m: &PhaseMatrix, mut out: impl Write) -> Result<()> {
    let io = |e| HarnessError::Format(format!("write failed: {e}"));
    writeln!(out, "{SCHEMA_LINE}").map_err(io)?;
    writeln!(out, "# system={} x0_id={}", m.system, m.x0_id).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epsilon".to_string()];
    header.extend(m.horizons.iter().map(|t| format!("T={t:?}")));
    w.write_record(&header)?;
    for (e, row) in m.epsilons.iter().zip(&m.codes) {
        let mut rec = vec![format!("{e:?}")];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_phase_matrix(input: impl Read) -> Result<PhaseMatrix> {
    let (meta, body) = split_header(input)?;
    let bad = |what: &str| HarnessError::Format(format!("bad phase matrix {what}"));
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let horizons = rdr
        .headers()?
        .iter()
        .skip(1)
        .map(|h| {
            h.strip_prefix("T=")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad("header"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut epsilons = Vec::new();
    let mut codes = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        epsilons.push(
            rec.get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("row"))?,
        );
        codes.push(
            rec.iter()
                .skip(1)
                .map(|v| v.parse::<i8>().map_err(|_| bad("code")))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(PhaseMatrix {
        system: meta_get(&meta, "system")?.to_string(),
        x0_id: meta_get(&meta, "x0_id")?
            .parse()
            .map_err(|_| bad("x0_id"))?,
        epsilons,
        horizons,
        codes,
    })
}

/// Long-form companion of the matrices: one line per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub system: String,
    pub x0_id: usize,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub code: i8,
}

pub fn phase_entries(result: &SweepResult) -> Vec<PhaseEntry> {
    result
        .rows
        .iter()
        .map(|r| PhaseEntry {
            system: r.system.clone(),
            x0_id: r.x0_id,
            epsilon: r.epsilon,
            horizon: r.horizon,
            dt: r.dt,
            code: r.code,
        })
        .collect()
}

pub fn write_phase_long(entries: &[PhaseEntry], mut out: impl Write) -> Result<()> {
    let io = |e| HarnessError::Format(format!("write failed: {e}"));
    writeln!(out, "{SCHEMA_LINE}").map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_phase_long(input: impl Read) -> Result<Vec<PhaseEntry>> {
    let (_, body) = split_header(input)?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    Ok(rdr.deserialize().collect::<Result<Vec<PhaseEntry>, _>>()?)
}

pub const PHASE_LONG_FILE: &str = "phase_long.csv";

/// Writes one matrix file per `(system, x₀)` and the long-form file into
/// `dir`, returning the paths written.
pub fn emit_phase_diagram(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.rows.is_empty() {
        return Err(HarnessError::Format("sweep result is empty".into()));
    }
    let mut paths = Vec::new();
    for m in phase_matrices(result) {
        let path = dir.join(m.file_name());
        write_phase_matrix(&m, create(&path)?)?;
        paths.push(path);
    }
    let path = dir.join(PHASE_LONG_FILE);
    write_phase_long(&phase_entries(result), create(&path)?)?;
    paths.push(path);
    Ok(paths)
}

pub fn write_sweep_file(result: &SweepResult, path: &Path) -> Result<()> {
    write_sweep_csv(result, create(path)?)
}

pub fn read_sweep_file(path: &Path) -> Result<SweepResult> {
    read_sweep_csv(File::open(path).map_err(|e| HarnessError::io(path, e))?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(system: &str, epsilon: f64, horizon: f64, x0_id: usize, code: i8) -> SweepRow {
        SweepRow {
            system: system.into(),
            epsilon,
            horizon,
            dt: 0.25,
            x0_id,
            verdict: match code {
                1 => "stabilized",
                -1 => "diverged",
                _ => "inconclusive",
            }
            .into(),
            code,
            lambda: (code == 1).then_some(0.1 + 1.0 / 3.0),
            m: (code == 1).then_some(1.5),
            escape_time: (code == -1).then_some(2.75),
            cost: Some(1e-300),
            final_norm: Some(std::f64::consts::PI),
            solves: 4,
            iterations: 17,
            unconverged: 1,
            max_grad_norm: Some(3.3e-8),
            t_star: None,
            certified: false,
            error: if code == 0 {
                "solver, \"quoted\"".into()
            } else {
                String::new()
            },
        }
    }

    fn sample() -> SweepResult {
        SweepResult {
            scenario: "demo".into(),
            seed: 7,
            rows: vec![
                row("linear_nmp", 1e-1, 0.25, 0, 1),
                row("linear_nmp", 1e-1, 4.0, 0, 1),
                row("linear_nmp", 1e-2, 0.25, 0, -1),
                row("linear_nmp", 1e-2, 4.0, 0, 1),
                row("linear_nmp", 1e-3, 0.25, 0, -1),
                row("linear_nmp", 1e-3, 4.0, 0, 0),
            ],
        }
    }

    #[test]
    fn sweep_csv_round_trip() {
        let res = sample();
        let mut buf = Vec::new();
        write_sweep_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema=1\n"));
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), res);
    }

    #[test]
    fn missing_schema_is_rejected() {
        let res = sample();
        let mut buf = Vec::new();
        write_sweep_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replacen("# schema=1\n", "", 1);
        assert!(read_sweep_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn phase_matrix_round_trip_and_down_set() {
        let m = &phase_matrices(&sample())[0];
        assert_eq!(m.epsilons, vec![1e-1, 1e-2, 1e-3]);
        assert_eq!(m.codes, vec![vec![1, 1], vec![-1, 1], vec![-1, 0]]);
        assert!(m.is_down_set(0, -1));
        assert!(!m.is_down_set(1, 1));
        let mut buf = Vec::new();
        write_phase_matrix(m, &mut buf).unwrap();
        assert_eq!(&read_phase_matrix(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn long_form_round_trip() {
        let entries = phase_entries(&sample());
        let mut buf = Vec::new();
        write_phase_long(&entries, &mut buf).unwrap();
        assert_eq!(read_phase_long(buf.as_slice()).unwrap(), entries);
    }

    #[test]
    fn single_cell_gives_one_by_one_matrix() {
        let res = SweepResult {
            scenario: "one".into(),
            seed: 0,
            rows: vec![row("pendulum", 1e-2, 1.0, 0, 1)],
        };
        let dir = std::env::temp_dir().join(format!("cheapctl-phase-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let paths = emit_phase_diagram(&res, &dir).unwrap();
        assert_eq!(paths.len(), 2);
        let m = read_phase_matrix(File::open(&paths[0]).unwrap()).unwrap();
        assert_eq!(m.codes, vec![vec![1]]);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let res = sample();
        let err = emit_phase_diagram(&res, Path::new("/nonexistent/dir/for/phase")).unwrap_err();
        assert!(matches!(err, HarnessError::Io { .. }));
    }
}
