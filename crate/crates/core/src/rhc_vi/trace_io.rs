use std::io::{Read, Write};

use super::ClosedLoopTrace;
use crate::{Error, Result};

/// Header line written before the column names.
pub const SCHEMA_LINE: &str = "# schema=1";

/// Tabular form of a trace: one row per sample time.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PartialEq for TraceTable {
    /// Bitwise comparison in which `NaN == NaN`.
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
            })
    }
}

/// Columns `t, x_1..x_n, u_1..u_q, running_cost, grad_norm`. Row `k` holds
/// the state at `t_k`, the input applied from `t_k` (the first piece of the
/// step-`k` solution), the accumulated cost and the step-`k` gradient norm.
/// The last row has no step attached; its `u` and `grad_norm` are `NaN`.
pub fn trace_table(trace: &ClosedLoopTrace) -> TraceTable {
    let n = trace.sample_states.first().map_or(0, |x| x.len());
    let q = trace.controls.first().map_or(0, |c| c.u.len());
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=n).map(|i| format!("x_{i}")));
    columns.extend((1..=q).map(|j| format!("u_{j}")));
    columns.push("running_cost".into());
    columns.push("grad_norm".into());

    let mut rows = Vec::with_capacity(trace.sample_times.len());
    let mut ctrl_iter = trace.controls.iter().peekable();
    for (k, (t, x)) in trace
        .sample_times
        .iter()
        .zip(&trace.sample_states)
        .enumerate()
    {
        let mut row = vec![*t];
        row.extend(x.iter());
        while ctrl_iter.peek().is_some_and(|c| c.t1 <= *t + 1e-12) {
            ctrl_iter.next();
        }
        let has_step = k < trace.per_step_reports.len();
        match ctrl_iter.peek() {
            Some(c) if has_step => row.extend(c.u.iter()),
            _ => row.extend(std::iter::repeat_n(f64::NAN, q)),
        }
        row.push(trace.accumulated_cost.get(k).copied().unwrap_or(f64::NAN));
        row.push(
            trace
                .per_step_reports
                .get(k)
                .map_or(f64::NAN, |r| r.grad_norm),
        );
        rows.push(row);
    }
    TraceTable { columns, rows }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("trace CSV: {e}"))
}

/// Writes the table with a schema comment line. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_trace_csv<W: Write>(table: &TraceTable, mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}").map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<TraceTable> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let columns: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("trace CSV: bad number {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::InvalidConfig("trace CSV: ragged row".into()));
        }
        rows.push(row);
    }
    Ok(TraceTable { columns, rows })
}
