//! CSV writers and readers. Floats use Rust's shortest round-trip form.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::codeopt::CodeSearchResult;
use crate::error::{Error, Result};
use crate::simulator::SimResult;

pub const DELAYS_HEADER: [&str; 4] = ["job_index", "arrival_time", "completion_time", "delay"];
pub const TRACE_HEADER: [&str; 5] = ["time", "worker", "state", "job", "iteration"];
pub const CANDIDATES_HEADER: [&str; 6] = ["K", "C", "Omega", "theta", "active_workers", "mismatch"];

/// Generic table: header plus pre-formatted rows.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch { expected: header.len(), actual: row.len() });
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_delays<W: Write>(out: W, result: &SimResult) -> Result<()> {
    let rows: Vec<Vec<String>> = result
        .jobs
        .iter()
        .map(|j| {
            vec![
                j.job.to_string(),
                j.arrival.to_string(),
                j.completion.to_string(),
                j.delay().to_string(),
            ]
        })
        .collect();
    write_table(out, &DELAYS_HEADER, &rows)
}

/// Busy/idle transitions of every worker, ordered by time, then worker,
/// with an idle transition before a busy one at the same instant.
pub fn write_trace<W: Write>(out: W, result: &SimResult) -> Result<()> {
    let mut events: Vec<(f64, usize, u8, usize, usize)> = Vec::new();
    for (p, intervals) in result.busy.iter().enumerate() {
        for b in intervals {
            events.push((b.start, p, 1, b.job, b.iteration));
            events.push((b.end, p, 0, b.job, b.iteration));
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let rows: Vec<Vec<String>> = events
        .into_iter()
        .map(|(t, p, busy, job, it)| {
            vec![
                t.to_string(),
                p.to_string(),
                if busy == 1 { "busy" } else { "idle" }.to_string(),
                job.to_string(),
                it.to_string(),
            ]
        })
        .collect();
    write_table(out, &TRACE_HEADER, &rows)
}

pub fn write_candidates<W: Write>(out: W, search: &CodeSearchResult) -> Result<()> {
    let rows: Vec<Vec<String>> = search
        .table
        .iter()
        .map(|r| {
            vec![
                r.params.k.to_string(),
                r.params.complexity.to_string(),
                r.params.omega.to_string(),
                r.theta.to_string(),
                r.active_workers.to_string(),
                r.mismatch.to_string(),
            ]
        })
        .collect();
    write_table(out, &CANDIDATES_HEADER, &rows)
}

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in m.row_iter() {
        w.write_record(r.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Headerless numeric CSV, one matrix row per line.
pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad matrix entry {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}
