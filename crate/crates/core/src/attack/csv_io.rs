use std::path::Path;

use super::{ResultRow, RunStatus, SweepSummary};
use crate::codec::RESPONSE_BITS;
use crate::error::{Error, Result};
use crate::io_util;

pub const SUMMARY_HEADER: &str = "rc,rr,n_train,avg_acc,max_bit_acc,min_bit_acc";

pub static RESULTS_HEADER: std::sync::LazyLock<String> = std::sync::LazyLock::new(|| {
    let bits: Vec<String> = (0..RESPONSE_BITS).map(|b| format!("bit{b:02}")).collect();
    format!("puf_seed,rc,rr,n_train,fold,mean_acc,{},steps,stop_reason", bits.join(","))
});

fn dec(v: f64) -> String {
    format!("{v:.6}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer flushes");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RESULTS_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.puf_seed.to_string(),
            r.rc.to_string(),
            r.rr.to_string(),
            r.n_train.to_string(),
            r.fold.to_string(),
            dec(r.mean_acc),
        ];
        for b in 0..RESPONSE_BITS {
            rec.push(dec(r.per_bit.get(b).copied().unwrap_or(f64::NAN)));
        }
        rec.push(r.steps.to_string());
        rec.push(r.status.as_str().to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::parse(line, format!("missing column {i}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse column {i} value {raw:?}")))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let expected_cols = 6 + RESPONSE_BITS + 2;
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if i == 0 {
            if rec.iter().collect::<Vec<_>>().join(",") != *RESULTS_HEADER {
                return Err(Error::parse(1, "unexpected results header"));
            }
            continue;
        }
        if rec.len() != expected_cols {
            return Err(Error::parse(
                line,
                format!("expected {expected_cols} columns, got {}", rec.len()),
            ));
        }
        let per_bit: Vec<f64> = (0..RESPONSE_BITS)
            .map(|b| field(&rec, 6 + b, line))
            .collect::<Result<_>>()?;
        let status_raw = &rec[expected_cols - 1];
        let status = RunStatus::parse(status_raw)
            .ok_or_else(|| Error::parse(line, format!("unknown stop reason {status_raw:?}")))?;
        let scored = per_bit.iter().all(|b| b.is_finite());
        rows.push(ResultRow {
            puf_seed: field(&rec, 0, line)?,
            rc: field(&rec, 1, line)?,
            rr: field(&rec, 2, line)?,
            n_train: field(&rec, 3, line)?,
            fold: field(&rec, 4, line)?,
            mean_acc: field(&rec, 5, line)?,
            per_bit: if scored { per_bit } else { Vec::new() },
            steps: field(&rec, expected_cols - 2, line)?,
            status,
        });
    }
    if rows.is_empty() && text.trim().is_empty() {
        return Err(Error::parse(1, "empty results file"));
    }
    Ok(rows)
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    io_util::write_atomic(path, results_csv(rows).as_bytes())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    parse_results_csv(&io_util::read_to_string(path)?)
}

/// Summary rows sorted by (R_c, R_r, n_train).
pub fn summary_csv(summary: &SweepSummary) -> String {
    let mut rows: Vec<_> = summary.rows.iter().collect();
    rows.sort_by_key(|r| (r.rc, r.rr, r.n_train));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.rc.to_string(),
            r.rr.to_string(),
            r.n_train.to_string(),
            dec(r.avg_acc),
            dec(r.max_bit_acc),
            dec(r.min_bit_acc),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn write_summary_csv(summary: &SweepSummary, path: &Path) -> Result<()> {
    if summary.rows.is_empty() {
        return Err(Error::invalid("summary has no rows"));
    }
    io_util::write_atomic(path, summary_csv(summary).as_bytes())
}
