//! CSV output. Reals use 17 significant digits and a '.' separator.

use pnpmm::solve::{ConvergenceTrace, RateCheck, TraceRecord};

use crate::error::{CliError, CliResult};

pub const TRACE_HEADER: &str = "iter,f,g,h,residual_sq,psnr";

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Row 0 holds the starting point and leaves `residual_sq` empty.
pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (n, r) in std::iter::once(&trace.initial).chain(&trace.records).enumerate() {
        let residual = if n == 0 { String::new() } else { real(r.residual_sq) };
        let psnr = r.psnr.map(real).unwrap_or_default();
        out.push_str(&format!("{n},{},{},{},{residual},{psnr}\n", real(r.f), real(r.g), real(r.h)));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> CliResult<ConvergenceTrace> {
    let bad = |line: usize, what: &str| CliError::config("trace", format!("line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut records = Vec::new();
    for (k, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(k + 1, "expected 6 columns"));
        }
        let num = |i: usize| parse_real(cols[i]).ok_or_else(|| bad(k + 1, "malformed number"));
        let residual_sq = if cols[4].trim().is_empty() { 0.0 } else { num(4)? };
        let psnr = if cols[5].trim().is_empty() { None } else { Some(num(5)?) };
        records.push(TraceRecord { f: num(1)?, g: num(2)?, h: num(3)?, residual_sq, psnr });
    }
    if records.is_empty() {
        return Err(bad(2, "trace has no rows"));
    }
    let initial = records.remove(0);
    Ok(ConvergenceTrace { initial, records })
}

pub fn key_value_csv(rows: &[(String, String)]) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

pub fn rate_label(rate: &RateCheck) -> &'static str {
    match rate {
        RateCheck::Holds => "holds",
        RateCheck::Violated { .. } => "violated",
        RateCheck::NotApplicable => "not_applicable",
    }
}
