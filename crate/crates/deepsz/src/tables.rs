//! Line-oriented text formats for assessment tables and plans.
//!
//! Assessment rows are `layer_id<TAB>eb<TAB>delta<TAB>sigma`. Lines starting
//! with `#` are comments, except `#probe` lines, which log every measurement
//! as it is taken so an interrupted run can resume:
//! `#probe<TAB>layer_id<TAB>eb<TAB>delta<TAB>sigma`.
//!
//! Plan rows are `layer_id<TAB>eb`, followed by one footer line
//! `#total<TAB>predicted_size<TAB>predicted_loss`.
//!
//! Reals are written with Rust's shortest round-trip formatting.

use std::fmt::Write;
use std::str::FromStr;

use deepsz_core::assessor::{AssessmentRecord, Measurement};
use deepsz_core::planner::BoundPlan;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct TableError {
    pub line: usize,
    pub message: String,
}

pub const PROBE_PREFIX: &str = "#probe";
pub const TOTAL_PREFIX: &str = "#total";

fn field<T: FromStr>(line: usize, fields: &[&str], i: usize, name: &str) -> Result<T, TableError> {
    let raw = fields.get(i).ok_or_else(|| TableError { line, message: format!("missing {name}") })?;
    raw.trim().parse().map_err(|_| TableError { line, message: format!("invalid {name} {raw:?}") })
}

fn check_arity(line: usize, fields: &[&str], n: usize) -> Result<(), TableError> {
    if fields.len() != n {
        return Err(TableError { line, message: format!("expected {n} fields, found {}", fields.len()) });
    }
    Ok(())
}

fn record_from(line: usize, fields: &[&str]) -> Result<AssessmentRecord, TableError> {
    let r = AssessmentRecord {
        layer_id: field(line, fields, 0, "layer id")?,
        eb: field(line, fields, 1, "error bound")?,
        delta: field(line, fields, 2, "delta")?,
        sigma: field(line, fields, 3, "sigma")?,
    };
    if !(r.eb > 0.0 && r.eb.is_finite()) || !r.delta.is_finite() {
        return Err(TableError { line, message: "non-finite or non-positive value".into() });
    }
    Ok(r)
}

pub fn record_line(r: &AssessmentRecord) -> String {
    format!("{}\t{}\t{}\t{}\n", r.layer_id, r.eb, r.delta, r.sigma)
}

pub fn probe_line(layer_id: usize, eb: f64, m: &Measurement) -> String {
    format!("{PROBE_PREFIX}\t{layer_id}\t{eb}\t{}\t{}\n", m.delta, m.sigma)
}

pub fn write_assessment(records: &[AssessmentRecord]) -> String {
    let mut out = String::from("# layer_id\teb\tdelta\tsigma\n");
    for r in records {
        out.push_str(&record_line(r));
    }
    out
}

pub fn parse_assessment(text: &str) -> Result<Vec<AssessmentRecord>, TableError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        check_arity(i + 1, &fields, 4)?;
        out.push(record_from(i + 1, &fields)?);
    }
    Ok(out)
}

/// Measurements logged by `#probe` lines, in file order. A torn last line
/// (from an interrupted write) is ignored.
pub fn parse_probes(text: &str) -> Result<Vec<AssessmentRecord>, TableError> {
    let mut out = Vec::new();
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let Some(rest) = line.strip_prefix(PROBE_PREFIX) else {
            continue;
        };
        let fields: Vec<&str> = rest.trim_start_matches('\t').split('\t').collect();
        let parsed = check_arity(i + 1, &fields, 4).and_then(|_| record_from(i + 1, &fields));
        match parsed {
            Ok(r) => out.push(r),
            Err(_) if !complete && i + 1 == lines.len() => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_plan(plan: &BoundPlan) -> String {
    let mut out = String::from("# layer_id\teb\n");
    for (i, eb) in plan.ebs.iter().enumerate() {
        writeln!(out, "{i}\t{eb}").unwrap();
    }
    writeln!(out, "{TOTAL_PREFIX}\t{}\t{}", plan.predicted_total_size, plan.predicted_loss).unwrap();
    out
}

pub fn parse_plan(text: &str) -> Result<BoundPlan, TableError> {
    let mut ebs = Vec::new();
    let mut total = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        last_line = i + 1;
        if let Some(rest) = line.strip_prefix(TOTAL_PREFIX) {
            let fields: Vec<&str> = rest.trim_start_matches('\t').split('\t').collect();
            check_arity(i + 1, &fields, 2)?;
            let size: usize = field(i + 1, &fields, 0, "predicted size")?;
            let loss: f64 = field(i + 1, &fields, 1, "predicted loss")?;
            total = Some((size, loss));
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        check_arity(i + 1, &fields, 2)?;
        let layer: usize = field(i + 1, &fields, 0, "layer id")?;
        let eb: f64 = field(i + 1, &fields, 1, "error bound")?;
        if layer != ebs.len() {
            return Err(TableError { line: i + 1, message: format!("expected layer {}, found {layer}", ebs.len()) });
        }
        if !(eb > 0.0 && eb.is_finite()) {
            return Err(TableError { line: i + 1, message: "error bound must be positive".into() });
        }
        ebs.push(eb);
    }
    let (predicted_total_size, predicted_loss) =
        total.ok_or(TableError { line: last_line, message: "missing #total footer".into() })?;
    if ebs.is_empty() {
        return Err(TableError { line: last_line, message: "plan has no layers".into() });
    }
    Ok(BoundPlan { ebs, predicted_total_size, predicted_loss })
}
