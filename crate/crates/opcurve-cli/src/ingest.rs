//! Case-file ingestion and emission.
//!
//! The on-disk schema is a UTF-8 CSV with header `case,y,x1,...,xd`:
//! 1-based case indices, positive operative times, '.' decimal separator,
//! LF or CRLF line endings. Rows may arrive in any order; ingestion sorts
//! by case index and rejects duplicates. Row numbers in error messages
//! count data rows from 1, excluding the header.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use opcurve::model::CaseRecord;

use crate::UsageError;

fn usage(msg: String) -> anyhow::Error {
    anyhow!(UsageError(msg))
}

/// Reads and validates a case file. The result is sorted by case index,
/// with d inferred from the header.
pub fn ingest_cases(path: &Path) -> Result<Vec<CaseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "case" || cols[1] != "y" {
        return Err(usage(format!(
            "{}: expected header case,y,x1,...,xd, found {:?}",
            path.display(),
            cols.join(",")
        )));
    }
    for (j, name) in cols.iter().enumerate().skip(2) {
        let expected = format!("x{}", j - 1);
        if *name != expected {
            return Err(usage(format!(
                "{}: covariate column {} should be named {expected}, found {name}",
                path.display(),
                j + 1
            )));
        }
    }
    let d = cols.len() - 2;

    let mut cases = Vec::new();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // data rows count from 1
        let record = record.map_err(|e| usage(format!("row {row}: {e}")))?;
        if record.len() != cols.len() {
            return Err(usage(format!(
                "row {row}: expected {} fields, found {}",
                cols.len(),
                record.len()
            )));
        }
        let index: usize = record[0]
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| usage(format!("row {row}: case must be a positive integer, found {:?}", &record[0])))?;
        if let Some(prev) = seen.insert(index, row) {
            return Err(usage(format!(
                "duplicate case index {index} (rows {prev} and {row})"
            )));
        }
        let y: f64 = record[1]
            .parse()
            .map_err(|_| usage(format!("row {row}, column y: not a number: {:?}", &record[1])))?;
        if !(y.is_finite() && y > 0.0) {
            return Err(usage(format!("row {row}: y must be positive")));
        }
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            let cell = &record[2 + j];
            let v: f64 = cell.parse().map_err(|_| {
                usage(format!("row {row}, column x{}: not a number: {cell:?}", j + 1))
            })?;
            if !v.is_finite() {
                return Err(usage(format!("row {row}, column x{}: must be finite", j + 1)));
            }
            x.push(v);
        }
        cases.push(CaseRecord::new(index, y, x).map_err(|e| usage(format!("row {row}: {e}")))?);
    }
    if cases.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    cases.sort_by_key(|c| c.index());
    Ok(cases)
}

/// Serializes cases to the ingestion schema. Times and covariates use the
/// shortest round-trip decimal form, so `ingest_cases` recovers the exact
/// same values.
pub fn emit_cases(cases: &[CaseRecord]) -> String {
    let d = cases.first().map_or(0, |c| c.x().len());
    let mut out = String::from("case,y");
    for j in 1..=d {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for c in cases {
        out.push_str(&format!("{},{}", c.index(), c.y()));
        for v in c.x() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes cases to a file in the ingestion schema.
pub fn write_cases(path: &Path, cases: &[CaseRecord]) -> Result<()> {
    std::fs::write(path, emit_cases(cases))
        .with_context(|| format!("writing {}", path.display()))
}
