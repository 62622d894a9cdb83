//! Verification records in the JSON report format.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// One verified claim: `pass` is `empirical ≥ bound - margin` unless the
/// check states otherwise in `params`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub params: Value,
    pub empirical: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// A one-sided `empirical ≥ bound - margin` record.
    pub fn at_least(check: &str, n: usize, m: usize, params: Value, empirical: f64, bound: f64, margin: f64) -> Self {
        let pass = empirical >= bound - margin;
        Self { check: check.to_string(), n, m, params, empirical, bound, margin, pass }
    }

    /// A one-sided `empirical ≤ bound + margin` record.
    pub fn at_most(check: &str, n: usize, m: usize, params: Value, empirical: f64, bound: f64, margin: f64) -> Self {
        let pass = empirical <= bound + margin;
        Self { check: check.to_string(), n, m, params, empirical, bound, margin, pass }
    }
}

pub fn all_pass(records: &[CheckRecord]) -> bool {
    records.iter().all(|r| r.pass)
}

/// Pretty JSON array with a trailing newline. Non-finite numbers become `null`.
pub fn to_json(records: &[CheckRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(records)?;
    s.push('\n');
    Ok(s)
}
