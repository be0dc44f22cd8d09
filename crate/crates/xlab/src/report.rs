//! Machine-readable experiment reports.
//!
//! A report is reproducible from `(name, params)`: all randomness comes from
//! the seed recorded in the parameters, rows are emitted in a fixed order,
//! and the provenance hash covers the full configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub provenance: String,
}

impl ExperimentReport {
    pub fn new(name: &str, params: BTreeMap<String, String>, columns: &[&str]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(name.as_bytes());
        for (k, v) in &params {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b";");
        }
        let provenance = hex_prefix(&hasher.finalize(), 16);
        ExperimentReport {
            name: name.to_string(),
            params,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            checks: Vec::new(),
            provenance,
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn check_le(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), passed: value <= threshold, value, threshold });
    }

    pub fn check_ge(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), passed: value >= threshold, value, threshold });
    }

    pub fn check_in(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.checks.push(Check {
            name: format!("{name} in [{lo},{hi}]"),
            passed: (lo..=hi).contains(&value),
            value,
            threshold: hi,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// One human-readable line per check plus the summary entries.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment {} [{}]", self.name, self.provenance);
        for (k, v) in &self.summary {
            let _ = writeln!(out, "  {k} = {v:.6e}");
        }
        for c in &self.checks {
            let _ = writeln!(
                out,
                "  [{}] {} (value {:.6e}, threshold {:.6e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            );
        }
        out
    }
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n / 2).map(|b| format!("{b:02x}")).collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_depends_on_params() {
        let mut p = BTreeMap::new();
        p.insert("seed".to_string(), "1".to_string());
        let a = ExperimentReport::new("x", p.clone(), &["v"]);
        p.insert("seed".to_string(), "2".to_string());
        let b = ExperimentReport::new("x", p, &["v"]);
        assert_ne!(a.provenance, b.provenance);
        assert_eq!(a.provenance.len(), 16);
    }

    #[test]
    fn checks_and_csv() {
        let mut r = ExperimentReport::new("t", BTreeMap::new(), &["a", "b"]);
        r.push_row(vec![1.0, 2.0]);
        r.check_le("bound", 1.0, 2.0);
        r.check_ge("floor", 1.0, 2.0);
        assert!(!r.passed());
        let csv = r.to_csv();
        assert!(csv.starts_with("a,b\n"));
        let json = r.to_json();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows.len(), 1);
    }

    #[test]
    fn slope_of_a_line_is_exact() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        assert!((ls_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}
