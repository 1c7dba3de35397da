//! The report printed by every command, in text or JSON form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance for verdicts.
    pub tol: f64,
    /// Stopping tolerance of the hitting solver.
    pub solver_tol: f64,
    /// Classes with harmonic measure at most this are treated as null.
    pub mass_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiag {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub transient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub arguments: Vec<String>,
    /// SHA-256 of each input file, keyed by role.
    pub inputs_digest: BTreeMap<String, String>,
    pub tolerances: Tolerances,
    pub solver: Option<SolverDiag>,
    pub results: Value,
    pub warnings: Vec<String>,
    pub exit_status: i32,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "martinlab {}", self.command);
        for (role, hash) in &self.inputs_digest {
            let _ = writeln!(out, "  {role} sha256 {}", &hash[..16]);
        }
        let t = &self.tolerances;
        let _ = writeln!(out, "  tol {:e}, solver tol {:e}, mass threshold {:e}", t.tol, t.solver_tol, t.mass_threshold);
        if let Some(s) = &self.solver {
            let _ = writeln!(
                out,
                "  solver: {} iterations, residual {:e}, converged {}, transient {}",
                s.iterations, s.residual, s.converged, s.transient
            );
        }
        flatten(&mut out, "", &self.results);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "exit status {}", self.exit_status);
        out
    }
}

fn flatten(out: &mut String, prefix: &str, v: &Value) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(out, &key, x);
            }
        }
        Value::Array(items) if items.iter().any(|x| x.is_object() || x.is_array()) => {
            for (i, x) in items.iter().enumerate() {
                flatten(out, &format!("{prefix}[{i}]"), x);
            }
        }
        _ => {
            let _ = writeln!(out, "{prefix}: {v}");
        }
    }
}
