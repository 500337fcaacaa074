//! Versioned JSON report with a determinism hash.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::check::CheckRecord;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub manifest: serde_json::Value,
    pub seed: u64,
    pub tolerance_override: Option<f64>,
    pub records: Vec<CheckRecord>,
    pub dumps: serde_json::Map<String, serde_json::Value>,
    pub pass: bool,
    /// sha256 of the report serialized without `determinism_hash` and `timing`.
    pub determinism_hash: String,
    pub timing: Timing,
}

/// The hashed part of a report.
#[derive(Serialize)]
struct Hashed<'a> {
    schema_version: u32,
    tool_version: &'a str,
    command: &'a str,
    manifest: &'a serde_json::Value,
    seed: u64,
    tolerance_override: Option<f64>,
    records: &'a [CheckRecord],
    dumps: &'a serde_json::Map<String, serde_json::Value>,
    pass: bool,
}

impl Report {
    pub fn new(command: &str, manifest: serde_json::Value, seed: u64, tolerance_override: Option<f64>) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            manifest,
            seed,
            tolerance_override,
            records: Vec::new(),
            dumps: serde_json::Map::new(),
            pass: true,
            determinism_hash: String::new(),
            timing: Timing { elapsed_ms: 0.0 },
        }
    }

    pub fn dump(&mut self, key: &str, value: impl Serialize) {
        self.dumps
            .insert(key.to_string(), serde_json::to_value(value).expect("dump serializes"));
    }

    /// Apply the tolerance override, settle `pass` and the hash.
    pub fn finalize(&mut self, elapsed_ms: f64) {
        if let Some(t) = self.tolerance_override {
            self.records = self.records.drain(..).map(|r| r.with_tolerance(t)).collect();
        }
        self.pass = self.records.iter().all(|r| r.pass);
        self.determinism_hash = self.hash();
        self.timing = Timing { elapsed_ms };
    }

    pub fn hash(&self) -> String {
        let view = Hashed {
            schema_version: self.schema_version,
            tool_version: &self.tool_version,
            command: &self.command,
            manifest: &self.manifest,
            seed: self.seed,
            tolerance_override: self.tolerance_override,
            records: &self.records,
            dumps: &self.dumps,
            pass: self.pass,
        };
        let bytes = serde_json::to_vec(&view).expect("report serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per record, then a verdict.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{} {:<34} residual {:.3e} < {:.1e}   {}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.name,
                r.residual,
                r.tolerance,
                r.anchor
            ));
        }
        out.push_str(&format!(
            "{}: {} checks, hash {}\n",
            if self.pass { "ok" } else { "FAILED" },
            self.records.len(),
            self.determinism_hash
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timing_and_tracks_content() {
        let mut a = Report::new("verify", serde_json::json!({"k": 1}), 7, None);
        a.records.push(CheckRecord::new("x", "x = x", 0.0, 1e-8));
        let mut b = a.clone();
        a.finalize(1.0);
        b.finalize(99.0);
        assert_eq!(a.determinism_hash, b.determinism_hash);
        assert_eq!(a.determinism_hash.len(), 64);
        let mut c = Report::new("verify", serde_json::json!({"k": 1}), 8, None);
        c.records = a.records.clone();
        c.finalize(1.0);
        assert_ne!(a.determinism_hash, c.determinism_hash);
    }

    #[test]
    fn override_resets_pass_flags() {
        let mut r = Report::new("verify", serde_json::Value::Null, 0, Some(1e-12));
        r.records.push(CheckRecord::new("x", "", 1e-10, 1e-8));
        r.finalize(0.0);
        assert!(!r.pass && !r.records[0].pass && r.records[0].tolerance == 1e-12);
    }
}
