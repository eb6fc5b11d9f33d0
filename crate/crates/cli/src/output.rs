//! Artifact writers. Every CSV starts with a comment line recording the
//! binary version and the SHA-256 of the configuration file, then a header
//! row; identical configuration and seed reproduce every artifact byte for
//! byte.

use std::path::Path;

use crate::error::CliError;

/// Provenance stamped into every artifact.
#[derive(Debug, Clone)]
pub struct Stamp {
    version: &'static str,
    config_sha256: String,
}

impl Stamp {
    pub fn new(config_bytes: &[u8]) -> Self {
        use sha2::Digest;
        let digest = sha2::Sha256::digest(config_bytes);
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to a String");
        }
        Self {
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: hex,
        }
    }

    pub fn version(&self) -> &'static str {
        self.version
    }

    pub fn config_sha256(&self) -> &str {
        &self.config_sha256
    }

    fn comment(&self) -> String {
        format!("# hylo {} config sha256={}", self.version, self.config_sha256)
    }
}

/// Shortest round-trip representation; deterministic for a given build.
pub fn fmt_num(x: f64) -> String {
    format!("{x:e}")
}

/// Finite floats become JSON numbers; NaN and infinities become null
/// (serde_json cannot represent them).
pub fn json_num(x: f64) -> serde_json::Value {
    match serde_json::Number::from_f64(x) {
        Some(n) => serde_json::Value::Number(n),
        None => serde_json::Value::Null,
    }
}

pub fn write_csv(
    path: &Path,
    stamp: &Stamp,
    header: &str,
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&stamp.comment());
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Artifact(format!("writing {}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Artifact(format!("encoding {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Artifact(format!("writing {}: {e}", path.display())))
}
