//! Artifact emission: JSON reports, strategy CSV and the run manifest.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Write a JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// JSON with object keys sorted recursively; the hash input must not
/// depend on key order in the source file.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", inner.join(","))
        }
        other => serde_json::to_string(other).unwrap(),
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u64,
    /// SHA-256 over the canonicalized config, the referenced data files
    /// and the effective seed.
    pub inputs_sha256: String,
    pub seed: u64,
    pub versions: Versions,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub rmv_core: String,
    pub rmv_cli: String,
}

pub fn build_manifest(config: &Value, data_files: &[&Path], seed: u64) -> CliResult<Manifest> {
    let mut hasher = Sha256::new();
    hasher.update(canonical_json(config).as_bytes());
    for p in data_files {
        let bytes = std::fs::read(p)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        hasher.update(&bytes);
    }
    hasher.update(seed.to_le_bytes());
    Ok(Manifest {
        schema_version: crate::config::SCHEMA_VERSION,
        inputs_sha256: hex::encode(hasher.finalize()),
        seed,
        versions: Versions {
            rmv_core: rmv_core::VERSION.to_string(),
            rmv_cli: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Strategy table: time, robust position, comparator position and the
/// pointwise volatility correction. Empty rows give a header-only file.
pub fn write_strategy_csv(
    path: &Path,
    nodes: &[f64],
    theta: &[f64],
    theta_tilde: Option<&[f64]>,
    delta_t: Option<&[f64]>,
) -> CliResult<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("s,theta");
    if theta_tilde.is_some() {
        header.push_str(",theta_tilde");
    }
    if delta_t.is_some() {
        header.push_str(",delta_t");
    }
    writeln!(f, "{header}").map_err(CliError::from)?;
    for (j, (&s, &th)) in nodes.iter().zip(theta).enumerate() {
        write!(f, "{s:.17e},{th:.17e}")?;
        if let Some(tt) = theta_tilde {
            write!(f, ",{:.17e}", tt[j])?;
        }
        if let Some(dt) = delta_t {
            write!(f, ",{:.17e}", dt[j])?;
        }
        writeln!(f)?;
    }
    Ok(())
}

pub fn ensure_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}
