//! Run manifests: enough provenance next to every output to reproduce it —
//! the fully resolved configuration, the seed, input content hashes, crate
//! versions, and a timestamp. The `config` block uses flag names, so it can
//! be pasted into a `key = value` file and replayed.

use std::path::Path;

use anyhow::Context;
use serde_json::json;
use sha2::{Digest, Sha256};

pub fn sha256_hex(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing input {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_manifest(
    path: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    threads: usize,
    inputs: &[&Path],
) -> anyhow::Result<()> {
    let input_records = inputs
        .iter()
        .map(|p| {
            Ok(json!({
                "path": p.display().to_string(),
                "sha256": sha256_hex(p)?,
            }))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let manifest = json!({
        "command": command,
        "created-utc": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "argv": std::env::args().collect::<Vec<_>>(),
        "seed": seed,
        "threads": threads,
        "versions": {
            "fdrecon-cli": env!("CARGO_PKG_VERSION"),
            "fdrecon-core": fdrecon_core::VERSION,
        },
        "inputs": input_records,
        "config": config,
    });
    let text = format!("{}\n", serde_json::to_string_pretty(&manifest)?);
    std::fs::write(path, text)
        .with_context(|| format!("writing manifest {}", path.display()))
}
