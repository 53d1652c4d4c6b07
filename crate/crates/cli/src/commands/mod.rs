use std::path::{Path, PathBuf};

pub mod eval;
pub mod make_cloud;
pub mod reconstruct;
pub mod sweep;
pub mod verify;

pub fn ensure_input(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        anyhow::bail!("input not found: {}", path.display())
    }
}

/// `clouds/sphere.xyz` → `clouds/sphere_recon` (or whatever suffix).
pub fn default_out(input: &Path, suffix: &str) -> PathBuf {
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("fdrecon");
    input.with_file_name(format!("{stem}{suffix}"))
}
