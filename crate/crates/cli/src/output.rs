use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Writes `bytes` to `dest` through a temp file in the same directory, so a
/// crash never leaves a half-written output behind.
pub fn write_atomic(dest: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match dest.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dest).with_context(|| format!("writing {}", dest.display()))?;
    Ok(())
}
