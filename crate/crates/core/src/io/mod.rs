//! File formats: PGM rasters, OBJ meshes, PLY point clouds, bit-packed voxel
//! grids, JSON-lines sparse latents, and raw token dumps.
//!
//! Every parser takes a byte slice and never panics on malformed input.

pub mod obj;
pub mod pgm;
pub mod ply;
pub mod tokens;
pub mod voxel;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::Result;

/// Writes `bytes` to `path` through a sibling temp file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Splits a `JSON header line + '\n' + payload` container.
pub(crate) fn split_header(bytes: &[u8]) -> Result<(serde_json::Value, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| crate::error::parse("missing header line"))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| crate::error::parse(format!("bad header: {e}")))?;
    Ok((header, &bytes[nl + 1..]))
}
