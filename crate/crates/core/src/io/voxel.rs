//! Voxel grids and sparse latents on disk.
//!
//! A grid file is one JSON header line `{"N":n,"order":"x-major"}`, a
//! newline, then `ceil(N³/8)` bytes of occupancy bits, flat index
//! `(x·N + y)·N + z`, least-significant bit first within each byte.
//!
//! A sparse latent is JSON lines, one `{"p":[x,y,z],"z":[...]}` per entry,
//! preceded by a header line `{"N":n}`.

use crate::error::parse;
use crate::slat::{SparseEntry, SparseLatent, VoxelGrid};
use crate::Result;

/// Largest resolution accepted when reading (512³ bits is 16 MiB).
pub const MAX_N: usize = 512;

pub fn write_grid(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = format!("{{\"N\":{},\"order\":\"x-major\"}}\n", grid.n()).into_bytes();
    let mut packed = vec![0u8; grid.occupancy().len().div_ceil(8)];
    for (i, &b) in grid.occupancy().iter().enumerate() {
        if b {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&packed);
    out
}

pub fn read_grid(bytes: &[u8]) -> Result<VoxelGrid> {
    let (header, payload) = super::split_header(bytes)?;
    if header.get("order").and_then(|v| v.as_str()) != Some("x-major") {
        return Err(parse("voxel header must declare order x-major"));
    }
    let n = header
        .get("N")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse("voxel header missing N"))? as usize;
    if !(2..=MAX_N).contains(&n) {
        return Err(parse(format!("voxel resolution {n} out of range")));
    }
    let cells = n * n * n;
    if payload.len() != cells.div_ceil(8) {
        return Err(parse(format!("voxel payload is {} bytes, expected {}", payload.len(), cells.div_ceil(8))));
    }
    let occ = (0..cells).map(|i| payload[i / 8] >> (i % 8) & 1 == 1).collect();
    VoxelGrid::from_occupancy(n, occ)
}

pub fn write_sparse(latent: &SparseLatent) -> Vec<u8> {
    let mut out = format!("{{\"N\":{}}}\n", latent.n());
    for e in latent.entries() {
        out.push_str(&serde_json::to_string(e).expect("sparse entries serialize"));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn read_sparse(bytes: &[u8]) -> Result<SparseLatent> {
    let (header, rest) = super::split_header(bytes)?;
    let n = header
        .get("N")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse("sparse header missing N"))?;
    if !(2..=MAX_N as u64).contains(&n) {
        return Err(parse(format!("sparse resolution {n} out of range")));
    }
    let text = std::str::from_utf8(rest).map_err(|_| parse("sparse latent is not UTF-8"))?;
    let entries = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<SparseEntry>(l).map_err(|e| parse(format!("bad entry: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    SparseLatent::new(n as usize, entries).map_err(|e| parse(e.to_string()))
}
