//! The fuzz seeds must exercise the accepting paths of their parsers.

use std::path::{Path, PathBuf};

use occlusym::flow::load_checkpoint;
use occlusym::io::obj::parse_obj;
use occlusym::io::pgm::GrayImage;
use occlusym::io::ply::parse_ply;
use occlusym::io::tokens::read_tokens;
use occlusym::io::voxel::{read_grid, read_sparse};
use occlusym_cli::config::parse_override;
use occlusym_cli::report::parse_losses;
use occlusym_cli::RunConfig;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| (p.clone(), std::fs::read(&p).unwrap())).collect()
}

fn check(target: &str, parse: impl Fn(&[u8]) -> Result<(), String>) {
    for (path, bytes) in seeds(target) {
        let name = path.file_name().unwrap().to_string_lossy();
        let res = parse(&bytes);
        if name.starts_with("truncated") {
            assert!(res.is_err(), "{name} should be rejected");
        } else {
            res.unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn seeds_parse() {
    check("pgm", |b| GrayImage::from_pgm(b).map(drop).map_err(|e| e.to_string()));
    check("obj", |b| parse_obj(b).map(drop).map_err(|e| e.to_string()));
    check("ply", |b| parse_ply(b).map(drop).map_err(|e| e.to_string()));
    check("checkpoint", |b| load_checkpoint(b).map(drop).map_err(|e| e.to_string()));
    check("voxel_grid", |b| read_grid(b).map(drop).map_err(|e| e.to_string()));
    check("sparse", |b| read_sparse(b).map(drop).map_err(|e| e.to_string()));
    check("tokens", |b| read_tokens(b).map(drop).map_err(|e| e.to_string()));
    check("loss_csv", |b| parse_losses(b).map(drop));
    check("config", |b| {
        let i = b.iter().position(|&c| c == b'\n').ok_or("no override line")?;
        let head = std::str::from_utf8(&b[..i]).map_err(|e| e.to_string())?;
        let overrides: Vec<_> = if head.is_empty() {
            Vec::new()
        } else {
            vec![parse_override(head).map_err(|e| e.to_string())?]
        };
        RunConfig::from_json(&b[i + 1..], &overrides).map(drop).map_err(|e| e.to_string())
    });
}
