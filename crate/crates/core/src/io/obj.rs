//! ASCII Wavefront OBJ: `v` and `f` records only.
//!
//! Face corners may use `i`, `i/t`, `i//n`, or `i/t/n`, with 1-based or
//! negative (relative) indices. Polygons are fan-triangulated around their
//! first corner. All other records are ignored.

use crate::error::parse;
use crate::mesh::{TriMesh, Vec3};
use crate::Result;

pub fn parse_obj(bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse("OBJ is not UTF-8"))?;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    *c = fields
                        .next()
                        .and_then(|s| s.parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse(format!("line {}: bad vertex", lineno + 1)))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let corners = fields
                    .map(|f| corner_index(f, vertices.len()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| parse(format!("line {}: bad face index", lineno + 1)))?;
                if corners.len() < 3 {
                    return Err(parse(format!("line {}: face with < 3 corners", lineno + 1)));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

fn corner_index(field: &str, nverts: usize) -> Option<usize> {
    let idx: i64 = field.split('/').next()?.parse().ok()?;
    let resolved = if idx > 0 {
        idx - 1
    } else if idx < 0 {
        nverts as i64 + idx
    } else {
        return None;
    };
    (0..nverts as i64).contains(&resolved).then_some(resolved as usize)
}

pub fn write_obj(mesh: &TriMesh) -> Vec<u8> {
    let mut s = String::new();
    for v in mesh.vertices() {
        s.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_with_slashes_and_negative_indices() {
        let src = b"# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -2 -1\n";
        let m = parse_obj(src).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn roundtrip_cube() {
        let cube = TriMesh::unit_cube();
        assert_eq!(parse_obj(&write_obj(&cube)).unwrap(), cube);
    }

    #[test]
    fn malformed() {
        assert!(parse_obj(b"v 0 0\n").is_err());
        assert!(parse_obj(b"v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
        assert!(parse_obj(b"v 0 0 0\n").is_err());
        assert!(parse_obj(b"v nan 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").is_err());
    }
}
