//! ASCII PLY point clouds.
//!
//! Reading accepts any element layout as long as a `vertex` element has
//! scalar `x`, `y`, `z` properties; other properties and elements are
//! skipped. Writing emits `float x/y/z` only.

use crate::error::parse;
use crate::metrics::PointCloud;
use crate::Result;

pub fn write_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    for p in cloud.points() {
        s.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    s.into_bytes()
}

struct Element {
    name: String,
    count: usize,
    /// `None` for list properties.
    props: Vec<(String, bool)>,
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse("PLY is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse("missing ply magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or_else(|| parse("PLY header not terminated"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", ..] => return Err(parse("only ASCII PLY is supported")),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| parse("property before element"))?
                .props
                .push((name.to_string(), true)),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| parse("property before element"))?
                .props
                .push((name.to_string(), false)),
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse(format!("unexpected header line: {line}"))),
        }
    }
    if !ascii {
        return Err(parse("missing format line"));
    }
    let mut points = Vec::new();
    let mut found = false;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines.next().ok_or_else(|| parse(format!("truncated {} element", el.name)))?;
            }
            continue;
        }
        found = true;
        let find = |axis: &str| {
            el.props
                .iter()
                .position(|(n, list)| n == axis && !list)
                .ok_or_else(|| parse(format!("vertex element lacks scalar {axis}")))
        };
        let idx = [find("x")?, find("y")?, find("z")?];
        if el.props.iter().any(|(_, list)| *list) {
            return Err(parse("list properties on vertices are not supported"));
        }
        points.reserve(el.count.min(1 << 20));
        for _ in 0..el.count {
            let line = lines.next().ok_or_else(|| parse("truncated vertex element"))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != el.props.len() {
                return Err(parse(format!("vertex line has {} values, expected {}", vals.len(), el.props.len())));
            }
            let mut p = [0.0; 3];
            for (k, &i) in idx.iter().enumerate() {
                p[k] = vals[i].parse::<f64>().map_err(|_| parse(format!("bad coordinate {}", vals[i])))?;
            }
            points.push(p);
        }
    }
    if !found {
        return Err(parse("PLY has no vertex element"));
    }
    PointCloud::new(points).map_err(|e| parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let c = PointCloud::new(vec![[0.0, 1.5, -2.0], [0.25, 0.5, 1e-3]]).unwrap();
        assert_eq!(parse_ply(&write_ply(&c)).unwrap(), c);
    }

    #[test]
    fn extra_properties_and_faces() {
        let src = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float z\nproperty uchar red\nproperty float x\nproperty float y\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n3 255 1 2\n6 0 4 5\n3 0 1 0\n";
        let c = parse_ply(src.as_bytes()).unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn malformed() {
        assert!(parse_ply(b"ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n").is_err());
    }
}
