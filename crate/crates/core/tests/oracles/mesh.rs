use std::collections::{HashMap, HashSet, VecDeque};

use occlusym::mesh::TriMesh;
use occlusym::mesh_occlusion::{random_walk_select, render_masks, Camera, TriangleSelection};
use occlusym::slat::{gen_toy_shape, ShapeFamily};

pub fn meshes() -> Vec<TriMesh> {
    vec![
        TriMesh::icosphere(2),
        TriMesh::torus(0.3, 0.12, 16, 8),
        TriMesh::unit_cube(),
        TriMesh::tetrahedron(),
        TriMesh::from_voxels(&gen_toy_shape(ShapeFamily::Ell, 16, 1).unwrap()).unwrap(),
    ]
}

/// Adjacency from shared undirected edges, built independently.
pub fn connected(mesh: &TriMesh, ids: &[usize]) -> bool {
    let set: HashSet<usize> = ids.iter().copied().collect();
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for &t in ids {
        let v = mesh.triangles()[t];
        for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
            by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut seen = HashSet::from([ids[0]]);
    let mut queue = VecDeque::from([ids[0]]);
    while let Some(t) = queue.pop_front() {
        let v = mesh.triangles()[t];
        for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
            for &u in &by_edge[&(a.min(b), a.max(b))] {
                if set.contains(&u) && seen.insert(u) {
                    queue.push_back(u);
                }
            }
        }
    }
    seen.len() == set.len()
}

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Möller–Trumbore; returns the ray parameter of a hit.
pub fn intersect(o: V3, d: V3, [a, b, c]: [V3; 3]) -> Option<f64> {
    let (e1, e2) = (sub(b, a), sub(c, a));
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(o, a);
    let u = dot(s, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(s, e1);
    let v = dot(d, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(e2, q) * inv;
    (t > 0.0).then_some(t)
}

/// Front-most triangle per pixel by casting a ray through each center.
pub fn ray_cast(mesh: &TriMesh, cam: &Camera) -> Vec<Option<usize>> {
    let (yaw, pitch) = (cam.yaw.to_radians(), cam.pitch.to_radians());
    let eye = [cam.radius * pitch.cos() * yaw.cos(), cam.radius * pitch.cos() * yaw.sin(), cam.radius * pitch.sin()];
    let norm = |v: V3| {
        let l = dot(v, v).sqrt();
        [v[0] / l, v[1] / l, v[2] / l]
    };
    let fwd = norm([-eye[0], -eye[1], -eye[2]]);
    let right = norm(cross(fwd, [0.0, 0.0, 1.0]));
    let up = cross(right, fwd);
    let s = cam.image_size;
    let tan = (cam.fov_y.to_radians() / 2.0).tan();
    let mut out = vec![None; s * s];
    for py in 0..s {
        for px in 0..s {
            let nx = ((px as f64 + 0.5) / s as f64 * 2.0 - 1.0) * tan;
            let ny = (1.0 - (py as f64 + 0.5) / s as f64 * 2.0) * tan;
            let d = [0, 1, 2].map(|k| fwd[k] + nx * right[k] + ny * up[k]);
            let mut best: Option<(f64, usize)> = None;
            for t in 0..mesh.triangles().len() {
                if let Some(hit) = intersect(eye, d, mesh.corners(t)) {
                    if best.is_none_or(|(b, _)| hit < b) {
                        best = Some((hit, t));
                    }
                }
            }
            out[py * s + px] = best.map(|(_, t)| t);
        }
    }
    out
}

/// Checks one random-walk selection: area ratio at least `target`,
/// overshoot below the largest face share, connected, reproducible.
pub fn check_walk(mesh: &TriMesh, target: f64, seed: u64) -> Result<(), String> {
    let sel = random_walk_select(mesh, target, seed).map_err(|e| e.to_string())?;
    let areas = mesh.areas();
    let total: f64 = areas.iter().sum();
    let max_share = areas.iter().cloned().fold(0.0, f64::max) / total;
    let ratio: f64 = sel.selected.iter().map(|&t| areas[t]).sum::<f64>() / total;
    if sel.exhausted || (ratio - sel.achieved_ratio).abs() >= 1e-12 {
        return Err(format!("bad bookkeeping: ratio {ratio}, reported {}", sel.achieved_ratio));
    }
    if ratio < target {
        return Err(format!("ratio {ratio} < target {target}"));
    }
    if ratio - target >= max_share {
        return Err(format!("overshoot {} >= max face share {max_share}", ratio - target));
    }
    if !connected(mesh, &sel.selected) {
        return Err("selection is disconnected".into());
    }
    if sel != random_walk_select(mesh, target, seed).map_err(|e| e.to_string())? {
        return Err("selection is not reproducible".into());
    }
    Ok(())
}

/// Fraction of pixels where rendered `(obj, occ)` agree with ray casting.
pub fn render_agreement(mesh: &TriMesh, sel: &TriangleSelection, cam: &Camera) -> f64 {
    let member = sel.membership(mesh.triangles().len());
    let (obj, occ) = render_masks(mesh, sel, cam).unwrap();
    let oracle = ray_cast(mesh, cam);
    let agree = (0..oracle.len())
        .filter(|&i| obj.bits()[i] == oracle[i].is_some() && occ.bits()[i] == oracle[i].is_some_and(|t| member[t]))
        .count();
    agree as f64 / oracle.len() as f64
}

/// Four views at 128², pitches 25°, 10°, −5°, −20°.
pub fn test_cameras() -> Vec<Camera> {
    [0.0, 90.0, 200.0, 315.0]
        .iter()
        .enumerate()
        .map(|(v, &yaw)| Camera { radius: 2.0, yaw, pitch: 25.0 - 15.0 * v as f64, fov_y: 40.0, image_size: 128 })
        .collect()
}
