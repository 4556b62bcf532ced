//! Multi-view-consistent occlusion masks from mesh triangle selections.
//!
//! A connected patch of triangles is grown by random walk until it covers a
//! target fraction of the surface area, then every view renders it with a
//! z-buffer: pixels whose front-most triangle is selected are occluded.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::param;
use crate::io::pgm::GrayImage;
use crate::masks2d::BinaryMask;
use crate::mesh::{cross, dot, normalize, sub, TriMesh, Vec3};
use crate::rng::rng_from_seed;
use crate::Result;

/// Neighbor lists: triangles sharing an unordered vertex pair. Lists are
/// sorted and free of duplicates.
pub fn build_adjacency(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if a == b {
                continue;
            }
            edges.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut adj = vec![Vec::new(); mesh.triangles().len()];
    for tris in edges.values() {
        for &t in tris {
            adj[t].extend(tris.iter().copied().filter(|&u| u != t));
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// An edge-connected set of triangles and the surface-area share it covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleSelection {
    /// Sorted, unique triangle ids.
    pub selected: Vec<usize>,
    pub achieved_ratio: f64,
    /// The seed's connected component ran out before the target was met.
    pub exhausted: bool,
}

impl TriangleSelection {
    pub fn empty() -> Self {
        Self { selected: Vec::new(), achieved_ratio: 0.0, exhausted: false }
    }

    pub fn all(mesh: &TriMesh) -> Self {
        Self { selected: (0..mesh.triangles().len()).collect(), achieved_ratio: 1.0, exhausted: false }
    }

    pub fn from_ids(mesh: &TriMesh, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut selected: Vec<usize> = ids.into_iter().collect();
        selected.sort_unstable();
        selected.dedup();
        if selected.last().is_some_and(|&t| t >= mesh.triangles().len()) {
            return Err(param("selection references a triangle past the mesh"));
        }
        let areas = mesh.areas();
        let total: f64 = areas.iter().sum();
        let acc: f64 = selected.iter().map(|&t| areas[t]).sum();
        Ok(Self { achieved_ratio: if total > 0.0 { acc / total } else { 0.0 }, selected, exhausted: false })
    }

    /// Membership bitmap over `n` triangles.
    pub fn membership(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &t in &self.selected {
            m[t] = true;
        }
        m
    }
}

/// Grows a region from a uniformly chosen non-degenerate triangle. Each
/// step picks uniformly among all unselected triangles adjacent to the
/// region, until the selected area share reaches `target_ratio` or the
/// component is exhausted.
pub fn random_walk_select(mesh: &TriMesh, target_ratio: f64, seed: u64) -> Result<TriangleSelection> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(param(format!("target ratio {target_ratio} not in (0, 1)")));
    }
    let areas = mesh.areas();
    let total: f64 = areas.iter().sum();
    let candidates: Vec<usize> = (0..areas.len()).filter(|&t| areas[t] > 0.0).collect();
    if candidates.is_empty() || !(total > 0.0) {
        return Err(param("mesh has no non-degenerate triangles"));
    }
    let adj = build_adjacency(mesh);
    let mut rng = rng_from_seed(seed);
    let start = candidates[rng.random_range(0..candidates.len())];

    let n = areas.len();
    let mut selected = vec![false; n];
    let mut queued = vec![false; n];
    let mut frontier = Vec::new();
    let mut acc = 0.0;
    let mut take = |t: usize, selected: &mut Vec<bool>, queued: &mut Vec<bool>, frontier: &mut Vec<usize>| {
        selected[t] = true;
        acc += areas[t];
        for &u in &adj[t] {
            if !selected[u] && !queued[u] {
                queued[u] = true;
                frontier.push(u);
            }
        }
        acc
    };
    let mut covered = take(start, &mut selected, &mut queued, &mut frontier);
    while covered / total < target_ratio && !frontier.is_empty() {
        let i = rng.random_range(0..frontier.len());
        let t = frontier.swap_remove(i);
        covered = take(t, &mut selected, &mut queued, &mut frontier);
    }
    let achieved_ratio = covered / total;
    let mut ids: Vec<usize> = (0..n).filter(|&t| selected[t]).collect();
    ids.shrink_to_fit();
    Ok(TriangleSelection { selected: ids, achieved_ratio, exhausted: achieved_ratio < target_ratio })
}

/// A pinhole camera on a sphere around the origin, +Z up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub radius: f64,
    /// Degrees, counter-clockwise from +X about +Z.
    pub yaw: f64,
    /// Degrees above the XY plane.
    pub pitch: f64,
    pub fov_y: f64,
    pub image_size: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(param(format!("camera radius {} must be positive", self.radius)));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(param(format!("fov {} not in (0, 180)", self.fov_y)));
        }
        if !(self.pitch.abs() < 90.0) || !self.yaw.is_finite() {
            return Err(param(format!("pitch {} must lie strictly between -90 and 90", self.pitch)));
        }
        if self.image_size == 0 {
            return Err(param("image size must be positive"));
        }
        Ok(())
    }

    pub fn eye(&self) -> Vec3 {
        let (y, p) = (self.yaw.to_radians(), self.pitch.to_radians());
        [self.radius * p.cos() * y.cos(), self.radius * p.cos() * y.sin(), self.radius * p.sin()]
    }

    /// `(right, up, forward)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let e = self.eye();
        let f = normalize([-e[0], -e[1], -e[2]]);
        let r = normalize(cross(f, [0.0, 0.0, 1.0]));
        let u = cross(r, f);
        (r, u, f)
    }

    pub fn near(&self) -> f64 {
        self.radius / 100.0
    }

    fn tan_half(&self) -> f64 {
        (0.5 * self.fov_y.to_radians()).tan()
    }

    /// Screen position in pixels (x right, y down) and view depth.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let (r, u, f) = self.basis();
        self.project_with(p, self.eye(), (r, u, f), self.tan_half())
    }

    fn project_with(&self, p: Vec3, eye: Vec3, (r, u, f): (Vec3, Vec3, Vec3), tan: f64) -> (f64, f64, f64) {
        let d = sub(p, eye);
        let z = dot(d, f);
        let nx = dot(d, r) / (z * tan);
        let ny = dot(d, u) / (z * tan);
        let s = self.image_size as f64;
        ((nx + 1.0) * 0.5 * s, (1.0 - ny) * 0.5 * s, z)
    }

    /// Ray through screen point `(sx, sy)`; the direction has unit
    /// component along the view axis, so the ray parameter equals depth.
    pub fn ray(&self, sx: f64, sy: f64) -> (Vec3, Vec3) {
        let (r, u, f) = self.basis();
        let s = self.image_size as f64;
        let tan = self.tan_half();
        let nx = (2.0 * sx / s - 1.0) * tan;
        let ny = (1.0 - 2.0 * sy / s) * tan;
        let d = [f[0] + nx * r[0] + ny * u[0], f[1] + nx * r[1] + ny * u[1], f[2] + nx * r[2] + ny * u[2]];
        (self.eye(), d)
    }
}

/// `n` cameras evenly spaced in yaw from `yaw_start`.
pub fn orbit_cameras(n: usize, radius: f64, fov_y: f64, pitch: f64, yaw_start: f64, image_size: usize) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(param("need at least one camera"));
    }
    (0..n)
        .map(|k| {
            let cam = Camera {
                radius,
                yaw: (yaw_start + 360.0 * k as f64 / n as f64).rem_euclid(360.0),
                pitch,
                fov_y,
                image_size,
            };
            cam.validate().map(|_| cam)
        })
        .collect()
}

/// Per-pixel front-most triangle and its depth.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBuffer {
    pub size: usize,
    pub depth: Vec<f32>,
    pub triangle: Vec<Option<u32>>,
}

/// Edge function, evaluated with the endpoints in a canonical order so that
/// `edge(a, b, p) == -edge(b, a, p)` holds exactly on shared edges.
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let raw = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if (a.0, a.1) <= (b.0, b.1) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    // interior lies on the side where the edge function is positive
    b.1 < a.1 || (b.1 == a.1 && b.0 > a.0)
}

/// Z-buffered perspective rasterization of triangle ids.
///
/// Pixel centers are sampled with the top-left fill rule, depth is
/// interpolated perspective-correctly and stored as `f32`, and ties keep
/// the lower triangle id. Triangles with any vertex closer than the near
/// plane are dropped; culling is disabled.
pub fn rasterize(mesh: &TriMesh, cam: &Camera) -> Result<FrameBuffer> {
    cam.validate()?;
    let s = cam.image_size;
    let mut fb = FrameBuffer { size: s, depth: vec![f32::INFINITY; s * s], triangle: vec![None; s * s] };
    let eye = cam.eye();
    let basis = cam.basis();
    let tan = cam.tan_half();
    let near = cam.near();
    for (t, _) in mesh.triangles().iter().enumerate() {
        let proj = mesh.corners(t).map(|p| cam.project_with(p, eye, basis, tan));
        if proj.iter().any(|p| !(p.2 > near)) {
            continue;
        }
        let mut v = proj.map(|p| (p.0, p.1));
        let mut z = proj.map(|p| p.2);
        let mut area = edge(v[0], v[1], v[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            v.swap(1, 2);
            z.swap(1, 2);
            area = -area;
        }
        let xmin = v.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0);
        let xmax = v.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(s as f64);
        let ymin = v.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0);
        let ymax = v.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(s as f64);
        if xmin >= xmax || ymin >= ymax {
            continue;
        }
        let tl = [is_top_left(v[1], v[2]), is_top_left(v[2], v[0]), is_top_left(v[0], v[1])];
        for py in ymin as usize..ymax as usize {
            for px in xmin as usize..xmax as usize {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                let w = [edge(v[1], v[2], p), edge(v[2], v[0], p), edge(v[0], v[1], p)];
                if (0..3).any(|k| w[k] < 0.0 || (w[k] == 0.0 && !tl[k])) {
                    continue;
                }
                let inv_z = (w[0] / z[0] + w[1] / z[1] + w[2] / z[2]) / area;
                let depth = (1.0 / inv_z) as f32;
                let i = py * s + px;
                if depth < fb.depth[i] {
                    fb.depth[i] = depth;
                    fb.triangle[i] = Some(t as u32);
                }
            }
        }
    }
    Ok(fb)
}

/// Object and occlusion masks for one view: `obj` marks pixels covered by
/// any triangle, `occ` those whose front-most triangle is selected.
pub fn render_masks(mesh: &TriMesh, sel: &TriangleSelection, cam: &Camera) -> Result<(BinaryMask, BinaryMask)> {
    let fb = rasterize(mesh, cam)?;
    let member = sel.membership(mesh.triangles().len());
    let s = fb.size;
    let obj = BinaryMask::from_bits(s, s, fb.triangle.iter().map(Option::is_some).collect())?;
    let occ = BinaryMask::from_bits(
        s,
        s,
        fb.triangle.iter().map(|t| t.is_some_and(|t| member[t as usize])).collect(),
    )?;
    Ok((obj, occ))
}

/// Headlight-shaded grayscale render plus its silhouette. Covered pixels
/// get `round(255·(0.2 + 0.8·|n·f|))` where `n` is the face normal and `f`
/// the view axis; background is 0.
pub fn render_shaded(mesh: &TriMesh, cam: &Camera) -> Result<(GrayImage, BinaryMask)> {
    let fb = rasterize(mesh, cam)?;
    let (_, _, f) = cam.basis();
    let shade: Vec<u8> = (0..mesh.triangles().len())
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            let n = cross(sub(b, a), sub(c, a));
            let len = dot(n, n).sqrt();
            let lambert = if len > 0.0 { (dot(n, f) / len).abs() } else { 0.0 };
            (255.0 * (0.2 + 0.8 * lambert)).round() as u8
        })
        .collect();
    let s = fb.size;
    let mut img = GrayImage::new(s, s);
    for (i, t) in fb.triangle.iter().enumerate() {
        if let Some(t) = t {
            img.data[i] = shade[*t as usize];
        }
    }
    let obj = BinaryMask::from_bits(s, s, fb.triangle.iter().map(Option::is_some).collect())?;
    Ok((img, obj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn adjacency_basic_cases() {
        assert_eq!(build_adjacency(&two_triangles()), vec![vec![1], vec![0]]);
        let tet = build_adjacency(&TriMesh::tetrahedron());
        assert!(tet.iter().all(|n| n.len() == 3));
        // fan of 5 triangles meeting only at vertex 0
        let mut verts = vec![[0.0, 0.0, 0.0]];
        let mut tris = Vec::new();
        for k in 0..5 {
            let a = k as f64 * 1.2;
            verts.push([a.cos(), a.sin(), 0.0]);
            verts.push([(a + 0.5).cos(), (a + 0.5).sin(), 0.0]);
            tris.push([0, 2 * k + 1, 2 * k + 2]);
        }
        let fan = TriMesh::new(verts, tris).unwrap();
        assert!(build_adjacency(&fan).iter().all(Vec::is_empty));
    }

    #[test]
    fn random_walk_quantization_and_exhaustion() {
        let sel = random_walk_select(&two_triangles(), 0.4, 0).unwrap();
        assert_eq!(sel.selected.len(), 1);
        assert_eq!(sel.achieved_ratio, 0.5);
        let sphere = TriMesh::icosphere(1);
        let all = random_walk_select(&sphere, 1.0 - 1e-12, 9).unwrap();
        assert_eq!(all.selected.len(), 80);
        assert!(!all.exhausted);
        assert!(random_walk_select(&sphere, 0.0, 0).is_err());
        assert!(random_walk_select(&sphere, 1.0, 0).is_err());
    }

    #[test]
    fn random_walk_flags_disconnected_shortfall() {
        // two separate quads: the walk cannot leave its component
        let m = TriMesh::new(
            vec![
                [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0],
                [5.0, 0.0, 0.0], [6.0, 0.0, 0.0], [6.0, 1.0, 0.0], [5.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]],
        )
        .unwrap();
        let sel = random_walk_select(&m, 0.9, 1).unwrap();
        assert!(sel.exhausted);
        assert_eq!(sel.selected.len(), 2);
        assert_eq!(sel.achieved_ratio, 0.5);
    }

    #[test]
    fn orbit_yaws() {
        let yaws = |n, start| -> Vec<f64> {
            orbit_cameras(n, 2.0, 40.0, 30.0, start, 8).unwrap().iter().map(|c| c.yaw).collect()
        };
        assert_eq!(yaws(4, 0.0), vec![0.0, 90.0, 180.0, 270.0]);
        assert_eq!(yaws(1, 15.0), vec![15.0]);
        assert_eq!(yaws(3, 30.0), vec![30.0, 150.0, 270.0]);
        assert!(orbit_cameras(0, 2.0, 40.0, 30.0, 0.0, 8).is_err());
        assert!(orbit_cameras(2, 2.0, 180.0, 30.0, 0.0, 8).is_err());
    }

    #[test]
    fn camera_looks_at_origin() {
        let cam = Camera { radius: 2.0, yaw: 37.0, pitch: 30.0, fov_y: 40.0, image_size: 64 };
        let (x, y, z) = cam.project([0.0; 3]);
        assert!((x - 32.0).abs() < 1e-9 && (y - 32.0).abs() < 1e-9);
        assert!((z - 2.0).abs() < 1e-12);
        let (_, up, _) = cam.basis();
        assert!(up[2] > 0.0);
    }

    #[test]
    fn empty_and_full_selection() {
        let cube = TriMesh::unit_cube();
        let cam = Camera { radius: 2.0, yaw: 20.0, pitch: 30.0, fov_y: 40.0, image_size: 48 };
        let (obj, occ) = render_masks(&cube, &TriangleSelection::empty(), &cam).unwrap();
        assert!(obj.count_ones() > 0);
        assert_eq!(occ.count_ones(), 0);
        let (obj2, occ2) = render_masks(&cube, &TriangleSelection::all(&cube), &cam).unwrap();
        assert_eq!(obj2, obj);
        assert_eq!(occ2, obj);
    }

    #[test]
    fn adjacent_triangles_leave_no_gaps() {
        // a screen-filling quad split on the diagonal covers each pixel once
        let quad = TriMesh::new(
            vec![[0.0, -5.0, -5.0], [0.0, 5.0, -5.0], [0.0, 5.0, 5.0], [0.0, -5.0, 5.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let cam = Camera { radius: 2.0, yaw: 0.0, pitch: 0.0, fov_y: 40.0, image_size: 33 };
        let fb = rasterize(&quad, &cam).unwrap();
        let missing: Vec<usize> = (0..fb.triangle.len()).filter(|&i| fb.triangle[i].is_none()).collect();
        assert!(missing.is_empty(), "{missing:?}");
    }
}
