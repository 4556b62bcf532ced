//! Triangle meshes and a few procedural primitives.

use std::collections::HashMap;

use crate::error::param;
use crate::slat::VoxelGrid;
use crate::Result;

pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Validates indices and requires at least one triangle.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(param("mesh has no triangles"));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(param("mesh has non-finite vertex coordinates"));
        }
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(param(format!("triangle {t:?} indexes past {n} vertices")));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.corners(tri);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.areas().iter().sum()
    }

    /// Centers the bounding box at the origin and scales the longest axis
    /// to length 1.
    pub fn normalized(&self) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        let vertices = self
            .vertices
            .iter()
            .map(|v| {
                let d = sub(*v, center);
                [d[0] * scale, d[1] * scale, d[2] * scale]
            })
            .collect();
        Self { vertices, triangles: self.triangles.clone() }
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Axis-aligned cube of side 1 centered at the origin, 12 triangles with
    /// outward winding.
    pub fn unit_cube() -> Self {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            vertices.push([
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            ]);
        }
        let quads = [
            [0, 2, 3, 1], // z-
            [4, 5, 7, 6], // z+
            [0, 1, 5, 4], // y-
            [2, 6, 7, 3], // y+
            [0, 4, 6, 2], // x-
            [1, 3, 7, 5], // x+
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self { vertices, triangles }
    }

    pub fn tetrahedron() -> Self {
        let vertices = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let triangles = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        Self { vertices, triangles }
    }

    /// Unit-radius icosphere: 20·4^level faces.
    pub fn icosphere(level: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|&v| normalize(v))
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let (p, q) = (vertices[a], vertices[b]);
                    vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    vertices.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for &[a, b, c] in &triangles {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        Self { vertices, triangles }
    }

    /// Torus around +Z with `major`/`minor` radii and a `u × v` quad grid.
    pub fn torus(major: f64, minor: f64, u: usize, v: usize) -> Self {
        let mut vertices = Vec::with_capacity(u * v);
        for i in 0..u {
            let a = std::f64::consts::TAU * i as f64 / u as f64;
            for j in 0..v {
                let b = std::f64::consts::TAU * j as f64 / v as f64;
                let r = major + minor * b.cos();
                vertices.push([r * a.cos(), r * a.sin(), minor * b.sin()]);
            }
        }
        let idx = |i: usize, j: usize| (i % u) * v + (j % v);
        let mut triangles = Vec::with_capacity(2 * u * v);
        for i in 0..u {
            for j in 0..v {
                let (p, q, r, s) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([p, q, r]);
                triangles.push([p, r, s]);
            }
        }
        Self { vertices, triangles }
    }

    /// Boundary faces of the occupied voxels, two triangles per exposed
    /// voxel face, in grid coordinates mapped to `[-0.5, 0.5]³`.
    pub fn from_voxels(grid: &VoxelGrid) -> Result<Self> {
        let n = grid.n();
        let mut vertex_ids: HashMap<[usize; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut vid = |p: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
            *vertex_ids.entry(p).or_insert_with(|| {
                vertices.push([
                    p[0] as f64 / n as f64 - 0.5,
                    p[1] as f64 / n as f64 - 0.5,
                    p[2] as f64 / n as f64 - 0.5,
                ]);
                vertices.len() - 1
            })
        };
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if !grid.get(x, y, z) {
                        continue;
                    }
                    for axis in 0..3 {
                        for dir in [-1i64, 1] {
                            let mut q = [x as i64, y as i64, z as i64];
                            q[axis] += dir;
                            if grid.get_signed(q) {
                                continue;
                            }
                            // face on the plane axis = p[axis] + (dir > 0)
                            let mut base = [x, y, z];
                            if dir > 0 {
                                base[axis] += 1;
                            }
                            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                            let mut c = [base; 4];
                            c[1][u] += 1;
                            c[2][u] += 1;
                            c[2][v] += 1;
                            c[3][v] += 1;
                            let ids = c.map(|p| vid(p, &mut vertices));
                            if dir > 0 {
                                triangles.push([ids[0], ids[1], ids[2]]);
                                triangles.push([ids[0], ids[2], ids[3]]);
                            } else {
                                triangles.push([ids[0], ids[2], ids[1]]);
                                triangles.push([ids[0], ids[3], ids[2]]);
                            }
                        }
                    }
                }
            }
        }
        Self::new(vertices, triangles)
    }
}
