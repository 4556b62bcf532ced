//! Voxel occupancy grids and their latent encodings.
//!
//! Grid coordinates `(x, y, z)` are stored x-major: the flat index is
//! `(x·N + y)·N + z`. A voxel's center in normalized object space is
//! `(i + 0.5)/N − 0.5` per axis, so the grid spans `[-0.5, 0.5]³`.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, shape};
use crate::rng::rng_from_seed;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    n: usize,
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    /// Empty grid of resolution `n ≥ 2`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(param(format!("grid resolution must be >= 2, got {n}")));
        }
        let len = n
            .checked_mul(n)
            .and_then(|v| v.checked_mul(n))
            .ok_or_else(|| param("grid resolution overflows"))?;
        Ok(Self { n, occupancy: vec![false; len] })
    }

    pub fn from_occupancy(n: usize, occupancy: Vec<bool>) -> Result<Self> {
        let g = Self::new(n)?;
        if occupancy.len() != g.occupancy.len() {
            return Err(shape(format!("grid N={n} needs {} cells, got {}", g.occupancy.len(), occupancy.len())));
        }
        Ok(Self { n, occupancy })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.n + y) * self.n + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)]
    }

    /// Out-of-range coordinates read as empty.
    pub fn get_signed(&self, p: [i64; 3]) -> bool {
        let n = self.n as i64;
        if p.iter().any(|&c| c < 0 || c >= n) {
            return false;
        }
        self.get(p[0] as usize, p[1] as usize, p[2] as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.occupancy[i] = v;
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| b).count()
    }

    /// Center of voxel index `i` on one axis, in `[-0.5, 0.5]`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64 - 0.5
    }
}

/// Procedural shape family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Box,
    Sphere,
    Union2,
    Ell,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 4] = [Self::Box, Self::Sphere, Self::Union2, Self::Ell];
}

/// Solids in normalized object space. All extents must stay inside the
/// central 80% of the grid, i.e. within `[-0.4, 0.4]³`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyShape {
    Box { center: [f64; 3], half: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Union { parts: Vec<ToyShape> },
}

pub const SHAPE_LIMIT: f64 = 0.4;

impl ToyShape {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            ToyShape::Box { center, half } => (0..3).all(|k| (p[k] - center[k]).abs() <= half[k]),
            ToyShape::Sphere { center, radius } => {
                if *radius <= 0.0 {
                    return false;
                }
                let d: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum();
                d <= radius * radius
            }
            ToyShape::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = 1e-12;
        match self {
            ToyShape::Box { center, half } => {
                if half.iter().chain(center).any(|v| !v.is_finite()) || half.iter().any(|&h| h < 0.0) {
                    return Err(param("box needs finite center and non-negative half extents"));
                }
                if (0..3).any(|k| (center[k] - half[k]) < -SHAPE_LIMIT - eps || center[k] + half[k] > SHAPE_LIMIT + eps) {
                    return Err(param("box extends outside the central 80% of the grid"));
                }
            }
            ToyShape::Sphere { center, radius } => {
                if !radius.is_finite() || *radius < 0.0 || center.iter().any(|v| !v.is_finite()) {
                    return Err(param("sphere needs finite center and non-negative radius"));
                }
                if (0..3).any(|k| center[k] - radius < -SHAPE_LIMIT - eps || center[k] + radius > SHAPE_LIMIT + eps) {
                    return Err(param("sphere extends outside the central 80% of the grid"));
                }
            }
            ToyShape::Union { parts } => {
                if parts.is_empty() {
                    return Err(param("union needs at least one part"));
                }
                parts.iter().try_for_each(ToyShape::validate)?;
            }
        }
        Ok(())
    }

    /// Draws random parameters for `family`.
    pub fn sample(family: ShapeFamily, rng: &mut crate::rng::Rng) -> Self {
        let l = SHAPE_LIMIT;
        let random_box = |rng: &mut crate::rng::Rng, min_half: f64| {
            let half: [f64; 3] = std::array::from_fn(|_| rng.random_range(min_half..=0.3));
            let center = std::array::from_fn(|k| {
                let slack = l - half[k];
                rng.random_range(-slack..=slack) * 0.5
            });
            ToyShape::Box { center, half }
        };
        match family {
            ShapeFamily::Box => random_box(rng, 0.1),
            ShapeFamily::Sphere => {
                let radius = rng.random_range(0.15..=l);
                let slack = l - radius;
                let center = std::array::from_fn(|_| rng.random_range(-slack..=slack) * 0.5);
                ToyShape::Sphere { center, radius }
            }
            ShapeFamily::Union2 => {
                let radius = rng.random_range(0.1..=0.25);
                let slack = l - radius;
                let center = std::array::from_fn(|_| rng.random_range(-slack..=slack));
                let sphere = ToyShape::Sphere { center, radius };
                ToyShape::Union { parts: vec![random_box(rng, 0.08), sphere] }
            }
            ShapeFamily::Ell => {
                // a long bar on one axis plus a second bar rising from its end
                let (a, b) = match rng.random_range(0..3) {
                    0 => (0, 1),
                    1 => (1, 2),
                    _ => (2, 0),
                };
                let t = rng.random_range(0.07..=0.15);
                let mut half1 = [t; 3];
                half1[a] = l;
                let mut c1 = [0.0; 3];
                c1[b] = -l + t;
                let mut half2 = [t; 3];
                half2[b] = l;
                let mut c2 = [0.0; 3];
                c2[a] = if rng.random::<bool>() { -l + t } else { l - t };
                ToyShape::Union {
                    parts: vec![
                        ToyShape::Box { center: c1, half: half1 },
                        ToyShape::Box { center: c2, half: half2 },
                    ],
                }
            }
        }
    }

    /// Occupancy of voxel centers inside the solid.
    pub fn voxelize(&self, n: usize) -> Result<VoxelGrid> {
        self.validate()?;
        let mut g = VoxelGrid::new(n)?;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if self.contains([g.center(x), g.center(y), g.center(z)]) {
                        g.set(x, y, z, true);
                    }
                }
            }
        }
        Ok(g)
    }
}

/// Random shape of `family` voxelized at resolution `n ≥ 8`.
pub fn gen_toy_shape(family: ShapeFamily, n: usize, seed: u64) -> Result<VoxelGrid> {
    if n < 8 {
        return Err(param(format!("toy shapes need N >= 8, got {n}")));
    }
    ToyShape::sample(family, &mut rng_from_seed(seed)).voxelize(n)
}

/// Stage-1 dense latent: `r³` tokens in x-major cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLatent {
    r: usize,
    tokens: Array2<f64>,
}

impl DenseLatent {
    pub fn new(r: usize, tokens: Array2<f64>) -> Result<Self> {
        if r == 0 || tokens.nrows() != r * r * r {
            return Err(shape(format!("dense latent with r={r} needs r³ rows, got {}", tokens.nrows())));
        }
        Ok(Self { r, tokens })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn tokens(&self) -> &Array2<f64> {
        &self.tokens
    }

    pub fn into_tokens(self) -> Array2<f64> {
        self.tokens
    }
}

/// The deterministic stage-1 codec.
///
/// Each of the `r³` cells covers `s = N/r` voxels per axis and is split into
/// sub-blocks of `b` voxels per axis. A cell's token holds the occupied
/// fraction of each of its `(s/b)³` sub-blocks, x-major. With `b = 1` the
/// token width is `(N/r)³` and the code is lossless.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Codec {
    pub r: usize,
    #[serde(default = "one")]
    pub sub_block: usize,
}

fn one() -> usize {
    1
}

impl Stage1Codec {
    pub fn new(r: usize) -> Self {
        Self { r, sub_block: 1 }
    }

    fn cell(&self, n: usize) -> Result<usize> {
        if self.r == 0 || !n.is_multiple_of(self.r) {
            return Err(shape(format!("grid N={n} is not divisible by r={}", self.r)));
        }
        let s = n / self.r;
        if self.sub_block == 0 || !s.is_multiple_of(self.sub_block) {
            return Err(shape(format!("cell size {s} is not divisible by sub-block {}", self.sub_block)));
        }
        Ok(s)
    }

    /// Token width for a grid of resolution `n`.
    pub fn channels(&self, n: usize) -> Result<usize> {
        let per = self.cell(n)? / self.sub_block;
        Ok(per * per * per)
    }

    pub fn encode(&self, grid: &VoxelGrid) -> Result<DenseLatent> {
        let n = grid.n();
        let s = self.cell(n)?;
        let (r, b) = (self.r, self.sub_block);
        let per = s / b;
        let mut tokens = Array2::<f64>::zeros((r * r * r, per * per * per));
        let inv = 1.0 / (b * b * b) as f64;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if !grid.get(x, y, z) {
                        continue;
                    }
                    let cell = ((x / s) * r + y / s) * r + z / s;
                    let (lx, ly, lz) = ((x % s) / b, (y % s) / b, (z % s) / b);
                    tokens[[cell, (lx * per + ly) * per + lz]] += inv;
                }
            }
        }
        DenseLatent::new(r, tokens)
    }

    /// A sub-block is occupied iff its fraction is `>= threshold`.
    pub fn decode(&self, latent: &DenseLatent, n: usize, threshold: f64) -> Result<VoxelGrid> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(param(format!("decode threshold {threshold} not in (0, 1)")));
        }
        let s = self.cell(n)?;
        if latent.r != self.r || latent.tokens.ncols() != self.channels(n)? {
            return Err(shape(format!(
                "latent {}x{} does not match codec r={} for N={n}",
                latent.tokens.nrows(),
                latent.tokens.ncols(),
                self.r
            )));
        }
        let (r, b) = (self.r, self.sub_block);
        let per = s / b;
        let mut g = VoxelGrid::new(n)?;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let cell = ((x / s) * r + y / s) * r + z / s;
                    let (lx, ly, lz) = ((x % s) / b, (y % s) / b, (z % s) / b);
                    if latent.tokens[[cell, (lx * per + ly) * per + lz]] >= threshold {
                        g.set(x, y, z, true);
                    }
                }
            }
        }
        Ok(g)
    }
}

pub fn encode_stage1(grid: &VoxelGrid, r: usize) -> Result<DenseLatent> {
    Stage1Codec::new(r).encode(grid)
}

pub fn decode_stage1(latent: &DenseLatent, n: usize, threshold: f64) -> Result<VoxelGrid> {
    Stage1Codec::new(latent.r()).decode(latent, n, threshold)
}

const NEIGHBORS: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

/// Occupied voxels with at least one empty (or out-of-grid) 6-neighbor,
/// sorted lexicographically.
pub fn active_voxels(grid: &VoxelGrid) -> Vec<[usize; 3]> {
    let n = grid.n();
    let mut out = Vec::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if !grid.get(x, y, z) {
                    continue;
                }
                let p = [x as i64, y as i64, z as i64];
                let exposed = NEIGHBORS
                    .iter()
                    .any(|d| !grid.get_signed([p[0] + d[0], p[1] + d[1], p[2] + d[2]]));
                if exposed {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// `|a ∧ b| / |a ∨ b|`, 1 when both are empty.
pub fn voxel_iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if a.n != b.n {
        return Err(shape(format!("grid resolutions differ: {} vs {}", a.n, b.n)));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.occupancy.iter().zip(&b.occupancy) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// One active voxel and its feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub p: [usize; 3],
    pub z: Vec<f64>,
}

/// Stage-2 latent: features attached to active voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLatent {
    n: usize,
    entries: Vec<SparseEntry>,
}

impl SparseLatent {
    /// Positions must be in range, strictly increasing, and all feature
    /// vectors the same finite width.
    pub fn new(n: usize, entries: Vec<SparseEntry>) -> Result<Self> {
        if n < 2 {
            return Err(param(format!("grid resolution must be >= 2, got {n}")));
        }
        if entries.len() > n.saturating_mul(n).saturating_mul(n) {
            return Err(param("more entries than grid cells"));
        }
        for w in entries.windows(2) {
            if w[0].p >= w[1].p {
                return Err(param(format!("positions {:?}, {:?} not strictly sorted", w[0].p, w[1].p)));
            }
        }
        if let Some(e) = entries.iter().find(|e| e.p.iter().any(|&c| c >= n)) {
            return Err(param(format!("position {:?} outside grid N={n}", e.p)));
        }
        if let Some(first) = entries.first() {
            let c = first.z.len();
            if entries.iter().any(|e| e.z.len() != c || e.z.iter().any(|v| !v.is_finite())) {
                return Err(shape("sparse features must share one width and be finite"));
            }
        }
        Ok(Self { n, entries })
    }

    /// Toy stage-2 features for every active voxel: for each of the six
    /// axis directions, 1 if the neighbor is occupied; then the normalized
    /// voxel center (3 values) and a constant 1. Width 10.
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        let entries = active_voxels(grid)
            .into_iter()
            .map(|p| {
                let q = [p[0] as i64, p[1] as i64, p[2] as i64];
                let mut z: Vec<f64> = NEIGHBORS
                    .iter()
                    .map(|d| grid.get_signed([q[0] + d[0], q[1] + d[1], q[2] + d[2]]) as u8 as f64)
                    .collect();
                z.extend(p.iter().map(|&c| grid.center(c)));
                z.push(1.0);
                SparseEntry { p, z }
            })
            .collect();
        Self { n: grid.n(), entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[SparseEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.entries.first().map_or(0, |e| e.z.len())
    }

    /// Features as an `L × C` matrix.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let c = self.channels();
        let mut m = Array2::zeros((self.len(), c));
        for (i, e) in self.entries.iter().enumerate() {
            for (j, &v) in e.z.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// Replaces features, keeping positions.
    pub fn with_features(&self, features: &Array2<f64>) -> Result<Self> {
        if features.nrows() != self.len() {
            return Err(shape(format!("expected {} feature rows, got {}", self.len(), features.nrows())));
        }
        let entries = self
            .entries
            .iter()
            .zip(features.rows())
            .map(|(e, row)| SparseEntry { p: e.p, z: row.to_vec() })
            .collect();
        Self::new(self.n, entries)
    }
}
