//! Point-cloud geometry metrics.
//!
//! - Chamfer distance: `CD(a, b) = mean_{p∈a} min_{q∈b} |p−q|² + mean_{q∈b} min_{p∈a} |p−q|²`.
//! - MMD: mean over reference clouds of the smallest CD to any generated cloud.
//! - COV: fraction of reference clouds that are the CD-nearest reference of
//!   at least one generated cloud (ties go to the lowest reference index).

mod kdtree;

pub use kdtree::KdTree;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::param;
use crate::rng::rng_from_seed;
use crate::slat::{active_voxels, VoxelGrid};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(param("point cloud is empty"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(param("point cloud has non-finite coordinates"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
pub fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

fn mean_nearest(from: &PointCloud, to: &KdTree<'_>) -> f64 {
    let sum: f64 = from.points.iter().map(|p| to.nearest_sq(p).expect("non-empty cloud")).sum();
    sum / from.len() as f64
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let ta = KdTree::new(&a.points);
    let tb = KdTree::new(&b.points);
    mean_nearest(a, &tb) + mean_nearest(b, &ta)
}

/// `dist[g][r] = CD(gen[g], ref[r])`, computed in parallel.
pub fn chamfer_matrix(gen: &[PointCloud], refs: &[PointCloud]) -> Vec<Vec<f64>> {
    let gen_trees: Vec<KdTree<'_>> = gen.iter().map(|c| KdTree::new(&c.points)).collect();
    let ref_trees: Vec<KdTree<'_>> = refs.iter().map(|c| KdTree::new(&c.points)).collect();
    (0..gen.len())
        .into_par_iter()
        .map(|g| {
            (0..refs.len())
                .map(|r| mean_nearest(&gen[g], &ref_trees[r]) + mean_nearest(&refs[r], &gen_trees[g]))
                .collect()
        })
        .collect()
}

fn check_sets(gen: &[PointCloud], refs: &[PointCloud]) -> Result<()> {
    if gen.is_empty() || refs.is_empty() {
        return Err(param("metric sets must be nonempty"));
    }
    Ok(())
}

fn mmd_from(dist: &[Vec<f64>], n_ref: usize) -> f64 {
    let sum: f64 = (0..n_ref)
        .map(|r| dist.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min))
        .sum();
    sum / n_ref as f64
}

fn coverage_from(dist: &[Vec<f64>], n_ref: usize) -> f64 {
    let mut hit = vec![false; n_ref];
    for row in dist {
        let mut best = 0;
        for r in 1..n_ref {
            if row[r] < row[best] {
                best = r;
            }
        }
        hit[best] = true;
    }
    hit.iter().filter(|&&h| h).count() as f64 / n_ref as f64
}

pub fn mmd(gen: &[PointCloud], refs: &[PointCloud]) -> Result<f64> {
    check_sets(gen, refs)?;
    Ok(mmd_from(&chamfer_matrix(gen, refs), refs.len()))
}

pub fn coverage(gen: &[PointCloud], refs: &[PointCloud]) -> Result<f64> {
    check_sets(gen, refs)?;
    Ok(coverage_from(&chamfer_matrix(gen, refs), refs.len()))
}

/// Greedy max-min subset. The first point is drawn from `seed`; each next
/// point maximizes its distance to the chosen set, ties to the lowest index.
/// Returns the chosen indices in selection order.
pub fn farthest_point_indices(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(param(format!("cannot sample {k} of {n} points")));
    }
    let start = rng_from_seed(seed).random_range(0..n);
    Ok(farthest_point_indices_from(cloud, k, start))
}

pub(crate) fn farthest_point_indices_from(cloud: &PointCloud, k: usize, start: usize) -> Vec<usize> {
    let pts = &cloud.points;
    let mut chosen = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; pts.len()];
    let mut next = start;
    for _ in 0..k {
        chosen.push(next);
        min_d[next] = f64::NEG_INFINITY;
        let c = pts[next];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, d) in min_d.iter_mut().enumerate() {
            if *d == f64::NEG_INFINITY {
                continue;
            }
            let dd = sq_dist(&pts[i], &c);
            if dd < *d {
                *d = dd;
            }
            if *d > best_d {
                best_d = *d;
                best = i;
            }
        }
        next = best;
    }
    chosen
}

pub fn farthest_point_sampling(cloud: &PointCloud, k: usize, seed: u64) -> Result<PointCloud> {
    let idx = farthest_point_indices(cloud, k, seed)?;
    PointCloud::new(idx.into_iter().map(|i| cloud.points[i]).collect())
}

/// Centers of surface voxels in `[0, 1]³`: voxel `i` maps to `(i + 0.5)/N`.
pub fn voxels_to_points(grid: &VoxelGrid) -> Result<PointCloud> {
    let n = grid.n() as f64;
    let pts: Vec<[f64; 3]> = active_voxels(grid)
        .into_iter()
        .map(|p| p.map(|c| (c as f64 + 0.5) / n))
        .collect();
    if pts.is_empty() {
        return Err(param("grid has no surface voxels"));
    }
    PointCloud::new(pts)
}

/// Set-level evaluation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean CD between `gen[i]` and `ref[i]`, when the sets pair up.
    pub cd: Option<f64>,
    pub mmd: f64,
    pub cov: f64,
    pub n_gen: usize,
    pub n_ref: usize,
    pub k_points: usize,
}

pub fn evaluate_sets(gen: &[PointCloud], refs: &[PointCloud], k_points: usize) -> Result<MetricReport> {
    check_sets(gen, refs)?;
    let dist = chamfer_matrix(gen, refs);
    let cd = (gen.len() == refs.len()).then(|| (0..gen.len()).map(|i| dist[i][i]).sum::<f64>() / gen.len() as f64);
    Ok(MetricReport {
        cd,
        mmd: mmd_from(&dist, refs.len()),
        cov: coverage_from(&dist, refs.len()),
        n_gen: gen.len(),
        n_ref: refs.len(),
        k_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn random_cloud(rng: &mut crate::rng::Rng, n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap()
    }

    fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
        let side = |x: &PointCloud, y: &PointCloud| {
            x.points().iter().map(|p| y.points().iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min)).sum::<f64>()
                / x.len() as f64
        };
        side(a, b) + side(b, a)
    }

    #[test]
    fn chamfer_cases() {
        let a = PointCloud::new(vec![[0.0; 3]]).unwrap();
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(chamfer(&a, &b), 2.0);
        assert_eq!(chamfer(&a, &a), 0.0);
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let x = random_cloud(&mut rng, 20);
            let y = random_cloud(&mut rng, 37);
            assert_eq!(chamfer(&x, &y), brute_chamfer(&x, &y));
            assert_eq!(chamfer(&x, &y), chamfer(&y, &x));
        }
    }

    #[test]
    fn kdtree_handles_grid_duplicates() {
        let g = crate::slat::gen_toy_shape(crate::slat::ShapeFamily::Box, 16, 0).unwrap();
        let pts = voxels_to_points(&g).unwrap();
        let mut rng = rng_from_seed(1);
        let other = random_cloud(&mut rng, 50);
        assert_eq!(chamfer(&pts, &other), brute_chamfer(&pts, &other));
    }

    #[test]
    fn set_metrics_trivial_cases() {
        let mut rng = rng_from_seed(8);
        let refs: Vec<_> = (0..4).map(|_| random_cloud(&mut rng, 10)).collect();
        assert_eq!(mmd(&refs, &refs).unwrap(), 0.0);
        assert_eq!(coverage(&refs, &refs).unwrap(), 1.0);
        let one = vec![refs[0].clone(), refs[0].clone(), refs[0].clone()];
        assert!(coverage(&one, &refs).unwrap() <= 0.25);
        let gen = vec![random_cloud(&mut rng, 10), refs[2].clone()];
        assert_eq!(mmd(&gen, &refs[2..3]).unwrap(), 0.0);
        assert!(mmd(&[], &refs).is_err());
        assert!(coverage(&refs, &[]).is_err());
    }

    #[test]
    fn fps_hand_traced() {
        let line = PointCloud::new((0..4).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap();
        assert_eq!(farthest_point_indices_from(&line, 3, 0), vec![0, 3, 1]);
        let all = farthest_point_indices(&line, 4, 5).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        let one = farthest_point_indices(&line, 1, 5).unwrap();
        assert_eq!(one, vec![rng_from_seed(5).random_range(0..4)]);
        assert!(farthest_point_sampling(&line, 5, 0).is_err());
    }

    #[test]
    fn voxel_points() {
        let mut g = VoxelGrid::new(4).unwrap();
        assert!(voxels_to_points(&g).is_err());
        g.set(2, 2, 2, true);
        assert_eq!(voxels_to_points(&g).unwrap().points(), &[[0.625, 0.625, 0.625]]);
    }

    #[test]
    fn report_fields() {
        let mut rng = rng_from_seed(2);
        let refs: Vec<_> = (0..3).map(|_| random_cloud(&mut rng, 8)).collect();
        let r = evaluate_sets(&refs, &refs, 8).unwrap();
        assert_eq!((r.cd, r.mmd, r.cov, r.n_gen, r.n_ref), (Some(0.0), 0.0, 1.0, 3, 3));
    }
}
