use occlusym::metrics::PointCloud;
use occlusym::rng::Rng;
use rand::Rng as _;

pub fn cloud(rng: &mut Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap()
}

pub fn d2(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
}

pub fn brute_cd(a: &PointCloud, b: &PointCloud) -> f64 {
    let one = |x: &PointCloud, y: &PointCloud| {
        let mut s = 0.0;
        for p in x.points() {
            let mut best = f64::INFINITY;
            for q in y.points() {
                best = best.min(d2(p, q));
            }
            s += best;
        }
        s / x.len() as f64
    };
    one(a, b) + one(b, a)
}

pub fn brute_mmd(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    refs.iter().map(|r| gen.iter().map(|g| brute_cd(g, r)).fold(f64::INFINITY, f64::min)).sum::<f64>() / refs.len() as f64
}

pub fn brute_cov(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    let mut hit = vec![false; refs.len()];
    for g in gen {
        let d: Vec<f64> = refs.iter().map(|r| brute_cd(g, r)).collect();
        let mut best = 0;
        for j in 0..d.len() {
            if d[j] < d[best] {
                best = j;
            }
        }
        hit[best] = true;
    }
    hit.iter().filter(|h| **h).count() as f64 / refs.len() as f64
}

pub fn min_pairwise(points: &[[f64; 3]]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            m = m.min(d2(&points[i], &points[j]));
        }
    }
    m
}
