use ndarray::Array2;
use occlusym::attention::{Mat, ParamSet};
use rand_distr::{Distribution, StandardNormal};

pub fn randn(rng: &mut occlusym::rng::Rng, rows: usize, cols: usize) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, 0 when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(n).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut n.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_mat_grad(x: &Mat, h: f64, f: impl Fn(&Mat) -> f64) -> Mat {
    let mut g = Array2::zeros(x.raw_dim());
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let orig = xp[[i, j]];
        xp[[i, j]] = orig + h;
        let fp = f(&xp);
        xp[[i, j]] = orig - h;
        let fm = f(&xp);
        xp[[i, j]] = orig;
        g[[i, j]] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Relative error of the full parameter gradient of `p` against central
/// differences of `f`, plus the tensor with the largest absolute
/// discrepancy.
pub fn param_grad_error<P: ParamSet>(p: &P, analytic: &P, h: f64, mut f: impl FnMut(&P) -> f64) -> (f64, String) {
    let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
    let an: Vec<Vec<f64>> = analytic.named().iter().map(|(_, t)| t.iter().copied().collect()).collect();
    let (mut all_an, mut all_num) = (Vec::new(), Vec::new());
    let mut worst = (0.0, String::new());
    let mut q = p.clone();
    for k in 0..names.len() {
        let len = q.tensors_mut()[k].len();
        let mut num = Vec::with_capacity(len);
        for idx in 0..len {
            let orig = q.tensors_mut()[k].as_slice_mut().unwrap()[idx];
            q.tensors_mut()[k].as_slice_mut().unwrap()[idx] = orig + h;
            let fp = f(&q);
            q.tensors_mut()[k].as_slice_mut().unwrap()[idx] = orig - h;
            let fm = f(&q);
            q.tensors_mut()[k].as_slice_mut().unwrap()[idx] = orig;
            num.push((fp - fm) / (2.0 * h));
        }
        let abs = an[k].iter().zip(&num).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
        if abs > worst.0 {
            worst = (abs, names[k].clone());
        }
        all_an.extend_from_slice(&an[k]);
        all_num.extend(num);
    }
    (rel_err(&all_an, &all_num), worst.1)
}

pub fn dot(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn flat(m: &Mat) -> Vec<f64> {
    m.iter().copied().collect()
}
