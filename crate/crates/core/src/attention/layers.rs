use ndarray::{Array2, Axis};

use super::{Mat, ParamSet};

pub const LN_EPS: f64 = 1e-5;

/// Layer normalization over the feature axis with learned scale and shift
/// (each `1 × C`).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Mat,
    pub beta: Mat,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self { gamma: Array2::ones((1, width)), beta: Array2::zeros((1, width)) }
    }
}

impl ParamSet for LayerNorm {
    fn named(&self) -> Vec<(String, &Mat)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[derive(Clone, Debug)]
pub struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub fn layer_norm_forward(ln: &LayerNorm, x: &Mat) -> (Mat, LnCache) {
    let c = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / c;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        inv_std.push(inv);
    }
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, LnCache { xhat, inv_std })
}

/// Returns `dx` and accumulates into `grads`.
pub fn layer_norm_backward(ln: &LayerNorm, cache: &LnCache, dy: &Mat, grads: &mut LayerNorm) -> Mat {
    grads.gamma += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    grads.beta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * &ln.gamma;
    let c = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (i, (mut out, (dh, xh))) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows().into_iter().zip(cache.xhat.rows()))
        .enumerate()
    {
        let s1 = dh.sum();
        let s2 = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
        let inv = cache.inv_std[i];
        for j in 0..out.len() {
            out[j] = inv / c * (c * dh[j] - s1 - xh[j] * s2);
        }
    }
    dx
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044715;

/// Tanh approximation of GELU.
pub fn gelu(a: f64) -> f64 {
    0.5 * a * (1.0 + (GELU_K * (a + GELU_C * a * a * a)).tanh())
}

pub fn gelu_grad(a: f64) -> f64 {
    let th = (GELU_K * (a + GELU_C * a * a * a)).tanh();
    0.5 * (1.0 + th) + 0.5 * a * (1.0 - th * th) * GELU_K * (1.0 + 3.0 * GELU_C * a * a)
}

/// Two-layer feed-forward network with GELU.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

impl ParamSet for Mlp {
    fn named(&self) -> Vec<(String, &Mat)> {
        vec![("w1".into(), &self.w1), ("b1".into(), &self.b1), ("w2".into(), &self.w2), ("b2".into(), &self.b2)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    x: Mat,
    pre: Mat,
    act: Mat,
}

impl Mlp {
    pub fn forward(&self, x: &Mat) -> (Mat, MlpCache) {
        let pre = x.dot(&self.w1) + &self.b1;
        let act = pre.mapv(gelu);
        let y = act.dot(&self.w2) + &self.b2;
        (y, MlpCache { x: x.clone(), pre, act })
    }

    pub fn backward(&self, cache: &MlpCache, dy: &Mat, grads: &mut Mlp) -> Mat {
        grads.w2 += &cache.act.t().dot(dy);
        grads.b2 += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dpre = dy.dot(&self.w2.t());
        ndarray::Zip::from(&mut dpre).and(&cache.pre).for_each(|d, &a| *d *= gelu_grad(a));
        grads.w1 += &cache.x.t().dot(&dpre);
        grads.b1 += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
        dpre.dot(&self.w1.t())
    }
}

/// `[sin(1000·t·ω_k), cos(1000·t·ω_k)]` for `ω_k = 10000^(-k/half)`,
/// `k < half = dim/2`, as a `1 × dim` row.
pub fn time_embedding(t: f64, dim: usize) -> Mat {
    let half = dim / 2;
    let mut e = Array2::zeros((1, dim));
    for k in 0..half {
        let freq = (-(10000f64).ln() * k as f64 / half as f64).exp();
        let arg = 1000.0 * t * freq;
        e[[0, k]] = arg.sin();
        e[[0, half + k]] = arg.cos();
    }
    e
}
