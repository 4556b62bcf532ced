use ndarray::{s, Array2};

use super::{randn, Mat, ParamSet};
use crate::error::{shape, Error};
use crate::patch_tokens::PatchWeightVector;
use crate::Result;

/// Projections of one multi-head attention layer. Queries come from the
/// latents (`C → H·D`), keys and values from the context (`C' → 2·H·D`,
/// keys first), and the concatenated heads map back through `H·D → C`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub wq: Mat,
    pub wkv: Mat,
    pub wout: Mat,
    pub heads: usize,
}

impl AttentionParams {
    pub fn zeros(width: usize, context_width: usize, heads: usize, head_dim: usize) -> Self {
        let hd = heads * head_dim;
        Self {
            wq: Array2::zeros((width, hd)),
            wkv: Array2::zeros((context_width, 2 * hd)),
            wout: Array2::zeros((hd, width)),
            heads,
        }
    }

    /// Entries with variance `1/fan_in`, output projection scaled by `out_gain`.
    pub fn random(
        rng: &mut crate::rng::Rng,
        width: usize,
        context_width: usize,
        heads: usize,
        head_dim: usize,
        out_gain: f64,
    ) -> Self {
        let hd = heads * head_dim;
        Self {
            wq: randn(rng, width, hd, 1.0 / (width as f64).sqrt()),
            wkv: randn(rng, context_width, 2 * hd, 1.0 / (context_width as f64).sqrt()),
            wout: randn(rng, hd, width, out_gain / (hd as f64).sqrt()),
            heads,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.wq.ncols() / self.heads
    }
}

impl ParamSet for AttentionParams {
    fn named(&self) -> Vec<(String, &Mat)> {
        vec![("wq".into(), &self.wq), ("wkv".into(), &self.wkv), ("wout".into(), &self.wout)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.wq, &mut self.wkv, &mut self.wout]
    }
}

/// Row-wise softmax with optional multiplicative column weights:
/// `A[i,j] = w_j·exp(S[i,j]) / Σ_k w_k·exp(S[i,k])`.
///
/// The row maximum is taken over positively weighted columns only, and the
/// weight multiplies after exponentiation, so zero-weight columns are
/// exactly zero.
pub fn weighted_softmax(scores: &Mat, weights: Option<&[f64]>) -> Result<Mat> {
    if let Some(w) = weights {
        if w.len() != scores.ncols() {
            return Err(shape(format!("{} weights for {} columns", w.len(), scores.ncols())));
        }
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::DegenerateConditioning);
        }
    }
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let m = match weights {
            Some(w) => row
                .iter()
                .zip(w)
                .filter(|(_, &wj)| wj > 0.0)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max),
            None => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        match weights {
            Some(w) => {
                for (v, &wj) in row.iter_mut().zip(w) {
                    *v = if wj > 0.0 { wj * (*v - m).exp() } else { 0.0 };
                }
            }
            None => row.mapv_inplace(|v| (v - m).exp()),
        }
        let sum = row.sum();
        // NaN scores propagate; only a true zero mass is degenerate
        if sum == 0.0 {
            return Err(Error::DegenerateConditioning);
        }
        row.mapv_inplace(|v| v / sum);
    }
    Ok(out)
}

/// `softmax(S + log c)` evaluated literally: the bias is `ln c_j`, with
/// `-∞` for zero weights.
pub fn additive_bias_softmax(scores: &Mat, c: &[f64]) -> Result<Mat> {
    if c.len() != scores.ncols() {
        return Err(shape(format!("{} weights for {} columns", c.len(), scores.ncols())));
    }
    if !c.iter().any(|&v| v > 0.0) {
        return Err(Error::DegenerateConditioning);
    }
    let bias: Vec<f64> = c.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        for (v, b) in row.iter_mut().zip(&bias) {
            *v += b;
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(out)
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Mat,
    context: Mat,
    q: Mat,
    kv: Mat,
    /// One `L × K` attention matrix per head.
    pub probs: Vec<Mat>,
    concat: Mat,
}

/// Multi-head attention of latents `x` (`L × C`) over `context`
/// (`K × C'`), optionally weighting each context token.
pub fn attention_forward(
    p: &AttentionParams,
    x: &Mat,
    context: &Mat,
    weights: Option<&[f64]>,
) -> Result<(Mat, AttentionCache)> {
    if x.ncols() != p.wq.nrows() || context.ncols() != p.wkv.nrows() {
        return Err(shape(format!(
            "attention expects widths {}/{}, got {}/{}",
            p.wq.nrows(),
            p.wkv.nrows(),
            x.ncols(),
            context.ncols()
        )));
    }
    if let Some(w) = weights {
        if w.len() != context.nrows() {
            return Err(shape(format!("{} weights for {} context tokens", w.len(), context.nrows())));
        }
    }
    let (h, d) = (p.heads, p.head_dim());
    let hd = h * d;
    let scale = 1.0 / (d as f64).sqrt();
    let q = x.dot(&p.wq);
    let kv = context.dot(&p.wkv);
    let mut concat = Array2::zeros((x.nrows(), hd));
    let mut probs = Vec::with_capacity(h);
    for head in 0..h {
        let qh = q.slice(s![.., head * d..(head + 1) * d]);
        let kh = kv.slice(s![.., head * d..(head + 1) * d]);
        let vh = kv.slice(s![.., hd + head * d..hd + (head + 1) * d]);
        let scores = qh.dot(&kh.t()) * scale;
        let a = weighted_softmax(&scores, weights)?;
        concat.slice_mut(s![.., head * d..(head + 1) * d]).assign(&a.dot(&vh));
        probs.push(a);
    }
    let y = concat.dot(&p.wout);
    Ok((y, AttentionCache { x: x.clone(), context: context.clone(), q, kv, probs, concat }))
}

/// Returns `(dx, dcontext)` and accumulates parameter gradients.
pub fn attention_backward(p: &AttentionParams, cache: &AttentionCache, dy: &Mat, grads: &mut AttentionParams) -> (Mat, Mat) {
    let (h, d) = (p.heads, p.head_dim());
    let hd = h * d;
    let scale = 1.0 / (d as f64).sqrt();
    grads.wout += &cache.concat.t().dot(dy);
    let dconcat = dy.dot(&p.wout.t());
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dkv = Array2::zeros(cache.kv.raw_dim());
    for head in 0..h {
        let a = &cache.probs[head];
        let qh = cache.q.slice(s![.., head * d..(head + 1) * d]);
        let kh = cache.kv.slice(s![.., head * d..(head + 1) * d]);
        let vh = cache.kv.slice(s![.., hd + head * d..hd + (head + 1) * d]);
        let doh = dconcat.slice(s![.., head * d..(head + 1) * d]);
        let da = doh.dot(&vh.t());
        dkv.slice_mut(s![.., hd + head * d..hd + (head + 1) * d]).assign(&a.t().dot(&doh));
        // softmax Jacobian: dS = A ⊙ (dA − rowsum(dA ⊙ A))
        let mut ds = da;
        for (mut dr, ar) in ds.rows_mut().into_iter().zip(a.rows()) {
            let dot: f64 = dr.iter().zip(ar.iter()).map(|(x, y)| x * y).sum();
            for (v, &aij) in dr.iter_mut().zip(ar.iter()) {
                *v = aij * (*v - dot);
            }
        }
        ds *= scale;
        dq.slice_mut(s![.., head * d..(head + 1) * d]).assign(&ds.dot(&kh));
        dkv.slice_mut(s![.., head * d..(head + 1) * d]).assign(&ds.t().dot(&qh));
    }
    grads.wq += &cache.x.t().dot(&dq);
    grads.wkv += &cache.context.t().dot(&dkv);
    (dq.dot(&p.wq.t()), dkv.dot(&p.wkv.t()))
}

/// Cross-attention of latents over conditioning tokens where each token's
/// attention mass is scaled by its visibility weight before normalization.
pub fn mask_weighted_cross_attention(
    latents: &Mat,
    cond: &Mat,
    c_vis: &PatchWeightVector,
    p: &AttentionParams,
) -> Result<Mat> {
    attention_forward(p, latents, cond, Some(c_vis.values())).map(|(y, _)| y)
}

/// Plain cross-attention whose keys and values come from the stacked
/// occlusion weights.
pub fn occlusion_aware_attention(latents: &Mat, occ_stack: &Mat, p: &AttentionParams) -> Result<Mat> {
    attention_forward(p, latents, occ_stack, None).map(|(y, _)| y)
}
