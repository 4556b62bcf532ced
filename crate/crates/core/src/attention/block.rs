use ndarray::{Array2, Axis};

use super::layers::{layer_norm_backward, layer_norm_forward, time_embedding, LayerNorm, LnCache, Mlp, MlpCache};
use super::mha::{attention_backward, attention_forward, AttentionCache, AttentionParams};
use super::{prefixed, randn, Mat, ParamSet};
use crate::error::shape;
use crate::Result;

/// One transformer block:
///
/// ```text
/// x ← x + SelfAttn(LN₁(x) + τ(t))
/// x ← x + MaskWeightedCrossAttn(LN₂(x), cond, c_vis)
/// x ← x + OcclusionAttn(LN₃(x), stack(c_occ))
/// x ← x + MLP(LN₄(x))
/// ```
///
/// where `τ(t)` is a linear map of the sinusoidal time embedding, added to
/// every token.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub self_attn: AttentionParams,
    pub cross_attn: AttentionParams,
    pub occ_attn: AttentionParams,
    pub mlp: Mlp,
    pub norms: [LayerNorm; 4],
    /// `time_dim × C`.
    pub time_w: Mat,
    /// `1 × C`.
    pub time_b: Mat,
}

impl BlockParams {
    pub fn zeros(width: usize, cond_width: usize, heads: usize, head_dim: usize, mlp_hidden: usize, time_dim: usize) -> Self {
        Self {
            self_attn: AttentionParams::zeros(width, width, heads, head_dim),
            cross_attn: AttentionParams::zeros(width, cond_width, heads, head_dim),
            occ_attn: AttentionParams::zeros(width, cond_width, heads, head_dim),
            mlp: Mlp {
                w1: Array2::zeros((width, mlp_hidden)),
                b1: Array2::zeros((1, mlp_hidden)),
                w2: Array2::zeros((mlp_hidden, width)),
                b2: Array2::zeros((1, width)),
            },
            norms: std::array::from_fn(|_| LayerNorm::new(width)),
            time_w: Array2::zeros((time_dim, width)),
            time_b: Array2::zeros((1, width)),
        }
    }

    /// Scaled-normal init; residual output projections use `out_gain`.
    pub fn random(
        rng: &mut crate::rng::Rng,
        width: usize,
        cond_width: usize,
        heads: usize,
        head_dim: usize,
        mlp_hidden: usize,
        time_dim: usize,
        out_gain: f64,
    ) -> Self {
        let mut b = Self::zeros(width, cond_width, heads, head_dim, mlp_hidden, time_dim);
        b.self_attn = AttentionParams::random(rng, width, width, heads, head_dim, out_gain);
        b.cross_attn = AttentionParams::random(rng, width, cond_width, heads, head_dim, out_gain);
        b.occ_attn = AttentionParams::random(rng, width, cond_width, heads, head_dim, out_gain);
        b.mlp.w1 = randn(rng, width, mlp_hidden, 1.0 / (width as f64).sqrt());
        b.mlp.w2 = randn(rng, mlp_hidden, width, out_gain / (mlp_hidden as f64).sqrt());
        b.time_w = randn(rng, time_dim, width, 1.0 / (time_dim as f64).sqrt());
        b
    }

    pub fn width(&self) -> usize {
        self.self_attn.wq.nrows()
    }

    pub fn time_dim(&self) -> usize {
        self.time_w.nrows()
    }
}

impl ParamSet for BlockParams {
    fn named(&self) -> Vec<(String, &Mat)> {
        let mut v = prefixed("self_attn", self.self_attn.named());
        v.extend(prefixed("cross_attn", self.cross_attn.named()));
        v.extend(prefixed("occ_attn", self.occ_attn.named()));
        v.extend(prefixed("mlp", self.mlp.named()));
        for (i, n) in self.norms.iter().enumerate() {
            v.extend(prefixed(&format!("norm{}", i + 1), n.named()));
        }
        v.push(("time_w".into(), &self.time_w));
        v.push(("time_b".into(), &self.time_b));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.self_attn.tensors_mut();
        v.extend(self.cross_attn.tensors_mut());
        v.extend(self.occ_attn.tensors_mut());
        v.extend(self.mlp.tensors_mut());
        for n in &mut self.norms {
            v.extend(n.tensors_mut());
        }
        v.push(&mut self.time_w);
        v.push(&mut self.time_b);
        v
    }
}

/// Conditioning inputs shared by every block of a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct BlockInputs<'a> {
    /// `K × C'` conditioning tokens.
    pub cond: &'a Mat,
    pub c_vis: &'a [f64],
    /// `K × C'` replicated occlusion weights.
    pub occ_stack: &'a Mat,
    /// Noise level in `[0, 1]`.
    pub t: f64,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    temb: Mat,
    ln: [LnCache; 4],
    self_attn: AttentionCache,
    cross_attn: AttentionCache,
    occ_attn: AttentionCache,
    mlp: MlpCache,
}

impl BlockCache {
    pub fn cross_attention_probs(&self) -> &[Mat] {
        &self.cross_attn.probs
    }
}

pub fn block_forward(p: &BlockParams, x: &Mat, inp: BlockInputs<'_>) -> Result<(Mat, BlockCache)> {
    if x.ncols() != p.width() {
        return Err(shape(format!("block width {} but latents have {} columns", p.width(), x.ncols())));
    }
    let temb = time_embedding(inp.t, p.time_dim());
    let tmod = temb.dot(&p.time_w) + &p.time_b;

    let (h1, ln1) = layer_norm_forward(&p.norms[0], x);
    let h1 = h1 + &tmod;
    let (a1, c1) = attention_forward(&p.self_attn, &h1, &h1, None)?;
    let x1 = x + &a1;

    let (h2, ln2) = layer_norm_forward(&p.norms[1], &x1);
    let (a2, c2) = attention_forward(&p.cross_attn, &h2, inp.cond, Some(inp.c_vis))?;
    let x2 = x1 + &a2;

    let (h3, ln3) = layer_norm_forward(&p.norms[2], &x2);
    let (a3, c3) = attention_forward(&p.occ_attn, &h3, inp.occ_stack, None)?;
    let x3 = x2 + &a3;

    let (h4, ln4) = layer_norm_forward(&p.norms[3], &x3);
    let (a4, c4) = p.mlp.forward(&h4);
    let x4 = x3 + &a4;

    let cache = BlockCache { temb, ln: [ln1, ln2, ln3, ln4], self_attn: c1, cross_attn: c2, occ_attn: c3, mlp: c4 };
    Ok((x4, cache))
}

/// Gradients of one block's inputs.
#[derive(Clone, Debug)]
pub struct BlockGrads {
    pub dx: Mat,
    pub dcond: Mat,
    pub docc_stack: Mat,
}

pub fn block_backward(p: &BlockParams, cache: &BlockCache, dy: &Mat, grads: &mut BlockParams) -> BlockGrads {
    // MLP residual
    let mut dx = dy.clone();
    let dh4 = p.mlp.backward(&cache.mlp, dy, &mut grads.mlp);
    dx += &layer_norm_backward(&p.norms[3], &cache.ln[3], &dh4, &mut grads.norms[3]);

    let (dh3, docc_stack) = attention_backward(&p.occ_attn, &cache.occ_attn, &dx, &mut grads.occ_attn);
    dx += &layer_norm_backward(&p.norms[2], &cache.ln[2], &dh3, &mut grads.norms[2]);

    let (dh2, dcond) = attention_backward(&p.cross_attn, &cache.cross_attn, &dx, &mut grads.cross_attn);
    dx += &layer_norm_backward(&p.norms[1], &cache.ln[1], &dh2, &mut grads.norms[1]);

    let (dq_in, dkv_in) = attention_backward(&p.self_attn, &cache.self_attn, &dx, &mut grads.self_attn);
    let dh1 = dq_in + dkv_in;
    let dtmod = dh1.sum_axis(Axis(0)).insert_axis(Axis(0));
    grads.time_b += &dtmod;
    grads.time_w += &cache.temb.t().dot(&dtmod);
    dx += &layer_norm_backward(&p.norms[0], &cache.ln[0], &dh1, &mut grads.norms[0]);

    BlockGrads { dx, dcond, docc_stack }
}
