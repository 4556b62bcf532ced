use occlusym::attention::*;
use occlusym::patch_tokens::{stack_occlusion_tokens, PatchWeightVector};
use occlusym::rng::{rng_from_seed, Rng};
use rand::Rng as _;

use super::numeric::{dot, flat, numeric_mat_grad, param_grad_error, randn, rel_err};

pub const H: f64 = 1e-5;

/// Direct softmax over all columns.
pub fn plain_softmax(s: &Mat) -> Mat {
    let mut out = s.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        row.mapv_inplace(|v| (v - m).exp() / z);
    }
    out
}

/// Mix of exact zeros, ones and fractions with at least one positive entry.
pub fn random_weights(rng: &mut Rng, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k)
        .map(|_| match rng.random_range(0..3) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    w[rng.random_range(0..k)] = rng.random_range(0.1..=1.0);
    w
}

/// Worst relative gradient error of one cross-attention instance with
/// `L, K ≤ 8`: visibility-weighted when `weighted`, plain otherwise (the
/// occlusion-aware layer).
pub fn attention_grad_error(seed: u64, weighted: bool) -> f64 {
    let mut rng = rng_from_seed(seed);
    let (l, k) = (rng.random_range(1..=8), rng.random_range(1..=8));
    let (c, cc, heads, d) = (rng.random_range(2..6), rng.random_range(2..6), rng.random_range(1..3), rng.random_range(1..4));
    let p = AttentionParams::random(&mut rng, c, cc, heads, d, 1.0);
    let x = randn(&mut rng, l, c);
    let ctx = randn(&mut rng, k, cc);
    let w = weighted.then(|| random_weights(&mut rng, k));
    let r = randn(&mut rng, l, c);
    let f = |p: &AttentionParams, x: &Mat, ctx: &Mat| dot(&attention_forward(p, x, ctx, w.as_deref()).unwrap().0, &r);

    let (_, cache) = attention_forward(&p, &x, &ctx, w.as_deref()).unwrap();
    let mut grads = p.zeros_like();
    let (dx, dctx) = attention_backward(&p, &cache, &r, &mut grads);
    let ex = rel_err(&flat(&dx), &flat(&numeric_mat_grad(&x, H, |x| f(&p, x, &ctx))));
    let ec = rel_err(&flat(&dctx), &flat(&numeric_mat_grad(&ctx, H, |c| f(&p, &x, c))));
    let (ep, _) = param_grad_error(&p, &grads, H, |q| f(q, &x, &ctx));
    ex.max(ec).max(ep)
}

/// Worst relative gradient error of one full transformer block instance.
pub fn block_grad_error(seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let (l, k) = (rng.random_range(1..=8), rng.random_range(1..=8));
    let (c, cc) = (4, 3);
    let mut p = BlockParams::random(&mut rng, c, cc, 2, 2, 8, 4, 0.7);
    for n in &mut p.norms {
        n.gamma = randn(&mut rng, 1, c) * 0.3 + 1.0;
        n.beta = randn(&mut rng, 1, c) * 0.1;
    }
    p.time_b = randn(&mut rng, 1, c) * 0.1;
    let x = randn(&mut rng, l, c);
    let cond = randn(&mut rng, k, cc);
    let c_vis = random_weights(&mut rng, k);
    let occ = stack_occlusion_tokens(&PatchWeightVector::new((0..k).map(|_| rng.random()).collect()).unwrap(), cc);
    let t: f64 = rng.random();
    let r = randn(&mut rng, l, c);
    let f = |p: &BlockParams, x: &Mat, cond: &Mat, occ: &Mat| {
        let inp = BlockInputs { cond, c_vis: &c_vis, occ_stack: occ, t };
        dot(&block_forward(p, x, inp).unwrap().0, &r)
    };
    let inp = BlockInputs { cond: &cond, c_vis: &c_vis, occ_stack: &occ, t };
    let (_, cache) = block_forward(&p, &x, inp).unwrap();
    let mut grads = p.zeros_like();
    let g = block_backward(&p, &cache, &r, &mut grads);
    let ex = rel_err(&flat(&g.dx), &flat(&numeric_mat_grad(&x, H, |x| f(&p, x, &cond, &occ))));
    let ec = rel_err(&flat(&g.dcond), &flat(&numeric_mat_grad(&cond, H, |cd| f(&p, &x, cd, &occ))));
    let eo = rel_err(&flat(&g.docc_stack), &flat(&numeric_mat_grad(&occ, H, |o| f(&p, &x, &cond, o))));
    let (ep, _) = param_grad_error(&p, &grads, H, |q| f(q, &x, &cond, &occ));
    ex.max(ec).max(eo).max(ep)
}

/// Multi-head cross-attention written with explicit loops. Weights, when
/// given, multiply the exponentiated scores before normalization.
pub fn reference_attention(p: &AttentionParams, x: &Mat, ctx: &Mat, weights: Option<&[f64]>) -> Mat {
    let (l, k) = (x.nrows(), ctx.nrows());
    let hd = p.wq.ncols();
    let d = hd / p.heads;
    let proj = |m: &Mat, w: &Mat, col: usize| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..d).map(|c| (0..m.ncols()).map(|r| m[[i, r]] * w[[r, col + c]]).sum()).collect())
            .collect()
    };
    let mut concat = Mat::zeros((l, hd));
    for h in 0..p.heads {
        let q = proj(x, &p.wq, h * d);
        let key = proj(ctx, &p.wkv, h * d);
        let val = proj(ctx, &p.wkv, hd + h * d);
        for i in 0..l {
            let s: Vec<f64> = (0..k)
                .map(|j| (0..d).map(|c| q[i][c] * key[j][c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = (0..k).map(|j| weights.map_or(1.0, |w| w[j]) * (s[j] - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..d {
                concat[[i, h * d + c]] = (0..k).map(|j| e[j] / z * val[j][c]).sum();
            }
        }
    }
    concat.dot(&p.wout)
}
