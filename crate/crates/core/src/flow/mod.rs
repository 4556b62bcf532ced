//! Rectified-flow training and sampling over latent tokens.
//!
//! A clean latent `ℓ₀` and Gaussian noise `ε` are mixed as
//! `ℓ(t) = (1 − t)·ℓ₀ + t·ε`; the model regresses the velocity `ε − ℓ₀`.
//! Sampling integrates the learned velocity from `t = 1` down to `t = 0`
//! with uniform Euler steps.

mod checkpoint;
mod model;
mod optim;
mod sample;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{
    coordinate_codes, Conditioning, FlowModel, FlowParams, ForwardCache, LatentLayout, ModelConfig,
};
pub use optim::AdamW;
pub use sample::{
    reconstruct, sample, sample_sparse, sample_unconditional, sort_views_by_visibility, view_schedule,
    visibility_order, SampleConfig,
};
pub use train::{loss_and_gradient, train, train_with, TrainConfig, TrainingPair, TrainingSource};

use ndarray::Array2;

use crate::attention::Mat;
use crate::error::{param, shape};
use crate::masks2d::BinaryMask;
use crate::patch_tokens::{patch_fraction, Image, PatchEmbedder, PatchWeightVector};
use crate::{Error, Result};

/// One conditioning view: image tokens plus per-token visibility and
/// occlusion weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewCondition {
    /// `K × C'`.
    pub tokens: Mat,
    pub c_vis: PatchWeightVector,
    pub c_occ: PatchWeightVector,
    /// Number of visible object pixels.
    pub visibility_count: usize,
}

impl ViewCondition {
    pub fn new(tokens: Mat, c_vis: PatchWeightVector, c_occ: PatchWeightVector, visibility_count: usize) -> Result<Self> {
        if c_vis.len() != tokens.nrows() || c_occ.len() != tokens.nrows() {
            return Err(shape(format!(
                "{} tokens with {} visibility and {} occlusion weights",
                tokens.nrows(),
                c_vis.len(),
                c_occ.len()
            )));
        }
        if c_vis.values().iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateConditioning);
        }
        Ok(Self { tokens, c_vis, c_occ, visibility_count })
    }

    /// Builds a view from a rendered image, its visible-object mask and the
    /// occluder mask. The image is zeroed outside `vis` before embedding.
    pub fn from_render(embedder: &PatchEmbedder, image: &Image, vis: &BinaryMask, occ: &BinaryMask) -> Result<Self> {
        let visibility_count = vis.count_ones();
        if visibility_count == 0 {
            return Err(Error::DegenerateConditioning);
        }
        let tokens = embedder.embed(&image.masked(vis)?)?;
        let c_vis = patch_fraction(vis, &embedder.spec)?;
        let c_occ = patch_fraction(occ, &embedder.spec)?;
        Self::new(tokens, c_vis, c_occ, visibility_count)
    }
}

fn check_same(a: &Mat, b: &Mat, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `ℓ(t) = (1 − t)·ℓ₀ + t·ε`.
pub fn add_noise(l0: &Mat, eps: &Mat, t: f64) -> Result<Mat> {
    check_same(l0, eps, "add_noise")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(param(format!("noise level {t} outside [0, 1]")));
    }
    Ok(Array2::from_shape_fn(l0.raw_dim(), |ij| (1.0 - t) * l0[ij] + t * eps[ij]))
}

/// Mean squared error between `pred` and the target velocity `ε − ℓ₀`.
pub fn flow_loss(pred: &Mat, eps: &Mat, l0: &Mat) -> Result<f64> {
    Ok(flow_loss_and_grad(pred, eps, l0)?.0)
}

/// Loss and its gradient with respect to `pred`.
pub fn flow_loss_and_grad(pred: &Mat, eps: &Mat, l0: &Mat) -> Result<(f64, Mat)> {
    check_same(pred, eps, "flow_loss")?;
    check_same(pred, l0, "flow_loss")?;
    if pred.is_empty() {
        return Err(shape("flow_loss on empty tokens"));
    }
    let n = pred.len() as f64;
    let diff = Array2::from_shape_fn(pred.raw_dim(), |ij| pred[ij] - (eps[ij] - l0[ij]));
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// Groups `g³` neighboring cells of an `r³` x-major token grid into one
/// token. Output token `(X, Y, Z)` (x-major over `(r/g)³`) concatenates its
/// cells' features, sub-cells x-major.
pub fn patchify(tokens: &Mat, r: usize, g: usize) -> Result<Mat> {
    let (q, ch) = group_dims(tokens.nrows(), tokens.ncols(), r, g)?;
    let mut out = Array2::zeros((q * q * q, g * g * g * ch));
    for_each_cell(r, g, |cell, tok, slot| {
        for c in 0..ch {
            out[[tok, slot * ch + c]] = tokens[[cell, c]];
        }
    });
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify(tokens: &Mat, r: usize, g: usize) -> Result<Mat> {
    if g == 0 || !tokens.ncols().is_multiple_of(g * g * g) {
        return Err(shape(format!("token width {} not divisible by {g}³", tokens.ncols())));
    }
    let ch = tokens.ncols() / (g * g * g);
    let (q, _) = group_dims(r * r * r, ch, r, g)?;
    if tokens.nrows() != q * q * q {
        return Err(shape(format!("expected {} grouped tokens, got {}", q * q * q, tokens.nrows())));
    }
    let mut out = Array2::zeros((r * r * r, ch));
    for_each_cell(r, g, |cell, tok, slot| {
        for c in 0..ch {
            out[[cell, c]] = tokens[[tok, slot * ch + c]];
        }
    });
    Ok(out)
}

fn group_dims(rows: usize, cols: usize, r: usize, g: usize) -> Result<(usize, usize)> {
    if g == 0 || r == 0 || !r.is_multiple_of(g) {
        return Err(shape(format!("group {g} does not divide r={r}")));
    }
    if rows != r * r * r {
        return Err(shape(format!("expected r³={} tokens, got {rows}", r * r * r)));
    }
    Ok((r / g, cols))
}

fn for_each_cell(r: usize, g: usize, mut f: impl FnMut(usize, usize, usize)) {
    let q = r / g;
    for x in 0..r {
        for y in 0..r {
            for z in 0..r {
                let cell = (x * r + y) * r + z;
                let tok = ((x / g) * q + y / g) * q + z / g;
                let slot = ((x % g) * g + y % g) * g + z % g;
                f(cell, tok, slot);
            }
        }
    }
}

/// Occupancy fractions in `[0, 1]` map to flow space `[-1, 1]`.
pub fn fraction_to_flow(f: f64) -> f64 {
    2.0 * f - 1.0
}

pub fn flow_to_fraction(x: f64) -> f64 {
    (x + 1.0) / 2.0
}
