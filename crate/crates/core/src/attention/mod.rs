//! Visibility-weighted multi-head cross-attention, the occlusion-aware
//! attention layer, and the transformer block that stacks them, each with
//! an analytic backward pass.

mod block;
mod layers;
mod mha;

pub use block::{block_backward, block_forward, BlockCache, BlockGrads, BlockInputs, BlockParams};
pub use layers::{gelu, gelu_grad, layer_norm_backward, layer_norm_forward, time_embedding, LayerNorm, LnCache, Mlp};
pub use mha::{
    additive_bias_softmax, attention_backward, attention_forward, mask_weighted_cross_attention,
    occlusion_aware_attention, weighted_softmax, AttentionCache, AttentionParams,
};

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

pub type Mat = Array2<f64>;

/// A bag of named parameter matrices with a fixed traversal order.
pub trait ParamSet: Clone {
    fn named(&self) -> Vec<(String, &Mat)>;
    fn tensors_mut(&mut self) -> Vec<&mut Mat>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn add_assign(&mut self, other: &Self) {
        let src: Vec<&Mat> = other.named().into_iter().map(|(_, t)| t).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            *dst += s;
        }
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * k);
        }
    }

    fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters as one flat vector, in traversal order.
    fn flatten(&self) -> Vec<f64> {
        self.named().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, named: Vec<(String, &'a Mat)>) -> Vec<(String, &'a Mat)> {
    named.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

/// Normal entries with standard deviation `std`.
pub fn randn(rng: &mut crate::rng::Rng, rows: usize, cols: usize, std: f64) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}
