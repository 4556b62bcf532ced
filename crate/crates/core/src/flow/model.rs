use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{flow_to_fraction, fraction_to_flow, patchify, unpatchify, ViewCondition};
use crate::attention::{
    block_backward, block_forward, layer_norm_backward, layer_norm_forward, prefixed, randn, BlockCache, BlockInputs,
    BlockParams, LayerNorm, LnCache, Mat, ParamSet,
};
use crate::error::{param, shape};
use crate::patch_tokens::{stack_occlusion_tokens, PatchEmbedder, PatchWeightVector, TokenGridSpec};
use crate::rng::rng_for;
use crate::slat::{DenseLatent, Stage1Codec, VoxelGrid};
use crate::Result;

/// How latent tokens are laid out for the denoiser.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentLayout {
    /// Stage-1 dense latent of an `N³` grid with `r³` cells, grouped
    /// `group³` cells per token. Positions are learned.
    Dense { grid_n: usize, r: usize, sub_block: usize, group: usize },
    /// Stage-2 features on active voxels. Token count varies per sample;
    /// positions are fixed sinusoidal codes of the voxel coordinates.
    Sparse { grid_n: usize, channels: usize },
}

impl LatentLayout {
    pub fn grid_n(&self) -> usize {
        match *self {
            Self::Dense { grid_n, .. } | Self::Sparse { grid_n, .. } => grid_n,
        }
    }

    pub fn codec(&self) -> Option<Stage1Codec> {
        match *self {
            Self::Dense { r, sub_block, .. } => Some(Stage1Codec { r, sub_block }),
            Self::Sparse { .. } => None,
        }
    }

    /// Feature width of one model token.
    pub fn token_dim(&self) -> Result<usize> {
        match *self {
            Self::Dense { grid_n, group, .. } => {
                let ch = self.codec().expect("dense").channels(grid_n)?;
                Ok(ch * group * group * group)
            }
            Self::Sparse { channels, .. } => Ok(channels),
        }
    }

    /// Fixed token count, if any.
    pub fn n_tokens(&self) -> Option<usize> {
        match *self {
            Self::Dense { r, group, .. } => {
                let q = r / group.max(1);
                Some(q * q * q)
            }
            Self::Sparse { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid_n();
        if !(2..=256).contains(&n) {
            return Err(param(format!("grid resolution {n} outside 2..=256")));
        }
        match *self {
            Self::Dense { r, group, .. } => {
                if group == 0 || r % group != 0 {
                    return Err(param(format!("group {group} must divide r={r}")));
                }
                let d = self.token_dim()?;
                let t = self.n_tokens().unwrap_or(0);
                if d > 4096 || t > 4096 {
                    return Err(param(format!("{t} tokens of width {d} exceed the supported size")));
                }
            }
            Self::Sparse { channels, .. } => {
                if channels == 0 || channels > 4096 {
                    return Err(param(format!("sparse channels {channels} outside 1..=4096")));
                }
            }
        }
        Ok(())
    }
}

/// Architecture and fixed-embedder settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layout: LatentLayout,
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub blocks: usize,
    pub mlp_ratio: usize,
    pub time_dim: usize,
    pub tokens: TokenGridSpec,
    /// Conditioning token width `C'`.
    pub cond_width: usize,
    pub image_channels: usize,
    pub embed_seed: u64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layout: LatentLayout::Dense { grid_n: 16, r: 8, sub_block: 1, group: 2 },
            width: 64,
            heads: 4,
            head_dim: 16,
            blocks: 4,
            mlp_ratio: 4,
            time_dim: 32,
            tokens: TokenGridSpec::default(),
            cond_width: 64,
            image_channels: 1,
            embed_seed: 0,
            init_seed: 0,
        }
    }
}

const MAX_DIM: usize = 1024;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.tokens.validate()?;
        let dims = [
            ("width", self.width),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("cond_width", self.cond_width),
            ("time_dim", self.time_dim),
        ];
        for (name, v) in dims {
            if v == 0 || v > MAX_DIM {
                return Err(param(format!("{name} = {v} outside 1..={MAX_DIM}")));
            }
        }
        if self.heads * self.head_dim > MAX_DIM {
            return Err(param("heads × head_dim too large"));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(param(format!("time_dim {} must be even", self.time_dim)));
        }
        if !(1..=64).contains(&self.blocks) || !(1..=8).contains(&self.mlp_ratio) {
            return Err(param("blocks must be in 1..=64 and mlp_ratio in 1..=8"));
        }
        let patch_len = self.tokens.patch.saturating_mul(self.tokens.patch).saturating_mul(self.image_channels);
        if !(1..=4).contains(&self.image_channels)
            || self.tokens.n_prefix > 64
            || self.tokens.grid() > 64
            || patch_len > 16384
        {
            return Err(param("token grid or image channels out of range"));
        }
        Ok(())
    }

    /// Trainable parameter count, from the configuration alone.
    pub fn num_params(&self) -> Result<usize> {
        let (c, cc, hd, m, td) = (self.width, self.cond_width, self.heads * self.head_dim, self.mlp_ratio * self.width, self.time_dim);
        let d = self.layout.token_dim()?;
        let t = self.layout.n_tokens().unwrap_or(0);
        let k = self.tokens.token_count();
        let self_attn = c * hd + c * 2 * hd + hd * c;
        let cross_attn = c * hd + cc * 2 * hd + hd * c;
        let block = self_attn + 2 * cross_attn + (c * m + m + m * c + c) + 8 * c + td * c + c;
        Ok(d * c + c + t * c + self.blocks * block + 2 * c + c * d + d + k * cc)
    }
}

/// All trainable tensors of the denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    /// `D × C`.
    pub w_in: Mat,
    pub b_in: Mat,
    /// `T × C` learned positions (`0 × C` for sparse layouts).
    pub pos: Mat,
    pub blocks: Vec<BlockParams>,
    pub norm_out: LayerNorm,
    /// `C × D`.
    pub w_out: Mat,
    pub b_out: Mat,
    /// `K × C'` learned null-condition tokens.
    pub null_cond: Mat,
}

impl ParamSet for FlowParams {
    fn named(&self) -> Vec<(String, &Mat)> {
        let mut v = vec![("w_in".to_string(), &self.w_in), ("b_in".to_string(), &self.b_in), ("pos".to_string(), &self.pos)];
        for (i, b) in self.blocks.iter().enumerate() {
            v.extend(prefixed(&format!("blocks.{i}"), b.named()));
        }
        v.extend(prefixed("norm_out", self.norm_out.named()));
        v.push(("w_out".into(), &self.w_out));
        v.push(("b_out".into(), &self.b_out));
        v.push(("null_cond".into(), &self.null_cond));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = vec![&mut self.w_in, &mut self.b_in, &mut self.pos];
        for b in &mut self.blocks {
            v.extend(b.tensors_mut());
        }
        v.extend(self.norm_out.tensors_mut());
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v.push(&mut self.null_cond);
        v
    }
}

/// Which conditioning a forward pass sees.
#[derive(Clone, Copy, Debug)]
pub enum Conditioning<'a> {
    View(&'a ViewCondition),
    /// Learned null tokens with visibility and occlusion weights set to 1
    /// on the prefix and 0 on every patch.
    Null,
}

/// The conditional velocity network plus its fixed image embedder.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub config: ModelConfig,
    pub params: FlowParams,
    pub embedder: PatchEmbedder,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    x_in: Mat,
    blocks: Vec<BlockCache>,
    ln_out: LnCache,
    h_out: Mat,
}

/// Fixed sinusoidal codes of voxel coordinates, `L × width`. Column `j`
/// encodes axis `j mod 3` at frequency `⌊j/6⌋ + 1`, sine for even `⌊j/3⌋`
/// and cosine for odd.
pub fn coordinate_codes(coords: &[[usize; 3]], grid_n: usize, width: usize) -> Mat {
    Array2::from_shape_fn((coords.len(), width), |(i, j)| {
        let axis = j % 3;
        let k = j / 3;
        let freq = (k / 2 + 1) as f64;
        let u = (coords[i][axis] as f64 + 0.5) / grid_n as f64;
        let a = std::f64::consts::PI * freq * u;
        if k % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}

impl FlowModel {
    /// Random initialization drawn from `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.init_seed, "flow/init");
        let (c, d) = (config.width, config.layout.token_dim()?);
        let t = config.layout.n_tokens().unwrap_or(0);
        let gain = 1.0 / ((4 * config.blocks) as f64).sqrt();
        let w_in = randn(&mut rng, d, c, 1.0 / (d as f64).sqrt());
        let pos = randn(&mut rng, t, c, 0.1);
        let blocks = (0..config.blocks)
            .map(|_| {
                BlockParams::random(
                    &mut rng,
                    c,
                    config.cond_width,
                    config.heads,
                    config.head_dim,
                    config.mlp_ratio * c,
                    config.time_dim,
                    gain,
                )
            })
            .collect();
        let w_out = randn(&mut rng, c, d, 0.1 / (c as f64).sqrt());
        let null_cond = randn(&mut rng, config.tokens.token_count(), config.cond_width, 0.1);
        let params = FlowParams {
            w_in,
            b_in: Array2::zeros((1, c)),
            pos,
            blocks,
            norm_out: LayerNorm::new(c),
            w_out,
            b_out: Array2::zeros((1, d)),
            null_cond,
        };
        let embedder = PatchEmbedder::new(config.tokens, config.image_channels, config.cond_width, config.embed_seed)?;
        Ok(Self { config, params, embedder })
    }

    pub fn token_dim(&self) -> usize {
        self.params.w_in.nrows()
    }

    fn positions(&self, n_tokens: usize, coords: Option<&[[usize; 3]]>) -> Result<Mat> {
        match self.config.layout {
            LatentLayout::Dense { .. } => {
                if coords.is_some() || n_tokens != self.params.pos.nrows() {
                    return Err(shape(format!("dense model expects {} tokens and no coordinates", self.params.pos.nrows())));
                }
                Ok(self.params.pos.clone())
            }
            LatentLayout::Sparse { grid_n, .. } => {
                let coords = coords.ok_or_else(|| param("sparse model needs voxel coordinates"))?;
                if coords.len() != n_tokens {
                    return Err(shape(format!("{} coordinates for {n_tokens} tokens", coords.len())));
                }
                Ok(coordinate_codes(coords, grid_n, self.config.width))
            }
        }
    }

    fn null_weights(&self) -> PatchWeightVector {
        PatchWeightVector::prefix_only(&self.config.tokens)
    }

    /// Velocity prediction for noisy tokens `x` (`T × D`) at level `t`.
    pub fn forward(&self, x: &Mat, coords: Option<&[[usize; 3]]>, t: f64, cond: Conditioning<'_>) -> Result<(Mat, ForwardCache)> {
        if x.ncols() != self.token_dim() || x.nrows() == 0 {
            return Err(shape(format!("tokens are {:?}, model width is {}", x.dim(), self.token_dim())));
        }
        let p = &self.params;
        let null_w;
        let (cond_tokens, c_vis, c_occ) = match cond {
            Conditioning::View(v) => (&v.tokens, &v.c_vis, &v.c_occ),
            Conditioning::Null => {
                null_w = self.null_weights();
                (&p.null_cond, &null_w, &null_w)
            }
        };
        if cond_tokens.dim() != p.null_cond.dim() {
            return Err(shape(format!("condition tokens {:?}, model expects {:?}", cond_tokens.dim(), p.null_cond.dim())));
        }
        let occ_stack = stack_occlusion_tokens(c_occ, self.config.cond_width);
        let inputs = BlockInputs { cond: cond_tokens, c_vis: c_vis.values(), occ_stack: &occ_stack, t };

        let mut h = x.dot(&p.w_in) + &p.b_in + &self.positions(x.nrows(), coords)?;
        let mut caches = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            let (next, cache) = block_forward(b, &h, inputs)?;
            h = next;
            caches.push(cache);
        }
        let (h_out, ln_out) = layer_norm_forward(&p.norm_out, &h);
        let v = h_out.dot(&p.w_out) + &p.b_out;
        Ok((v, ForwardCache { x_in: x.clone(), blocks: caches, ln_out, h_out }))
    }

    /// Accumulates parameter gradients of `⟨dv, v⟩` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, dv: &Mat, cond: Conditioning<'_>, grads: &mut FlowParams) {
        let p = &self.params;
        grads.b_out += &dv.sum_axis(Axis(0)).insert_axis(Axis(0));
        grads.w_out += &cache.h_out.t().dot(dv);
        let dh_out = dv.dot(&p.w_out.t());
        let mut dh = layer_norm_backward(&p.norm_out, &cache.ln_out, &dh_out, &mut grads.norm_out);
        for ((b, c), g) in p.blocks.iter().zip(&cache.blocks).zip(grads.blocks.iter_mut()).rev() {
            let bg = block_backward(b, c, &dh, g);
            dh = bg.dx;
            if matches!(cond, Conditioning::Null) {
                grads.null_cond += &bg.dcond;
            }
        }
        if matches!(self.config.layout, LatentLayout::Dense { .. }) {
            grads.pos += &dh;
        }
        grads.b_in += &dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        grads.w_in += &cache.x_in.t().dot(&dh);
    }

    fn dense_parts(&self) -> Result<(usize, usize, Stage1Codec)> {
        match self.config.layout {
            LatentLayout::Dense { grid_n, r, sub_block, group } => Ok((grid_n, group, Stage1Codec { r, sub_block })),
            LatentLayout::Sparse { .. } => Err(param("operation needs a dense layout")),
        }
    }

    /// Grid → clean model tokens: stage-1 encoding, fractions mapped to
    /// `[-1, 1]`, then cell grouping.
    pub fn encode_grid(&self, grid: &VoxelGrid) -> Result<Mat> {
        let (n, g, codec) = self.dense_parts()?;
        if grid.n() != n {
            return Err(shape(format!("grid N={} but model expects {n}", grid.n())));
        }
        let lat = codec.encode(grid)?;
        patchify(&lat.tokens().mapv(fraction_to_flow), codec.r, g)
    }

    /// Model tokens → stage-1 latent in occupancy-fraction units.
    pub fn tokens_to_latent(&self, tokens: &Mat) -> Result<DenseLatent> {
        let (_, g, codec) = self.dense_parts()?;
        DenseLatent::new(codec.r, unpatchify(tokens, codec.r, g)?.mapv(flow_to_fraction))
    }

    pub fn decode_tokens(&self, tokens: &Mat, threshold: f64) -> Result<VoxelGrid> {
        let (n, _, codec) = self.dense_parts()?;
        codec.decode(&self.tokens_to_latent(tokens)?, n, threshold)
    }
}
