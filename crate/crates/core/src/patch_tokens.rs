//! Conditioning tokens: a fixed patch embedder for images and per-patch
//! visibility/occlusion weights.
//!
//! Token order is the `n_prefix` global tokens (one class token plus
//! register tokens) followed by the patches in row-major order.

use ndarray::{s, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, shape};
use crate::io::pgm::GrayImage;
use crate::masks2d::BinaryMask;
use crate::rng::rng_from_seed;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGridSpec {
    pub image_size: usize,
    pub patch: usize,
    pub n_prefix: usize,
}

impl Default for TokenGridSpec {
    /// Desk-scale layout: 56² images, 14² patches, 1 class + 4 registers.
    fn default() -> Self {
        Self { image_size: 56, patch: 14, n_prefix: 5 }
    }
}

impl TokenGridSpec {
    pub fn new(image_size: usize, patch: usize, n_prefix: usize) -> Result<Self> {
        let spec = Self { image_size, patch, n_prefix };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch) {
            return Err(param(format!(
                "image size {} must be a positive multiple of patch {}",
                self.image_size, self.patch
            )));
        }
        Ok(())
    }

    /// Patches per side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }

    pub fn token_count(&self) -> usize {
        self.n_prefix + self.grid() * self.grid()
    }
}

pub fn token_count(spec: &TokenGridSpec) -> usize {
    spec.token_count()
}

/// Per-token weights in `[0, 1]`; prefix entries are 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchWeightVector {
    values: Vec<f64>,
}

impl PatchWeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(param("patch weights must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    /// Ones on the prefix, zeros on every patch.
    pub fn prefix_only(spec: &TokenGridSpec) -> Self {
        let mut values = vec![0.0; spec.token_count()];
        values[..spec.n_prefix].fill(1.0);
        Self { values }
    }

    pub fn ones(len: usize) -> Self {
        Self { values: vec![1.0; len] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fraction of set pixels in each patch, prefix entries fixed at 1.
pub fn patch_fraction(mask: &BinaryMask, spec: &TokenGridSpec) -> Result<PatchWeightVector> {
    spec.validate()?;
    if mask.width() != spec.image_size || mask.height() != spec.image_size {
        return Err(shape(format!(
            "mask is {}x{}, token grid expects {}²",
            mask.width(),
            mask.height(),
            spec.image_size
        )));
    }
    let (g, p) = (spec.grid(), spec.patch);
    let mut counts = vec![0usize; g * g];
    for y in 0..spec.image_size {
        for x in 0..spec.image_size {
            if mask.get(x, y) {
                counts[(y / p) * g + x / p] += 1;
            }
        }
    }
    let denom = (p * p) as f64;
    let mut values = vec![1.0; spec.n_prefix];
    values.extend(counts.iter().map(|&c| c as f64 / denom));
    Ok(PatchWeightVector { values })
}

/// Row `k` is `w[k]` repeated `width` times.
pub fn stack_occlusion_tokens(w: &PatchWeightVector, width: usize) -> Array2<f64> {
    Array2::from_shape_fn((w.len(), width), |(k, _)| w.values[k])
}

/// A real-valued image, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    /// Gray levels mapped to `[0, 1]`.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            channels: 1,
            data: img.data.iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    /// Zeroes every pixel outside `mask`.
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(shape("image and mask dimensions differ"));
        }
        let mut out = self.clone();
        for (i, px) in out.data.chunks_mut(self.channels).enumerate() {
            if !mask.bits()[i] {
                px.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Fixed random linear patch embedder: each patch's flattened pixels (row
/// major, channels innermost) times `projection`, plus a per-patch
/// positional code. Prefix tokens are fixed vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbedder {
    pub spec: TokenGridSpec,
    pub channels: usize,
    /// `(patch²·channels) × width`.
    pub projection: Array2<f64>,
    /// `grid² × width`.
    pub positional: Array2<f64>,
    /// `n_prefix × width`.
    pub prefix: Array2<f64>,
}

impl PatchEmbedder {
    /// Draws all parameters from `seed`. Projection entries have variance
    /// `1/(patch²·channels)`; positional and prefix entries `0.1²`.
    pub fn new(spec: TokenGridSpec, channels: usize, width: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if channels == 0 || width == 0 {
            return Err(param("embedder channels and width must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let fan_in = spec.patch * spec.patch * channels;
        let mut draw = |rows: usize, cols: usize, std: f64| {
            Array2::from_shape_simple_fn((rows, cols), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
        };
        let projection = draw(fan_in, width, 1.0 / (fan_in as f64).sqrt());
        let positional = draw(spec.grid() * spec.grid(), width, 0.1);
        let prefix = draw(spec.n_prefix, width, 0.1);
        Ok(Self { spec, channels, projection, positional, prefix })
    }

    pub fn width(&self) -> usize {
        self.projection.ncols()
    }

    /// Patch `j`'s flattened pixel vector.
    pub fn patch_vector(&self, image: &Image, j: usize) -> Vec<f64> {
        let (g, p, c) = (self.spec.grid(), self.spec.patch, self.channels);
        let (gy, gx) = (j / g, j % g);
        let mut v = Vec::with_capacity(p * p * c);
        for y in gy * p..(gy + 1) * p {
            let row = (y * image.width + gx * p) * c;
            v.extend_from_slice(&image.data[row..row + p * c]);
        }
        v
    }

    /// `token_count × width` conditioning tokens.
    pub fn embed(&self, image: &Image) -> Result<Array2<f64>> {
        let n = self.spec.image_size;
        if image.width != n || image.height != n || image.channels != self.channels {
            return Err(shape(format!(
                "image is {}x{}x{}, embedder expects {n}x{n}x{}",
                image.width, image.height, image.channels, self.channels
            )));
        }
        let g2 = self.spec.grid() * self.spec.grid();
        let fan_in = self.projection.nrows();
        let mut patches = Array2::<f64>::zeros((g2, fan_in));
        for j in 0..g2 {
            for (k, v) in self.patch_vector(image, j).into_iter().enumerate() {
                patches[[j, k]] = v;
            }
        }
        let np = self.spec.n_prefix;
        let mut out = Array2::<f64>::zeros((np + g2, self.width()));
        out.slice_mut(s![..np, ..]).assign(&self.prefix);
        out.slice_mut(s![np.., ..]).assign(&(patches.dot(&self.projection) + &self.positional));
        Ok(out)
    }
}

/// Free-function form of [`PatchEmbedder::embed`].
pub fn embed_patches(image: &Image, embedder: &PatchEmbedder) -> Result<Array2<f64>> {
    embedder.embed(image)
}
