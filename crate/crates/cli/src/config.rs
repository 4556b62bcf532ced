//! Run configuration: one JSON file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use occlusym::dataset::{DatasetConfig, EvalConfig, ViewRig};
use occlusym::flow::{LatentLayout, ModelConfig, SampleConfig, TrainConfig};
use occlusym::masks2d::OcclusionParams;
use occlusym::patch_tokens::TokenGridSpec;
use occlusym::rng::derive_seed;
use occlusym::slat::ShapeFamily;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Input and output locations. Relative paths resolve against the
/// directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    /// OBJ meshes for 3D mask generation.
    pub meshes: Vec<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out"), meshes: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskMode {
    #[serde(rename = "2d")]
    Image,
    #[serde(rename = "3d")]
    Mesh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasksBlock {
    pub mode: MaskMode,
    /// Number of 2D masks.
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Surface-area target range for the 3D random walk; each mesh draws
    /// its target uniformly from it.
    pub target_ratio: [f64; 2],
}

impl Default for MasksBlock {
    fn default() -> Self {
        Self { mode: MaskMode::Image, count: 10, width: 512, height: 512, target_ratio: [0.4, 0.6] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetBlock {
    pub n_shapes: usize,
    pub n_held_out: usize,
    pub families: Vec<ShapeFamily>,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self { n_shapes: 256, n_held_out: 32, families: ShapeFamily::ALL.to_vec() }
    }
}

/// Denoiser architecture; the latent layout and token grid live in their
/// own blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub blocks: usize,
    pub mlp_ratio: usize,
    pub time_dim: usize,
    pub cond_width: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            width: m.width,
            heads: m.heads,
            head_dim: m.head_dim,
            blocks: m.blocks,
            mlp_ratio: m.mlp_ratio,
            time_dim: m.time_dim,
            cond_width: m.cond_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleBlock {
    pub n_steps: usize,
    pub cfg_scale: f64,
    /// Held-out shapes to reconstruct.
    pub count: usize,
    /// Occluded views per reconstruction.
    pub n_views: usize,
    pub threshold: f64,
}

impl Default for SampleBlock {
    fn default() -> Self {
        let s = SampleConfig::default();
        Self { n_steps: s.n_steps, cfg_scale: s.cfg_scale, count: 16, n_views: 1, threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub k_points: usize,
}

impl Default for EvalBlock {
    fn default() -> Self {
        Self { k_points: EvalConfig::default().k_points }
    }
}

/// Everything a command needs. Seeds inside the module blocks are ignored:
/// each module gets `derive_seed(seed, role)` for a fixed role string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub masks: MasksBlock,
    pub occlusion: OcclusionParams,
    pub camera: ViewRig,
    pub dataset: DatasetBlock,
    pub tokens: TokenGridSpec,
    pub slat: LatentLayout,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub sample: SampleBlock,
    pub eval: EvalBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            masks: MasksBlock::default(),
            occlusion: OcclusionParams::default(),
            camera: ViewRig::default(),
            dataset: DatasetBlock::default(),
            tokens: TokenGridSpec::default(),
            slat: ModelConfig::default().layout,
            model: ModelBlock::default(),
            train: TrainConfig { lr: 1e-3, steps: 2000, grad_clip: Some(1.0), ..TrainConfig::default() },
            sample: SampleBlock::default(),
            eval: EvalBlock::default(),
        }
    }
}

pub mod roles {
    pub const MASKS: &str = "masks";
    pub const DATASET_TRAIN: &str = "dataset/train";
    pub const DATASET_HELD_OUT: &str = "dataset/held_out";
    pub const MODEL_INIT: &str = "model/init";
    pub const MODEL_EMBED: &str = "model/embed";
    pub const TRAIN: &str = "train";
    pub const SAMPLE: &str = "sample";
    pub const EVAL: &str = "eval";
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Sets `path` (dot-separated) in `root` to `value`. Every segment must
/// already exist, so typos fail instead of being ignored.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(invalid(format!("bad override key '{path}'")));
    }
    for (i, seg) in segments.iter().enumerate() {
        let next = match cur {
            Value::Object(map) => map.get_mut(*seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|k| items.get_mut(k)),
            _ => None,
        };
        let Some(next) = next else {
            return Err(invalid(format!("unknown config key '{}'", segments[..=i].join("."))));
        };
        cur = next;
    }
    *cur = value;
    Ok(())
}

/// Parses `key=value`; the value is read as JSON when it parses, otherwise
/// as a bare string.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{s}' is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl RunConfig {
    /// Parses config bytes, applies overrides in order, and validates.
    pub fn from_json(bytes: &[u8], overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let parsed: RunConfig = serde_json::from_slice(bytes).map_err(invalid)?;
        let mut value = serde_json::to_value(&parsed).map_err(invalid)?;
        for (k, v) in overrides {
            set_path(&mut value, k, v.clone())?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(invalid)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the config file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|_| CliError::MissingInputs(vec![path.to_path_buf()]))?;
        let mut cfg = Self::from_json(&bytes, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.out_dir = base.join(&cfg.paths.out_dir);
        cfg.paths.meshes = cfg.paths.meshes.iter().map(|m| base.join(m)).collect();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.occlusion.validate().map_err(invalid)?;
        self.dataset_config(0, self.dataset.n_shapes).validate().map_err(invalid)?;
        if self.dataset.n_held_out == 0 {
            return Err(invalid("dataset.n_held_out must be positive"));
        }
        let model = self.model_config();
        model.validate().map_err(invalid)?;
        if !matches!(self.slat, LatentLayout::Dense { .. }) {
            return Err(invalid("the pipeline drives the dense stage-1 layout only"));
        }
        if self.tokens.image_size != self.camera.image_size {
            return Err(invalid(format!(
                "tokens.image_size {} differs from camera.image_size {}",
                self.tokens.image_size, self.camera.image_size
            )));
        }
        self.train.validate().map_err(invalid)?;
        self.sample_config(0).validate().map_err(invalid)?;
        if self.sample.n_views == 0 || self.sample.n_views > self.camera.n_views {
            return Err(invalid(format!("sample.n_views must lie in 1..={}", self.camera.n_views)));
        }
        if !(0.0..=1.0).contains(&self.sample.threshold) {
            return Err(invalid("sample.threshold must lie in [0, 1]"));
        }
        if self.eval.k_points == 0 {
            return Err(invalid("eval.k_points must be positive"));
        }
        let [lo, hi] = self.masks.target_ratio;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(invalid(format!("masks.target_ratio [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1")));
        }
        if self.masks.width == 0 || self.masks.height == 0 || self.masks.width * self.masks.height > 1 << 24 {
            return Err(invalid("masks.width x masks.height must be positive and at most 2^24"));
        }
        Ok(())
    }

    pub fn seed_for(&self, role: &str) -> u64 {
        derive_seed(self.seed, role)
    }

    pub fn dataset_config(&self, seed: u64, n_shapes: usize) -> DatasetConfig {
        DatasetConfig {
            n_shapes,
            grid_n: self.slat.grid_n(),
            families: self.dataset.families.clone(),
            rig: self.camera.clone(),
            seed,
        }
    }

    pub fn train_dataset(&self) -> DatasetConfig {
        self.dataset_config(self.seed_for(roles::DATASET_TRAIN), self.dataset.n_shapes)
    }

    pub fn held_out_dataset(&self) -> DatasetConfig {
        self.dataset_config(self.seed_for(roles::DATASET_HELD_OUT), self.dataset.n_held_out)
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            layout: self.slat,
            width: m.width,
            heads: m.heads,
            head_dim: m.head_dim,
            blocks: m.blocks,
            mlp_ratio: m.mlp_ratio,
            time_dim: m.time_dim,
            tokens: self.tokens,
            cond_width: m.cond_width,
            image_channels: 1,
            embed_seed: self.seed_for(roles::MODEL_EMBED),
            init_seed: self.seed_for(roles::MODEL_INIT),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed_for(roles::TRAIN), ..self.train.clone() }
    }

    pub fn sample_config(&self, seed: u64) -> SampleConfig {
        SampleConfig { n_steps: self.sample.n_steps, cfg_scale: self.sample.cfg_scale, seed }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            sample: self.sample_config(0),
            threshold: self.sample.threshold,
            k_points: self.eval.k_points,
            seed: self.seed_for(roles::EVAL),
        }
    }
}
