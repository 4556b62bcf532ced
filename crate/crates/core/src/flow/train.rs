use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Conditioning, FlowModel, FlowParams};
use super::optim::AdamW;
use super::{add_noise, flow_loss_and_grad, ViewCondition};
use crate::attention::{randn, Mat, ParamSet};
use crate::error::param;
use crate::patch_tokens::PatchEmbedder;
use crate::rng::{rng_for, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Probability of replacing a sample's conditioning with the null one.
    pub cfg_drop: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the batch gradient to at most this global norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            cfg_drop: 0.1,
            batch: 8,
            steps: 1000,
            seed: 0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(param(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.cfg_drop) {
            return Err(param(format!("cfg_drop {} outside [0, 1]", self.cfg_drop)));
        }
        if self.batch == 0 {
            return Err(param("batch must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps >= 0.0) {
            return Err(param("invalid optimizer moments"));
        }
        if !(self.weight_decay >= 0.0) || self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(param("weight decay must be >= 0 and grad_clip > 0"));
        }
        Ok(())
    }
}

/// One clean latent with the view that conditions it.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    /// Clean tokens in the model's layout.
    pub l0: Mat,
    /// Voxel coordinates for sparse layouts.
    pub coords: Option<Vec<[usize; 3]>>,
    pub view: ViewCondition,
}

/// A random source of training pairs. All randomness must come from `rng`.
pub trait TrainingSource: Sync {
    fn draw(&self, embedder: &PatchEmbedder, rng: &mut Rng) -> Result<TrainingPair>;
}

/// Flow loss of one pair at noise level `t` with noise `eps`, and its
/// parameter gradient. `null` swaps in the learned null condition.
pub fn loss_and_gradient(model: &FlowModel, pair: &TrainingPair, t: f64, eps: &Mat, null: bool) -> Result<(f64, FlowParams)> {
    let xt = add_noise(&pair.l0, eps, t)?;
    let cond = if null { Conditioning::Null } else { Conditioning::View(&pair.view) };
    let (pred, cache) = model.forward(&xt, pair.coords.as_deref(), t, cond)?;
    let (loss, dpred) = flow_loss_and_grad(&pred, eps, &pair.l0)?;
    let mut grads = model.params.zeros_like();
    model.backward(&cache, &dpred, cond, &mut grads);
    Ok((loss, grads))
}

fn sample_gradient(model: &FlowModel, pair: &TrainingPair, cfg_drop: f64, rng: &mut Rng) -> Result<(f64, FlowParams)> {
    let t: f64 = rng.random();
    let drop = rng.random::<f64>() < cfg_drop;
    let eps = randn(rng, pair.l0.nrows(), pair.l0.ncols(), 1.0);
    loss_and_gradient(model, pair, t, &eps, drop)
}

/// Mean loss and mean parameter gradient over one batch. Per-sample work
/// runs in parallel and is reduced in sample order.
pub(crate) fn batch_gradient(
    source: &dyn TrainingSource,
    model: &FlowModel,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(f64, FlowParams)> {
    let results: Vec<Result<(f64, FlowParams)>> = (0..cfg.batch)
        .into_par_iter()
        .map(|b| {
            let pair = source.draw(&model.embedder, &mut rng_for(cfg.seed, &format!("train/data/{step}/{b}")))?;
            sample_gradient(model, &pair, cfg.cfg_drop, &mut rng_for(cfg.seed, &format!("train/noise/{step}/{b}")))
        })
        .collect();
    let mut total = 0.0;
    let mut grads: Option<FlowParams> = None;
    for r in results {
        let (loss, g) = r?;
        total += loss;
        match &mut grads {
            Some(acc) => acc.add_assign(&g),
            None => grads = Some(g),
        }
    }
    let mut grads = grads.expect("batch is nonempty");
    let k = 1.0 / cfg.batch as f64;
    grads.scale(k);
    Ok((total * k, grads))
}

fn clip(grads: &mut FlowParams, max_norm: f64) {
    let norm = grads.named().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// Trains `model` and returns it with the per-step mean loss.
pub fn train(source: &dyn TrainingSource, model: FlowModel, cfg: &TrainConfig) -> Result<(FlowModel, Vec<f64>)> {
    train_with(source, model, cfg, |_, _| {})
}

/// [`train`] with a callback after every step.
pub fn train_with(
    source: &dyn TrainingSource,
    mut model: FlowModel,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<(FlowModel, Vec<f64>)> {
    cfg.validate()?;
    let mut opt = AdamW::new(&model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, mut grads) = batch_gradient(source, &model, cfg, step)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        if let Some(c) = cfg.grad_clip {
            clip(&mut grads, c);
        }
        opt.update(&mut model.params, &grads);
        losses.push(loss);
        on_step(step, loss);
    }
    Ok((model, losses))
}
