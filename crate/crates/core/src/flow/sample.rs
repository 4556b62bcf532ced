use serde::{Deserialize, Serialize};

use super::model::{Conditioning, FlowModel, LatentLayout};
use super::ViewCondition;
use crate::attention::{randn, Mat};
use crate::error::param;
use crate::rng::rng_for;
use crate::slat::VoxelGrid;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_steps: usize,
    /// `v = v_null + cfg_scale·(v_cond − v_null)`.
    pub cfg_scale: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n_steps: 25, cfg_scale: 1.0, seed: 0 }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(param("n_steps must be >= 1"));
        }
        if !(self.cfg_scale >= 0.0 && self.cfg_scale.is_finite()) {
            return Err(param(format!("cfg_scale {} must be finite and >= 0", self.cfg_scale)));
        }
        Ok(())
    }
}

/// View indices in descending visibility, ties in input order.
pub fn visibility_order(views: &[ViewCondition]) -> Result<Vec<usize>> {
    if views.is_empty() {
        return Err(param("no views to sort"));
    }
    let mut idx: Vec<usize> = (0..views.len()).collect();
    idx.sort_by(|&a, &b| views[b].visibility_count.cmp(&views[a].visibility_count));
    Ok(idx)
}

pub fn sort_views_by_visibility(views: &[ViewCondition]) -> Result<Vec<ViewCondition>> {
    Ok(visibility_order(views)?.into_iter().map(|i| views[i].clone()).collect())
}

/// Sorted-view index used at each Euler step: step `s` (0-based) uses view
/// `⌊s·V/n_steps⌋`, so views cover contiguous, near-equal segments.
pub fn view_schedule(n_views: usize, n_steps: usize) -> Vec<usize> {
    (0..n_steps).map(|s| s * n_views / n_steps).collect()
}

fn velocity(model: &FlowModel, x: &Mat, coords: Option<&[[usize; 3]]>, t: f64, view: Option<&ViewCondition>, scale: f64) -> Result<Mat> {
    let run = |c| model.forward(x, coords, t, c).map(|(v, _)| v);
    match view {
        None => run(Conditioning::Null),
        Some(_) if scale == 0.0 => run(Conditioning::Null),
        Some(v) if scale == 1.0 => run(Conditioning::View(v)),
        Some(v) => {
            let v_null = run(Conditioning::Null)?;
            let v_cond = run(Conditioning::View(v))?;
            Ok(&v_null + &((v_cond - &v_null) * scale))
        }
    }
}

fn integrate(
    model: &FlowModel,
    n_tokens: usize,
    coords: Option<&[[usize; 3]]>,
    views: Option<&[ViewCondition]>,
    cfg: &SampleConfig,
) -> Result<Mat> {
    cfg.validate()?;
    let sorted = views.map(sort_views_by_visibility).transpose()?;
    let schedule = sorted.as_ref().map(|v| view_schedule(v.len(), cfg.n_steps));
    let mut x = randn(&mut rng_for(cfg.seed, "sample/noise"), n_tokens, model.token_dim(), 1.0);
    let dt = 1.0 / cfg.n_steps as f64;
    for s in 0..cfg.n_steps {
        let t = 1.0 - s as f64 * dt;
        let view = sorted.as_ref().zip(schedule.as_ref()).map(|(v, sch)| &v[sch[s]]);
        let v = velocity(model, &x, coords, t, view, cfg.cfg_scale)?;
        x.scaled_add(-dt, &v);
    }
    Ok(x)
}

fn dense_tokens(model: &FlowModel) -> Result<usize> {
    match model.config.layout {
        LatentLayout::Dense { .. } => Ok(model.config.layout.n_tokens().expect("dense")),
        LatentLayout::Sparse { .. } => Err(param("use sample_sparse for sparse layouts")),
    }
}

/// Euler integration from `ℓ(1) = ε` to `ℓ(0)`, conditioning successive
/// step segments on the views in descending visibility.
pub fn sample(model: &FlowModel, views: &[ViewCondition], cfg: &SampleConfig) -> Result<Mat> {
    if views.is_empty() {
        return Err(param("sampling needs at least one view"));
    }
    integrate(model, dense_tokens(model)?, None, Some(views), cfg)
}

/// Null-conditioned trajectory.
pub fn sample_unconditional(model: &FlowModel, cfg: &SampleConfig) -> Result<Mat> {
    integrate(model, dense_tokens(model)?, None, None, cfg)
}

/// Stage-2 sampling of features on fixed voxel positions.
pub fn sample_sparse(model: &FlowModel, coords: &[[usize; 3]], views: &[ViewCondition], cfg: &SampleConfig) -> Result<Mat> {
    if !matches!(model.config.layout, LatentLayout::Sparse { .. }) {
        return Err(param("sample_sparse needs a sparse layout"));
    }
    if views.is_empty() || coords.is_empty() {
        return Err(param("sparse sampling needs views and positions"));
    }
    integrate(model, coords.len(), Some(coords), Some(views), cfg)
}

/// Samples a stage-1 latent from the views and decodes it to voxels.
pub fn reconstruct(model: &FlowModel, views: &[ViewCondition], cfg: &SampleConfig, threshold: f64) -> Result<VoxelGrid> {
    model.decode_tokens(&sample(model, views, cfg)?, threshold)
}
