use occlusym::flow::*;
use occlusym::patch_tokens::{PatchWeightVector, TokenGridSpec};
use occlusym::rng::{rng_from_seed, Rng};
use rand::Rng as _;

use super::numeric::{param_grad_error, randn};

/// One block, width 4, 8 latent tokens of width 8.
pub fn micro_config(seed: u64) -> ModelConfig {
    ModelConfig {
        layout: LatentLayout::Dense { grid_n: 8, r: 4, sub_block: 2, group: 2 },
        width: 4,
        heads: 2,
        head_dim: 2,
        blocks: 1,
        mlp_ratio: 2,
        time_dim: 4,
        tokens: TokenGridSpec { image_size: 8, patch: 4, n_prefix: 1 },
        cond_width: 3,
        init_seed: seed,
        embed_seed: seed + 1,
        ..ModelConfig::default()
    }
}

pub fn random_view(rng: &mut Rng, k: usize, width: usize, count: usize) -> ViewCondition {
    let mut vis: Vec<f64> = (0..k).map(|_| if rng.random::<bool>() { rng.random() } else { 0.0 }).collect();
    vis[0] = 1.0;
    let occ: Vec<f64> = (0..k).map(|_| rng.random()).collect();
    ViewCondition::new(
        randn(rng, k, width),
        PatchWeightVector::new(vis).unwrap(),
        PatchWeightVector::new(occ).unwrap(),
        count,
    )
    .unwrap()
}

/// Worst relative error, over every parameter tensor, of the flow-matching
/// loss gradient of a micro model at a random `(ℓ0, ε, t, view)`. Also
/// reports whether the null tokens stayed untouched on the conditional
/// branch.
pub fn training_grad_error(seed: u64, null: bool, h: f64) -> (f64, String, bool) {
    let model = FlowModel::new(micro_config(seed)).unwrap();
    let mut rng = rng_from_seed(seed + 50);
    let (t_len, d) = (model.config.layout.n_tokens().unwrap(), model.token_dim());
    let k = model.config.tokens.token_count();
    let pair = TrainingPair {
        l0: randn(&mut rng, t_len, d),
        coords: None,
        view: random_view(&mut rng, k, model.config.cond_width, 3),
    };
    let eps = randn(&mut rng, t_len, d);
    let t: f64 = rng.random();
    let (_, grads) = loss_and_gradient(&model, &pair, t, &eps, null).unwrap();
    let mut probe = model.clone();
    let (err, name) = param_grad_error(&model.params, &grads, h, |p| {
        probe.params = p.clone();
        loss_and_gradient(&probe, &pair, t, &eps, null).unwrap().0
    });
    let null_clean = null || grads.null_cond.iter().all(|&v| v == 0.0);
    (err, name, null_clean)
}
