use crate::attention::ParamSet;

/// Adam with decoupled weight decay:
///
/// ```text
/// m ← β₁m + (1−β₁)g,   v ← β₂v + (1−β₂)g²
/// p ← p − lr·( m̂/(√v̂ + ε) + λ·p )
/// ```
///
/// with bias-corrected `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
#[derive(Clone, Debug)]
pub struct AdamW<P: ParamSet> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: P,
    v: P,
}

impl<P: ParamSet> AdamW<P> {
    pub fn new(params: &P, lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self { lr, beta1, beta2, eps, weight_decay, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut P, grads: &P) {
        self.step = self.step.saturating_add(1);
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        let gs = grads.named();
        for (((p, m), v), (_, g)) in params.tensors_mut().into_iter().zip(self.m.tensors_mut()).zip(self.v.tensors_mut()).zip(gs) {
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let step = (*m / bc1) / ((*v / bc2).sqrt() + eps) + wd * *p;
                *p -= lr * step;
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{LayerNorm, Mat};
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut ln = LayerNorm { gamma: array![[1.0, -2.0]], beta: array![[0.5, 0.0]] };
        let grads = LayerNorm { gamma: array![[3.0, -0.25]], beta: array![[-4.0, 1e3]] };
        let mut opt = AdamW::new(&ln, 0.1, 0.9, 0.999, 0.0, 0.0);
        opt.update(&mut ln, &grads);
        let expect: Mat = array![[0.9, -1.9]];
        assert!((&ln.gamma - &expect).iter().all(|d| d.abs() < 1e-12));
        assert!((ln.beta[[0, 0]] - 0.6).abs() < 1e-12);
        assert!((ln.beta[[0, 1]] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_and_zero_lr() {
        let mut ln = LayerNorm { gamma: array![[2.0]], beta: array![[0.0]] };
        let zero = ln.zeros_like();
        let mut opt = AdamW::new(&ln, 0.5, 0.9, 0.999, 1e-8, 0.1);
        opt.update(&mut ln, &zero);
        assert!((ln.gamma[[0, 0]] - 2.0 * (1.0 - 0.05)).abs() < 1e-12);
        let before = ln.clone();
        let mut frozen = AdamW::new(&ln, 0.0, 0.9, 0.999, 1e-8, 0.1);
        for _ in 0..5 {
            frozen.update(&mut ln, &before);
        }
        assert_eq!(ln, before);
    }
}
