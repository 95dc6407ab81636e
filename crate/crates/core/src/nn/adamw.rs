//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use crate::num::Scalar;

use super::params::{Grads, ParamStore};

/// Cosine decay from `lr_max` at step 0 to `lr_min` at step `total - 1`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total <= 1 {
        return lr_max;
    }
    let t = step.min(total - 1) as f64 / (total - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update over the full parameter vector. Moments are kept in f64 so
    /// the f32 training path does not lose the small-gradient tail.
    pub fn step<S: Scalar>(&mut self, params: &mut ParamStore<S>, grads: &Grads<S>, lr: f64) {
        debug_assert_eq!(grads.lo, 0);
        debug_assert_eq!(grads.data.len(), params.data.len());
        self.step += 1;
        let b1c = 1.0 - self.beta1.powi(self.step as i32);
        let b2c = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.data.len() {
            let g = grads.data[i].to_f64();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1c;
            let vhat = self.v[i] / b2c;
            let p = params.data[i].to_f64();
            let upd = p - lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * p);
            params.data[i] = S::cast(upd);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        let total = 1333;
        assert!((cosine_lr(0, total, 1.5e-4, 0.0) - 1.5e-4).abs() < 1e-12);
        assert!(cosine_lr(total - 1, total, 1.5e-4, 0.0).abs() < 1e-12);
        let mid = cosine_lr(total / 2, total, 1.5e-4, 0.0);
        assert!(mid > 0.0 && mid < 1.5e-4);
    }

    #[test]
    fn adamw_decays_weights_without_gradient() {
        use crate::nn::params::{Init, LayoutBuilder};
        use std::sync::Arc;

        let mut b = LayoutBuilder::new();
        b.section("s");
        let id = b.param("w", &[1], Init::Zeros);
        let layout = Arc::new(b.finish());
        let mut ps = ParamStore::<f64>::zeros(layout.clone());
        ps.slice_mut(id)[0] = 1.0;
        let grads = Grads::full(&layout);
        let mut opt = AdamW::new(layout.len(), 0.9, 0.999, 1e-8, 0.1);
        opt.step(&mut ps, &grads, 0.5);
        // pure decoupled decay: 1 - 0.5*0.1
        assert!((ps.slice(id)[0] - 0.95).abs() < 1e-12);
    }
}
