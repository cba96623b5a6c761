use serde::{Deserialize, Serialize};

/// AdamW hyperparameters (decoupled weight decay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One update; `t` is the 1-based step count used for bias correction.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [f32], grads: &[f32], lr: f64, t: u64) {
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - cfg.beta1.powi(t as i32);
        let c2 = 1.0 - cfg.beta2.powi(t as i32);
        let step = (lr / c1) as f32;
        let c2_sqrt = c2.sqrt() as f32;
        let decay = (lr * cfg.weight_decay) as f32;
        let eps = cfg.eps as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= decay * *p;
            *p -= step * *m / ((*v).sqrt() / c2_sqrt + eps);
        }
    }
}

/// Rescales `grads` so that their L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f32], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        let mut st = AdamState::new(2);
        let mut p = vec![1.0f32, -1.0];
        st.step(&cfg, &mut p, &[0.5, -2.0], 0.1, 1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(1);
        let mut p = vec![2.0f32];
        st.step(&cfg, &mut p, &[0.0], 0.1, 1);
        assert!((p[0] - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-6);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0f32, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
    }
}
