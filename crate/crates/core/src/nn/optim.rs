use super::params::Params;
use super::tensor::Tensor;
use crate::error::{bail, Result};

/// Adam with bias correction. Moment buffers are created as zeros on the
/// first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: Vec::new(), v: Vec::new(), step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `params`.
    pub fn step(&mut self, params: &mut Params) -> Result<()> {
        for id in params.ids() {
            if !params.grad(id).is_finite() {
                bail!(Training, "non-finite gradient for {}", params.name(id));
            }
        }
        if self.m.len() != params.len() {
            self.m = params.ids().map(|id| Tensor::zeros(params.value(id).shape())).collect();
            self.v = self.m.clone();
            self.step = 0;
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for id in params.ids() {
            let i = id.index();
            let g = params.grad(id).data().to_vec();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.value_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
