//! Closed-form denoisers used as test oracles.

use super::sampler::{x0_to_eps, Denoiser, Parameterization};
use super::schedule::NoiseSchedule;
use crate::error::Result;
use crate::nn::Tensor;

/// Exact posterior mean `E[x0 | x_t]` for data `N(mu, sigma^2 I)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianOracle {
    pub mu: f64,
    pub sigma: f64,
    pub param: Parameterization,
}

impl GaussianOracle {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma, param: Parameterization::X0 }
    }

    pub fn posterior_mean(&self, x_t: f64, a: f64, b: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (a * s2 * x_t + b * b * self.mu) / (a * a * s2 + b * b)
    }
}

impl Denoiser for GaussianOracle {
    fn predict(&self, x_t: &Tensor, _z: &Tensor, t: usize, s: &NoiseSchedule) -> Result<Tensor> {
        let (a, b) = (s.a[t], s.b[t]);
        let x0 = x_t.map(|x| self.posterior_mean(x, a, b));
        match self.param {
            Parameterization::X0 => Ok(x0),
            Parameterization::Eps => x0_to_eps(x_t, &x0, t, s),
        }
    }
}

/// Returns all zeros regardless of input.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, x_t: &Tensor, _z: &Tensor, _t: usize, _s: &NoiseSchedule) -> Result<Tensor> {
        Ok(Tensor::zeros(x_t.shape()))
    }
}
