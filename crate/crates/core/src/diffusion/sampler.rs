//! Forward corruption, training targets and the ancestral reverse sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::schedule::NoiseSchedule;
use crate::error::{bail, Result};
use crate::nn::Tensor;

/// Floor on `a_t` when recovering `x0` from a noise prediction.
pub const SIGNAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parameterization {
    /// The network predicts the clean sample.
    X0,
    /// The network predicts the added noise. The score is `-eps / b_t`.
    #[default]
    Eps,
}

impl Parameterization {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x0" => Ok(Self::X0),
            "eps" => Ok(Self::Eps),
            other => bail!(Config, "unknown parameterization {other:?} (expected x0 or eps)"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::X0 => "x0",
            Self::Eps => "eps",
        }
    }

    /// Network target for a training pair.
    pub fn target<'a>(self, x0: &'a Tensor, eps: &'a Tensor) -> &'a Tensor {
        match self {
            Self::X0 => x0,
            Self::Eps => eps,
        }
    }
}

/// `x0 = (x_t - b_t eps) / a_t`.
pub fn eps_to_x0(x_t: &Tensor, eps: &Tensor, t: usize, s: &NoiseSchedule) -> Result<Tensor> {
    let (a, b) = (s.a[t], s.b[t]);
    if a < SIGNAL_FLOOR {
        bail!(Numeric, "signal coefficient {a:e} at step {t} is below the floor");
    }
    zip(x_t, eps, |x, e| (x - b * e) / a)
}

/// `eps = (x_t - a_t x0) / b_t`.
pub fn x0_to_eps(x_t: &Tensor, x0: &Tensor, t: usize, s: &NoiseSchedule) -> Result<Tensor> {
    let (a, b) = (s.a[t], s.b[t]);
    if b < SIGNAL_FLOOR {
        bail!(Numeric, "noise coefficient {b:e} at step {t} is below the floor");
    }
    zip(x_t, x0, |x, x0| (x - a * x0) / b)
}

fn zip(p: &Tensor, q: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if p.shape() != q.shape() {
        bail!(Shape, "shapes {:?} and {:?} differ", p.shape(), q.shape());
    }
    Tensor::new(p.shape().to_vec(), p.data().iter().zip(q.data()).map(|(&a, &b)| f(a, b)).collect())
}

/// Anything that maps a noisy sample to a prediction under some
/// parameterization.
pub trait Denoiser {
    fn predict(&self, x_t: &Tensor, z: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor>;
}

impl<F> Denoiser for F
where
    F: Fn(&Tensor, &Tensor, usize, &NoiseSchedule) -> Result<Tensor>,
{
    fn predict(&self, x_t: &Tensor, z: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor> {
        self(x_t, z, t, schedule)
    }
}

/// `x_t = a_t x0 + b_t eps`.
pub fn forward_sample(x0: &Tensor, t: usize, eps: &Tensor, s: &NoiseSchedule) -> Result<Tensor> {
    s.check_step(t)?;
    let (a, b) = (s.a[t], s.b[t]);
    zip(x0, eps, |x, e| a * x + b * e)
}

/// Mean squared error between the network output and its target.
pub fn training_loss(
    denoiser: &dyn Denoiser,
    x0: &Tensor,
    z: &Tensor,
    t: usize,
    eps: &Tensor,
    s: &NoiseSchedule,
    param: Parameterization,
) -> Result<f64> {
    if t == 0 {
        bail!(Index, "training steps start at 1");
    }
    let x_t = forward_sample(x0, t, eps, s)?;
    let pred = denoiser.predict(&x_t, z, t, s)?;
    let target = param.target(x0, eps);
    if pred.shape() != target.shape() {
        bail!(Shape, "prediction {:?} vs target {:?}", pred.shape(), target.shape());
    }
    let loss = pred.data().iter().zip(target.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / pred.len() as f64;
    if !loss.is_finite() {
        bail!(Training, "non-finite diffusion loss at step {t}");
    }
    Ok(loss)
}

/// The clean-sample estimate implied by a prediction.
pub fn predicted_x0(pred: Tensor, x_t: &Tensor, t: usize, s: &NoiseSchedule, param: Parameterization) -> Result<Tensor> {
    match param {
        Parameterization::X0 => Ok(pred),
        Parameterization::Eps => eps_to_x0(x_t, &pred, t, s),
    }
}

/// One ancestral step from `x_t` to `x_{t-1}` given an already computed
/// clean-sample estimate.
pub fn posterior_step(x_t: &Tensor, x0_hat: Tensor, t: usize, s: &NoiseSchedule, eps: &Tensor) -> Result<Tensor> {
    if t == 1 {
        return Ok(x0_hat);
    }
    let (cx0, cxt) = s.posterior_coefficients(t);
    let c = s.c[t];
    let out = x0_hat.data().iter().zip(x_t.data()).zip(eps.data()).map(|((&x0, &xt), &e)| cx0 * x0 + cxt * xt + c * e);
    let out = Tensor::new(x_t.shape().to_vec(), out.collect())?;
    if !out.is_finite() {
        bail!(Numeric, "non-finite sample at step {t}");
    }
    Ok(out)
}

pub fn reverse_step(
    x_t: &Tensor,
    t: usize,
    z: &Tensor,
    denoiser: &dyn Denoiser,
    s: &NoiseSchedule,
    eps: &Tensor,
    param: Parameterization,
) -> Result<Tensor> {
    if t == 0 || t > s.steps() {
        bail!(Index, "reverse step {t} outside 1..={}", s.steps());
    }
    if eps.shape() != x_t.shape() {
        bail!(Shape, "noise {:?} vs sample {:?}", eps.shape(), x_t.shape());
    }
    let pred = denoiser.predict(x_t, z, t, s)?;
    if pred.shape() != x_t.shape() {
        bail!(Shape, "denoiser returned {:?} for input {:?}", pred.shape(), x_t.shape());
    }
    let x0_hat = predicted_x0(pred, x_t, t, s, param)?;
    posterior_step(x_t, x0_hat, t, s, eps)
}

pub fn standard_normal(shape: &[usize], rng: &mut impl rand::Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Draws `x_T` from the prior and applies every reverse step.
pub fn sample(
    denoiser: &dyn Denoiser,
    z: &Tensor,
    s: &NoiseSchedule,
    shape: &[usize],
    seed: u64,
    param: Parameterization,
) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = standard_normal(shape, &mut rng);
    for t in (1..=s.steps()).rev() {
        let eps = if t > 1 { standard_normal(shape, &mut rng) } else { Tensor::zeros(shape) };
        x = reverse_step(&x, t, z, denoiser, s, &eps, param)?;
    }
    Ok(x)
}
