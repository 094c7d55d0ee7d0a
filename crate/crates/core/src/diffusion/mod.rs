//! Discrete-time diffusion: schedules, parameterizations, training losses
//! and conditional ancestral sampling.

pub mod oracle;
pub mod sampler;
pub mod schedule;

pub use oracle::{GaussianOracle, ZeroDenoiser};
pub use sampler::{
    eps_to_x0, forward_sample, posterior_step, predicted_x0, reverse_step, sample, standard_normal, training_loss,
    x0_to_eps, Denoiser, Parameterization,
};
pub use schedule::{default_schedule, make_schedule, NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN};

#[cfg(test)]
mod tests;
