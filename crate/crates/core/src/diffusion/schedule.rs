//! Discrete variance-preserving noise schedules.
//!
//! Index 0 is clean data (`a = 1`, `b = 0`); steps run `1..=T`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{bail, Result};

pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.02;
/// Step count the default beta range is calibrated for.
pub const REFERENCE_STEPS: usize = 1000;
/// Largest admissible terminal signal coefficient.
pub const MAX_TERMINAL_SIGNAL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    /// Per-step betas, `beta[0] = 0`.
    pub beta: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Signal coefficients `sqrt(alpha_bar)`.
    pub a: Vec<f64>,
    /// Noise coefficients `sqrt(1 - alpha_bar)`.
    pub b: Vec<f64>,
    /// Ancestral sampling noise scale, the posterior standard deviation.
    pub c: Vec<f64>,
    /// Discrete-time increment.
    pub delta_t: f64,
    /// Timestep of the training schedule each step corresponds to; the
    /// identity unless the schedule was subsampled.
    pub model_t: Vec<usize>,
    /// Length of the training schedule, used to normalize `model_t`.
    pub horizon: usize,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit betas for steps `1..=T`.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            bail!(Config, "a schedule needs at least one step");
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            bail!(Config, "beta {b} outside (0, 1)");
        }
        let t_max = betas.len();
        let mut beta = vec![0.0];
        beta.extend_from_slice(betas);
        let mut alpha_bar = vec![1.0; t_max + 1];
        for t in 1..=t_max {
            alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta[t]);
        }
        Ok(Self::assemble(beta, alpha_bar, (0..=t_max).collect(), t_max))
    }

    fn assemble(beta: Vec<f64>, alpha_bar: Vec<f64>, model_t: Vec<usize>, horizon: usize) -> Self {
        let a: Vec<f64> = alpha_bar.iter().map(|v| v.sqrt()).collect();
        let b: Vec<f64> = alpha_bar.iter().map(|v| (1.0 - v).sqrt()).collect();
        let mut c = vec![0.0; beta.len()];
        for t in 2..beta.len() {
            let var = beta[t] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
            c[t] = var.sqrt();
        }
        Self { beta, alpha_bar, a, b, c, delta_t: 1.0, model_t, horizon }
    }

    pub fn steps(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            bail!(Index, "step {t} outside 0..={}", self.steps());
        }
        Ok(())
    }

    /// Time input for the denoiser, in `[0, 1]`.
    pub fn time_input(&self, t: usize) -> f64 {
        self.model_t[t] as f64 / self.horizon as f64
    }

    /// Posterior-mean coefficients `(coef_x0, coef_xt)` of
    /// `q(x_{t-1} | x_t, x_0)`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let bt2 = 1.0 - self.alpha_bar[t];
        let bp2 = 1.0 - self.alpha_bar[t - 1];
        let coef_x0 = self.a[t - 1] * self.beta[t] / bt2;
        let coef_xt = (1.0 - self.beta[t]).sqrt() * bp2 / bt2;
        (coef_x0, coef_xt)
    }

    /// `n` evenly strided steps of this schedule, keeping the cumulative
    /// products so the marginals `q(x_t | x_0)` are unchanged.
    pub fn subsample(&self, n: usize) -> Result<Self> {
        let t_max = self.steps();
        if n == 0 || n > t_max {
            bail!(Config, "cannot subsample {t_max} steps to {n}");
        }
        let taus: Vec<usize> = (0..=n).map(|i| ((i * t_max) as f64 / n as f64).round() as usize).collect();
        let alpha_bar: Vec<f64> = taus.iter().map(|&t| self.alpha_bar[t]).collect();
        let mut beta = vec![0.0; n + 1];
        for i in 1..=n {
            beta[i] = 1.0 - alpha_bar[i] / alpha_bar[i - 1];
        }
        let model_t = taus.iter().map(|&t| self.model_t[t]).collect();
        Ok(Self::assemble(beta, alpha_bar, model_t, self.horizon))
    }

    /// Text rows `t a_t b_t c_t`.
    pub fn dump(&self) -> String {
        let mut s = String::from("# t a_t b_t c_t\n");
        for t in 0..=self.steps() {
            writeln!(s, "{t} {:.17e} {:.17e} {:.17e}", self.a[t], self.b[t], self.c[t]).expect("string write");
        }
        s
    }

    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.dump())?;
        Ok(())
    }

    /// Checks the schedule invariants, naming the first violation.
    pub fn validate(&self) -> Result<()> {
        let t_max = self.steps();
        if self.a[0] != 1.0 || self.b[0] != 0.0 {
            bail!(Numeric, "step 0 is not clean data");
        }
        if self.a[t_max] > MAX_TERMINAL_SIGNAL {
            bail!(Config, "terminal signal coefficient {:.3e} exceeds {MAX_TERMINAL_SIGNAL}", self.a[t_max]);
        }
        for t in 0..=t_max {
            let s = self.a[t] * self.a[t] + self.b[t] * self.b[t];
            if (s - 1.0).abs() > 1e-12 {
                bail!(Numeric, "a^2 + b^2 = {s} at step {t}");
            }
            if t > 0 && self.c[t] < self.c[t - 1] {
                bail!(Numeric, "sampling noise decreases at step {t}");
            }
        }
        Ok(())
    }
}

/// Linear betas over `T` steps. The range is rescaled by `1000 / T` so
/// that shorter schedules still reach the Gaussian prior; at `T = 1000`
/// it is used verbatim.
pub fn make_schedule(t_max: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if t_max == 0 {
        bail!(Config, "schedule needs T >= 1");
    }
    if !(beta_min > 0.0 && beta_max >= beta_min) {
        bail!(Config, "need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}");
    }
    let scale = REFERENCE_STEPS as f64 / t_max as f64;
    let (lo, hi) = (beta_min * scale, beta_max * scale);
    let betas: Vec<f64> = (0..t_max)
        .map(|i| if t_max == 1 { hi } else { lo + (hi - lo) * i as f64 / (t_max - 1) as f64 })
        .collect();
    let s = NoiseSchedule::from_betas(&betas)?;
    s.validate()?;
    Ok(s)
}

pub fn default_schedule(t_max: usize) -> Result<NoiseSchedule> {
    make_schedule(t_max, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_zero_is_clean() {
        let s = default_schedule(1000).unwrap();
        assert_eq!((s.a[0], s.b[0], s.c[0]), (1.0, 0.0, 0.0));
        assert_eq!(s.c[1], 0.0);
        assert!(s.a[1000] < 1e-2);
        // literal DDPM range at the reference length
        assert_eq!(s.beta[1], 1e-4);
        assert!((s.beta[1000] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn short_schedules_reach_the_prior() {
        for t in [50, 100, 200] {
            let s = default_schedule(t).unwrap();
            assert!(s.a[t] < 1e-2, "T={t} a_T={}", s.a[t]);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(make_schedule(0, 1e-4, 0.02).is_err());
        assert!(make_schedule(1, 1e-4, 0.02).is_err());
        assert!(make_schedule(1000, 1e-6, 1e-5).is_err());
        assert!(NoiseSchedule::from_betas(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn posterior_coefficients_at_first_step() {
        let s = default_schedule(200).unwrap();
        let (cx0, cxt) = s.posterior_coefficients(1);
        assert!((cx0 - 1.0).abs() < 1e-12);
        assert_eq!(cxt, 0.0);
    }

    #[test]
    fn subsampling_keeps_marginals() {
        let s = default_schedule(200).unwrap();
        let sub = s.subsample(50).unwrap();
        assert_eq!(sub.steps(), 50);
        assert_eq!(sub.model_t[50], 200);
        assert_eq!(sub.alpha_bar[10], s.alpha_bar[40]);
        assert_eq!(sub.time_input(50), 1.0);
        sub.validate().unwrap();
    }

    #[test]
    fn dump_has_one_row_per_step() {
        let s = default_schedule(100).unwrap();
        let d = s.dump();
        assert_eq!(d.lines().count(), 102);
        assert!(d.lines().nth(1).unwrap().starts_with("0 1.00000000000000000e0 0.00000000000000000e0"));
    }

    proptest! {
        #[test]
        fn generated_schedules_are_valid_or_rejected(t in 1usize..1500, lo in 1e-5f64..5e-3, span in 0.0f64..0.05) {
            match make_schedule(t, lo, lo + span) {
                Ok(s) => {
                    prop_assert!(s.validate().is_ok());
                    prop_assert!(s.a[t] <= MAX_TERMINAL_SIGNAL);
                    for k in 0..=t {
                        prop_assert!((s.a[k] * s.a[k] + s.b[k] * s.b[k] - 1.0).abs() <= 1e-12);
                    }
                }
                Err(e) => prop_assert!(matches!(e, crate::Error::Config(_))),
            }
        }
    }
}
