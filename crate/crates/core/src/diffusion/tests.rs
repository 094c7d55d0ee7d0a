use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::nn::Tensor;

fn vec_t(v: &[f64]) -> Tensor {
    Tensor::new(vec![v.len()], v.to_vec()).unwrap()
}

/// Returns a fixed tensor.
struct Constant(Tensor);

impl Denoiser for Constant {
    fn predict(&self, _x: &Tensor, _z: &Tensor, _t: usize, _s: &NoiseSchedule) -> crate::Result<Tensor> {
        Ok(self.0.clone())
    }
}

#[test]
fn forward_sample_examples() {
    let s = default_schedule(200).unwrap();
    let x0 = vec_t(&[0.3, -1.0, 2.0]);
    let eps = vec_t(&[1.0, 1.0, 1.0]);
    assert_eq!(forward_sample(&x0, 0, &eps, &s).unwrap(), x0);
    let zero = Tensor::zeros(&[3]);
    let xt = forward_sample(&x0, 50, &zero, &s).unwrap();
    assert_eq!(xt, x0.map(|v| s.a[50] * v));
    let xt = forward_sample(&zero, 50, &eps, &s).unwrap();
    assert!(xt.data().iter().all(|&v| v == s.b[50]));
    assert!(matches!(forward_sample(&x0, 201, &eps, &s), Err(Error::Index(_))));
}

#[test]
fn training_loss_examples() {
    let s = default_schedule(100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0 = standard_normal(&[4, 6], &mut rng);
    let eps = standard_normal(&[4, 6], &mut rng);
    let z = Tensor::zeros(&[1]);
    let t = 37;
    // oracle that returns the target
    let perfect_eps = Constant(eps.clone());
    assert_eq!(training_loss(&perfect_eps, &x0, &z, t, &eps, &s, Parameterization::Eps).unwrap(), 0.0);
    let perfect_x0 = Constant(x0.clone());
    assert_eq!(training_loss(&perfect_x0, &x0, &z, t, &eps, &s, Parameterization::X0).unwrap(), 0.0);
    // zero network against unit noise
    let ones = Tensor::full(&[4, 6], 1.0);
    assert_eq!(training_loss(&ZeroDenoiser, &x0, &z, t, &ones, &s, Parameterization::Eps).unwrap(), 1.0);
}

#[test]
fn x0_and_eps_losses_agree_through_conversion() {
    let s = default_schedule(100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = standard_normal(&[3, 5], &mut rng);
    let eps = standard_normal(&[3, 5], &mut rng);
    let out = standard_normal(&[3, 5], &mut rng);
    let z = Tensor::zeros(&[1]);
    for t in [1, 10, 60, 100] {
        let xt = forward_sample(&x0, t, &eps, &s).unwrap();
        let eps_loss = training_loss(&Constant(out.clone()), &x0, &z, t, &eps, &s, Parameterization::Eps).unwrap();
        let as_x0 = eps_to_x0(&xt, &out, t, &s).unwrap();
        let x0_loss = training_loss(&Constant(as_x0), &x0, &z, t, &eps, &s, Parameterization::X0).unwrap();
        let ratio = (s.b[t] / s.a[t]).powi(2);
        assert!((x0_loss - ratio * eps_loss).abs() <= 1e-9 * x0_loss.max(1.0), "t={t}");
    }
}

#[test]
fn conversions_are_mutual_inverses() {
    let s = default_schedule(200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in [1, 2, 17, 100, 199, 200] {
        let xt = standard_normal(&[32], &mut rng);
        let e = standard_normal(&[32], &mut rng);
        let back = x0_to_eps(&xt, &eps_to_x0(&xt, &e, t, &s).unwrap(), t, &s).unwrap();
        assert!(back.max_abs_diff(&e) < 1e-10, "t={t} {}", back.max_abs_diff(&e));
        let x = standard_normal(&[32], &mut rng);
        let back = eps_to_x0(&xt, &x0_to_eps(&xt, &x, t, &s).unwrap(), t, &s).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10, "t={t}");
    }
}

#[test]
fn reverse_step_matches_closed_form_posterior() {
    let s = default_schedule(200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = standard_normal(&[16], &mut rng);
    let noise = standard_normal(&[16], &mut rng);
    let zero = Tensor::zeros(&[16]);
    let z = Tensor::zeros(&[1]);
    for t in [2, 50, 200] {
        let xt = forward_sample(&x0, t, &noise, &s).unwrap();
        let got = reverse_step(&xt, t, &z, &Constant(x0.clone()), &s, &zero, Parameterization::X0).unwrap();
        // noise-form posterior mean: (x_t - beta_t / b_t * eps) / sqrt(1 - beta_t)
        let alpha = 1.0 - s.beta[t];
        for i in 0..16 {
            let e = (xt.data()[i] - s.a[t] * x0.data()[i]) / s.b[t];
            let want = (xt.data()[i] - s.beta[t] / s.b[t] * e) / alpha.sqrt();
            assert!((got.data()[i] - want).abs() < 1e-10, "t={t}");
        }
    }
}

#[test]
fn first_step_injects_no_noise() {
    let s = default_schedule(100).unwrap();
    let xt = vec_t(&[0.4, -0.2]);
    let z = Tensor::zeros(&[1]);
    let big = vec_t(&[100.0, -100.0]);
    let out = reverse_step(&xt, 1, &z, &Constant(vec_t(&[0.1, 0.2])), &s, &big, Parameterization::X0).unwrap();
    assert_eq!(out, vec_t(&[0.1, 0.2]));
}

#[test]
fn zero_x0_prediction_scales_input() {
    let s = default_schedule(100).unwrap();
    let xt = vec_t(&[0.4, -0.2, 3.0]);
    let z = Tensor::zeros(&[1]);
    let t = 40;
    let out = reverse_step(&xt, t, &z, &ZeroDenoiser, &s, &Tensor::zeros(&[3]), Parameterization::X0).unwrap();
    let coef = (1.0 - s.beta[t]).sqrt() * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
    for (o, x) in out.data().iter().zip(xt.data()) {
        assert!((o - coef * x).abs() < 1e-14);
    }
}

#[test]
fn reverse_step_rejects_bad_steps() {
    let s = default_schedule(50).unwrap();
    let x = Tensor::zeros(&[2]);
    let z = Tensor::zeros(&[1]);
    assert!(matches!(reverse_step(&x, 0, &z, &ZeroDenoiser, &s, &x, Parameterization::Eps), Err(Error::Index(_))));
    assert!(matches!(reverse_step(&x, 51, &z, &ZeroDenoiser, &s, &x, Parameterization::Eps), Err(Error::Index(_))));
}

#[test]
fn eps_floor_trips_on_vanishing_signal() {
    let s = NoiseSchedule::from_betas(&[0.5, 1.0 - 1e-12, 1.0 - 1e-12]).unwrap();
    let x = Tensor::zeros(&[2]);
    assert!(matches!(eps_to_x0(&x, &x, 3, &s), Err(Error::Numeric(_))));
}

#[test]
fn single_step_sampling_returns_the_prediction() {
    let s = NoiseSchedule::from_betas(&[0.99995]).unwrap();
    let oracle = GaussianOracle::new(0.5, 0.3);
    let z = Tensor::zeros(&[1]);
    let out = sample(&oracle, &z, &s, &[8], 11, Parameterization::X0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x1 = standard_normal(&[8], &mut rng);
    assert_eq!(out, oracle.predict(&x1, &z, 1, &s).unwrap());
}

#[test]
fn sampling_is_deterministic() {
    let s = default_schedule(50).unwrap();
    let oracle = GaussianOracle { mu: -0.2, sigma: 0.7, param: Parameterization::Eps };
    let z = Tensor::zeros(&[1]);
    let a = sample(&oracle, &z, &s, &[3, 40], 5, Parameterization::Eps).unwrap();
    let b = sample(&oracle, &z, &s, &[3, 40], 5, Parameterization::Eps).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = sample(&oracle, &z, &s, &[3, 40], 6, Parameterization::Eps).unwrap();
    assert_ne!(a, c);
}

/// Variance of the sampler output for Gaussian data, propagated exactly
/// through the linear reverse recursion.
fn discrete_sampler_variance(s: &NoiseSchedule, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let mut v = 1.0;
    for t in (1..=s.steps()).rev() {
        let gain = s.a[t] * s2 / (s.a[t] * s.a[t] * s2 + s.b[t] * s.b[t]);
        if t == 1 {
            return gain * gain * v;
        }
        let (cx0, cxt) = s.posterior_coefficients(t);
        v = (cx0 * gain + cxt).powi(2) * v + s.c[t] * s.c[t];
    }
    v
}

fn sample_moments(steps: usize, param: Parameterization, seed: u64) -> Vec<(f64, f64)> {
    let (mu, sigma) = (0.5, 0.3);
    let s = default_schedule(steps).unwrap();
    let n = 10_000;
    let oracle = GaussianOracle { mu, sigma, param };
    let x = sample(&oracle, &Tensor::zeros(&[1]), &s, &[8, n], seed, param).unwrap();
    x.data()
        .chunks(n)
        .map(|row| {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, var)
        })
        .collect()
}

#[test]
fn gaussian_oracle_matches_discrete_sampler_moments() {
    let (mu, sigma) = (0.5, 0.3);
    let expected = discrete_sampler_variance(&default_schedule(100).unwrap(), sigma);
    for param in [Parameterization::X0, Parameterization::Eps] {
        for (mean, var) in sample_moments(100, param, 2024) {
            assert!((mean - mu).abs() < 4.0 * sigma / 100.0, "{param:?} mean {mean}");
            assert!((var / expected - 1.0).abs() < 0.05, "{param:?} var {var} vs {expected}");
        }
    }
}

#[test]
fn gaussian_oracle_variance_converges_with_more_steps() {
    let sigma = 0.3;
    let coarse = discrete_sampler_variance(&default_schedule(100).unwrap(), sigma);
    let fine = discrete_sampler_variance(&default_schedule(1000).unwrap(), sigma);
    assert!((fine / (sigma * sigma) - 1.0).abs() < (coarse / (sigma * sigma) - 1.0).abs());
    assert!((fine / (sigma * sigma) - 1.0).abs() < 0.05);
    for (_, var) in sample_moments(1000, Parameterization::X0, 7) {
        assert!((var / fine - 1.0).abs() < 0.05, "var {var} vs {fine}");
    }
}
