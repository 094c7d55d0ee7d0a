//! Objective distance measures between reference and coded signals.

use std::f64::consts::{LN_10, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::signal::mel::MelSpectrogram;
use crate::signal::stft::{StftPlan, Window};
use crate::signal::AudioClip;

pub const POWER_FLOOR: f64 = 1e-10;
/// Reported in place of +-infinity.
pub const SI_SDR_CAP: f64 = 100.0;
pub const LSD_FFT: usize = 1024;
pub const LSD_HOP: usize = 256;

fn padded_pair(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len().max(b.len());
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.resize(n, 0.0);
    y.resize(n, 0.0);
    (x, y)
}

/// Root mean square over all frames and bins of the dB power ratio.
pub fn lsd(reference: &AudioClip, test: &AudioClip) -> Result<f64> {
    if reference.sample_rate != test.sample_rate {
        bail!(Data, "sample rates differ: {} vs {}", reference.sample_rate, test.sample_rate);
    }
    lsd_samples(&reference.samples, &test.samples)
}

pub fn lsd_samples(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.is_empty() && test.is_empty() {
        bail!(Data, "LSD of empty signals");
    }
    let (r, t) = padded_pair(reference, test);
    let plan = StftPlan::new(LSD_FFT, LSD_HOP, Window::Hann)?;
    let (sr, st) = (plan.analyze(&r), plan.analyze(&t));
    let mut acc = 0.0;
    for (a, b) in sr.bins.iter().zip(&st.bins) {
        let d = 10.0 * (a.norm_sqr().max(POWER_FLOOR) / b.norm_sqr().max(POWER_FLOOR)).log10();
        acc += d * d;
    }
    Ok((acc / sr.bins.len() as f64).sqrt())
}

/// LSD evaluated directly on natural-log magnitude mels.
pub fn lsd_mel(reference: &MelSpectrogram, test: &MelSpectrogram) -> Result<f64> {
    check_mels(reference, test)?;
    let scale = 20.0 / LN_10;
    let acc: f64 = reference.values.iter().zip(&test.values).map(|(a, b)| (scale * (a - b)).powi(2)).sum();
    Ok((acc / reference.values.len() as f64).sqrt())
}

fn check_mels(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<()> {
    if a.n_frames != b.n_frames || a.n_mels != b.n_mels {
        bail!(Data, "mel shapes differ: {}x{} vs {}x{}", a.n_frames, a.n_mels, b.n_frames, b.n_mels);
    }
    if a.values.is_empty() {
        bail!(Data, "empty mel spectrogram");
    }
    Ok(())
}

/// Scale-invariant SDR in dB, capped at +-100.
pub fn si_sdr(reference: &[f64], test: &[f64]) -> Result<f64> {
    let (r, t) = padded_pair(reference, test);
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        bail!(Data, "SI-SDR needs a nonzero reference");
    }
    let alpha = r.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / rr;
    let proj: f64 = alpha * alpha * rr;
    let noise: f64 = r.iter().zip(&t).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    // relative to the signal energy, residue this small is rounding error
    let tiny = 1e-24 * t.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if noise <= tiny {
        return Ok(SI_SDR_CAP);
    }
    if proj == 0.0 {
        return Ok(-SI_SDR_CAP);
    }
    Ok((10.0 * (proj / noise).log10()).clamp(-SI_SDR_CAP, SI_SDR_CAP))
}

/// Orthonormal DCT-II of one vector.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x.iter().enumerate().map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos()).sum();
            let w = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            w * s
        })
        .collect()
}

/// Mel-cepstral distortion over coefficients `1..=n_coeffs`.
pub fn mcd(reference: &MelSpectrogram, test: &MelSpectrogram, n_coeffs: usize) -> Result<f64> {
    check_mels(reference, test)?;
    if n_coeffs == 0 || n_coeffs >= reference.n_mels {
        bail!(Config, "n_coeffs must be in 1..{}", reference.n_mels);
    }
    let k = 10.0 * 2f64.sqrt() / LN_10;
    let mut total = 0.0;
    for f in 0..reference.n_frames {
        let cr = dct2(reference.frame(f));
        let ct = dct2(test.frame(f));
        let d: f64 = (1..=n_coeffs).map(|i| (cr[i] - ct[i]).powi(2)).sum();
        total += k * d.sqrt();
    }
    Ok(total / reference.n_frames as f64)
}

/// Percentile bootstrap 95% interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> Option<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Some((at(0.025), at(0.975)))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::signal::mel::{mel_spectrogram, MelConfig};
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
    }

    fn clip(v: Vec<f64>) -> AudioClip {
        AudioClip::new(v, 16000).unwrap()
    }

    #[test]
    fn lsd_identity_scaling_and_floor() {
        let x = noise(8000, 1);
        assert_eq!(lsd(&clip(x.clone()), &clip(x.clone())).unwrap(), 0.0);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = lsd(&clip(x.clone()), &clip(x2)).unwrap();
        assert!((d - 20.0 * 2f64.log10()).abs() < 1e-6, "{d}");
        let silent = lsd(&clip(x), &clip(vec![0.0; 8000])).unwrap();
        assert!(silent.is_finite() && silent > 20.0);
        assert!(matches!(lsd_samples(&[], &[]), Err(Error::Data(_))));
    }

    #[test]
    fn si_sdr_examples() {
        let r = noise(4000, 2);
        let scaled: Vec<f64> = r.iter().map(|v| -3.0 * v).collect();
        assert_eq!(si_sdr(&r, &scaled).unwrap(), SI_SDR_CAP);
        // orthogonal test: alternate-sign copy on a two-sample pattern
        let a = [1.0, 1.0, 1.0, 1.0];
        let b = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(si_sdr(&a, &b).unwrap(), -SI_SDR_CAP);
        // noise orthogonal to the reference at a tenth of its power
        let mut n = noise(4000, 3);
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let dot: f64 = r.iter().zip(&n).map(|(a, b)| a * b).sum();
        n.iter_mut().zip(&r).for_each(|(v, x)| *v -= dot / rr * x);
        let nn: f64 = n.iter().map(|v| v * v).sum();
        let g = (rr / 10.0 / nn).sqrt();
        let t: Vec<f64> = r.iter().zip(&n).map(|(x, e)| x + g * e).collect();
        assert!((si_sdr(&r, &t).unwrap() - 10.0).abs() < 1e-9);
        assert!(matches!(si_sdr(&[0.0; 4], &a), Err(Error::Data(_))));
    }

    #[test]
    fn si_sdr_is_scale_invariant() {
        let r = noise(2000, 4);
        let t = noise(2000, 5).iter().zip(&r).map(|(e, x)| x + e).collect::<Vec<_>>();
        let base = si_sdr(&r, &t).unwrap();
        for alpha in [0.01, -2.0, 17.0] {
            let s: Vec<f64> = t.iter().map(|v| alpha * v).collect();
            assert!((si_sdr(&r, &s).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn mcd_identity_offset_and_hand_example() {
        let m = mel_spectrogram(&clip(noise(8000, 6)), &MelConfig::default()).unwrap();
        assert_eq!(mcd(&m, &m, 13).unwrap(), 0.0);
        let mut shifted = m.clone();
        shifted.values.iter_mut().for_each(|v| *v += 0.7);
        assert!(mcd(&m, &shifted, 13).unwrap() < 1e-9);

        // one frame of three bands, two coefficients, brute-force DCT
        let a = MelSpectrogram::new(vec![1.0, 2.0, 4.0], 1, 3, 256, 16000).unwrap();
        let b = MelSpectrogram::new(vec![0.0, 0.0, 0.0], 1, 3, 256, 16000).unwrap();
        let c1 = (2.0f64 / 3.0).sqrt() * ((PI / 6.0).cos() + 2.0 * (PI / 2.0).cos() + 4.0 * (5.0 * PI / 6.0).cos());
        let c2 = (2.0f64 / 3.0).sqrt() * ((PI / 3.0).cos() + 2.0 * PI.cos() + 4.0 * (5.0 * PI / 3.0).cos());
        let want = 10.0 * 2f64.sqrt() / LN_10 * (c1 * c1 + c2 * c2).sqrt();
        assert!((mcd(&a, &b, 2).unwrap() - want).abs() < 1e-12);

        let short = MelSpectrogram::new(vec![0.0; 80], 1, 80, 256, 16000).unwrap();
        assert!(matches!(mcd(&m, &short, 13), Err(Error::Data(_))));
    }

    #[test]
    fn dct_is_orthonormal() {
        let x = [0.3, -1.0, 2.5, 0.0, 4.0];
        let c = dct2(&x);
        let e1: f64 = x.iter().map(|v| v * v).sum();
        let e2: f64 = c.iter().map(|v| v * v).sum();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_is_seeded_and_brackets_the_mean() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = bootstrap_ci(&v, 1000, 9).unwrap();
        assert_eq!(a, bootstrap_ci(&v, 1000, 9).unwrap());
        let m = mean(&v);
        assert!(a.0 <= m && m <= a.1);
        assert!(bootstrap_ci(&[], 1000, 0).is_none());
    }
}
