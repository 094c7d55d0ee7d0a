//! Griffin–Lim phase reconstruction from log-mel spectrograms.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::mel::{MelConfig, MelFilterbank, MelSpectrogram};
use super::stft::{Spectrogram, StftPlan, Window};
use super::AudioClip;
use crate::error::{bail, Result};

/// Anything that turns a mel spectrogram into a waveform.
pub trait Vocoder {
    fn vocode(&self, mel: &MelSpectrogram, seed: u64) -> Result<AudioClip>;
}

#[derive(Debug, Clone)]
pub struct GriffinLim {
    pub config: MelConfig,
    pub iterations: usize,
    /// Pseudo-inverse of the filterbank, `n_bins x n_mels`.
    pinv: Vec<f64>,
    plan: StftPlan,
}

impl GriffinLim {
    pub const DEFAULT_ITERATIONS: usize = 60;

    pub fn new(config: MelConfig, iterations: usize) -> Result<Self> {
        let fb = MelFilterbank::new(&config)?;
        let m = DMatrix::from_row_slice(fb.n_mels, fb.n_bins, &fb.weights);
        let pinv = m
            .pseudo_inverse(1e-10)
            .map_err(|e| crate::error::Error::Numeric(format!("filterbank pseudo-inverse: {e}")))?;
        // nalgebra is column-major; copy out row-major n_bins x n_mels
        let mut flat = vec![0.0; fb.n_bins * fb.n_mels];
        for k in 0..fb.n_bins {
            for j in 0..fb.n_mels {
                flat[k * fb.n_mels + j] = pinv[(k, j)];
            }
        }
        let plan = StftPlan::new(config.n_fft, config.hop, Window::Hann)?;
        Ok(Self { config, iterations, pinv: flat, plan })
    }

    /// Linear magnitudes recovered from the log-mel values, clipped at zero.
    pub fn magnitudes(&self, mel: &MelSpectrogram) -> Vec<f64> {
        let nm = self.config.n_mels;
        let nb = self.config.n_bins();
        let mut out = vec![0.0; mel.n_frames * nb];
        let mut lin = vec![0.0; nm];
        for f in 0..mel.n_frames {
            for (l, v) in lin.iter_mut().zip(mel.frame(f)) {
                *l = v.exp();
            }
            for k in 0..nb {
                let row = &self.pinv[k * nm..(k + 1) * nm];
                let s: f64 = row.iter().zip(&lin).map(|(a, b)| a * b).sum();
                out[f * nb + k] = s.max(0.0);
            }
        }
        out
    }

    pub fn reconstruct(&self, mel: &MelSpectrogram, seed: u64) -> Result<AudioClip> {
        if mel.n_mels != self.config.n_mels || mel.hop != self.config.hop {
            bail!(
                Config,
                "mel has {} bands / hop {}, vocoder expects {} / {}",
                mel.n_mels,
                mel.hop,
                self.config.n_mels,
                self.config.hop
            );
        }
        let mags = self.magnitudes(mel);
        let mut spec = Spectrogram {
            bins: mags.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
            n_fft: self.config.n_fft,
            hop: self.config.hop,
            n_frames: mel.n_frames,
        };
        if self.iterations > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (c, &m) in spec.bins.iter_mut().zip(&mags) {
                *c = Complex64::from_polar(m, rng.random_range(0.0..2.0 * PI));
            }
        }
        for _ in 0..self.iterations {
            let x = self.plan.synthesize(&spec);
            let re = self.plan.analyze(&x);
            debug_assert_eq!(re.n_frames, spec.n_frames);
            for (i, c) in spec.bins.iter_mut().enumerate() {
                let r = re.bins[i];
                let norm = r.norm();
                *c = if norm > 0.0 { r * (mags[i] / norm) } else { Complex64::new(mags[i], 0.0) };
            }
        }
        AudioClip::new(self.plan.synthesize(&spec), self.config.sample_rate)
    }
}

impl Vocoder for GriffinLim {
    fn vocode(&self, mel: &MelSpectrogram, seed: u64) -> Result<AudioClip> {
        self.reconstruct(mel, seed)
    }
}

/// Griffin–Lim reconstruction with the default analysis configuration.
pub fn phase_reconstruct(mel: &MelSpectrogram, iterations: usize, seed: u64) -> Result<AudioClip> {
    let cfg = MelConfig { hop: mel.hop, n_mels: mel.n_mels, sample_rate: mel.sample_rate, ..MelConfig::default() };
    GriffinLim::new(cfg, iterations)?.reconstruct(mel, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::mel::{mel_spectrogram, LOG_FLOOR};
    use rustfft::FftPlanner;

    fn tone(freq: f64, n: usize) -> AudioClip {
        AudioClip::new((0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin()).collect(), 16000).unwrap()
    }

    /// Oracle: index of the largest bin of a plain full-length FFT.
    fn fft_peak_hz(x: &[f64]) -> f64 {
        let n = x.len();
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (k, _) = buf[..n / 2].iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap();
        k as f64 * 16000.0 / n as f64
    }

    #[test]
    fn pure_tone_peak_survives() {
        let mel = mel_spectrogram(&tone(500.0, 16000), &MelConfig::default()).unwrap();
        let out = phase_reconstruct(&mel, 60, 1).unwrap();
        let peak = fft_peak_hz(&out.samples);
        let bin = 16000.0 / out.samples.len() as f64;
        assert!((peak - 500.0).abs() <= bin.max(16000.0 / 1024.0), "peak at {peak} Hz");
    }

    #[test]
    fn floor_mel_is_near_silent() {
        let mel = MelSpectrogram::new(vec![LOG_FLOOR.ln(); 63 * 80], 63, 80, 256, 16000).unwrap();
        let out = phase_reconstruct(&mel, 60, 3).unwrap();
        let rms = (out.samples.iter().map(|v| v * v).sum::<f64>() / out.samples.len() as f64).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
        assert_eq!(out.samples.len(), 16128);
    }

    #[test]
    fn zero_iterations_is_zero_phase_istft() {
        let mel = mel_spectrogram(&tone(300.0, 4000), &MelConfig::default()).unwrap();
        let out = phase_reconstruct(&mel, 0, 99).unwrap();
        assert_eq!(out.samples.len(), mel.n_frames * 256);
        let again = phase_reconstruct(&mel, 0, 5).unwrap();
        assert_eq!(out.samples, again.samples);
    }

    #[test]
    fn deterministic_given_seed() {
        let mel = mel_spectrogram(&tone(440.0, 6000), &MelConfig::default()).unwrap();
        let a = phase_reconstruct(&mel, 10, 42).unwrap();
        let b = phase_reconstruct(&mel, 10, 42).unwrap();
        assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
