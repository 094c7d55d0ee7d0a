//! Log-mel analysis on the HTK mel scale.

use std::io::{Read, Write};
use std::path::Path;

use super::stft::{StftPlan, Window};
use super::AudioClip;
use crate::error::{bail, Result};

/// Floor applied to mel energies before the natural log.
pub const LOG_FLOOR: f64 = 1e-5;

/// HTK mel scale, `2595 log10(1 + f / 700)`.
pub fn mel_scale(f_hz: f64) -> Result<f64> {
    if !(f_hz >= 0.0) {
        bail!(Domain, "frequency must be non-negative, got {f_hz}");
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { sample_rate: 16000, n_fft: 1024, hop: 256, n_mels: 80, fmin: 0.0, fmax: 8000.0 }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            bail!(Config, "sample rate must be positive");
        }
        if self.n_mels == 0 || self.n_mels > self.n_fft / 2 {
            bail!(Config, "n_mels {} must be in 1..={}", self.n_mels, self.n_fft / 2);
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            bail!(Config, "fmax {} exceeds Nyquist {}", self.fmax, self.sample_rate / 2);
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            bail!(Config, "need 0 <= fmin < fmax, got {}..{}", self.fmin, self.fmax);
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Triangular filters with unit peak, centers uniform on the mel scale.
/// Triangles are linear in Hz between neighbouring edge frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`, row-major.
    pub weights: Vec<f64>,
    /// `n_mels + 2` edge/center frequencies in Hz.
    pub points_hz: Vec<f64>,
    pub n_mels: usize,
    pub n_bins: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let lo = mel_scale(cfg.fmin)?;
        let hi = mel_scale(cfg.fmax)?;
        let points_hz: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.n_bins();
        let mut fb = Self { weights: vec![0.0; cfg.n_mels * n_bins], points_hz, n_mels: cfg.n_mels, n_bins };
        for m in 0..cfg.n_mels {
            for k in 0..n_bins {
                let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
                fb.weights[m * n_bins + k] = fb.weight_at(m, f);
            }
        }
        Ok(fb)
    }

    /// Continuous response of filter `m` at frequency `f_hz`.
    pub fn weight_at(&self, m: usize, f_hz: f64) -> f64 {
        let (l, c, r) = (self.points_hz[m], self.points_hz[m + 1], self.points_hz[m + 2]);
        if f_hz <= l || f_hz >= r {
            0.0
        } else if f_hz <= c {
            (f_hz - l) / (c - l)
        } else {
            (r - f_hz) / (r - c)
        }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Mel energies of one magnitude frame.
    pub fn apply(&self, mags: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(mags).map(|(w, x)| w * x).sum();
        }
    }
}

/// `n_frames x n_mels` natural-log mel magnitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl MelSpectrogram {
    pub fn new(values: Vec<f64>, n_frames: usize, n_mels: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if values.len() != n_frames * n_mels {
            bail!(Shape, "mel data has {} values, expected {n_frames}x{n_mels}", values.len());
        }
        Ok(Self { values, n_frames, n_mels, hop, sample_rate })
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        &self.values[f * self.n_mels..(f + 1) * self.n_mels]
    }

    /// Channel-major copy (`n_mels x n_frames`), the layout used by the
    /// sequence models.
    pub fn to_channel_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for f in 0..self.n_frames {
            for m in 0..self.n_mels {
                out[m * self.n_frames + f] = self.values[f * self.n_mels + m];
            }
        }
        out
    }

    pub fn from_channel_major(data: &[f64], n_mels: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if n_mels == 0 || data.len() % n_mels != 0 {
            bail!(Shape, "{} values cannot form {n_mels} channels", data.len());
        }
        let n_frames = data.len() / n_mels;
        let mut values = vec![0.0; data.len()];
        for m in 0..n_mels {
            for f in 0..n_frames {
                values[f * n_mels + m] = data[m * n_frames + f];
            }
        }
        Self::new(values, n_frames, n_mels, hop, sample_rate)
    }

    /// Writes the flat `MELF` export: magic, u32 frames, u32 mels, then
    /// row-major little-endian f32 values.
    pub fn write_melf(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(b"MELF");
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    /// Reads a `MELF` export. The format does not carry hop or sample rate;
    /// the defaults of [`MelConfig`] are assumed.
    pub fn read_melf(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..4] != b"MELF" {
            bail!(Format, "not a MELF file");
        }
        let n_frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n_mels = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != 4 * n_frames * n_mels {
            bail!(Truncation, "MELF body has {} bytes, expected {}", body.len(), 4 * n_frames * n_mels);
        }
        let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        let d = MelConfig::default();
        Self::new(values, n_frames, n_mels, d.hop, d.sample_rate)
    }
}

/// Mel analyzer bundling the filterbank with the STFT plan.
#[derive(Debug, Clone)]
pub struct MelAnalyzer {
    pub config: MelConfig,
    pub filterbank: MelFilterbank,
    plan: StftPlan,
}

impl MelAnalyzer {
    pub fn new(config: MelConfig) -> Result<Self> {
        let filterbank = MelFilterbank::new(&config)?;
        let plan = StftPlan::new(config.n_fft, config.hop, Window::Hann)?;
        Ok(Self { config, filterbank, plan })
    }

    /// Mel energies before the log, frames x mels.
    pub fn energies(&self, samples: &[f64]) -> (Vec<f64>, usize) {
        let spec = self.plan.analyze(samples);
        let mags = spec.magnitudes();
        let nb = spec.n_bins();
        let nm = self.config.n_mels;
        let mut out = vec![0.0; spec.n_frames * nm];
        for f in 0..spec.n_frames {
            self.filterbank.apply(&mags[f * nb..(f + 1) * nb], &mut out[f * nm..(f + 1) * nm]);
        }
        (out, spec.n_frames)
    }

    pub fn analyze(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        if clip.sample_rate != self.config.sample_rate {
            bail!(Config, "clip is {} Hz, analyzer expects {} Hz", clip.sample_rate, self.config.sample_rate);
        }
        let (energies, n_frames) = self.energies(&clip.samples);
        let values = energies.into_iter().map(|e| e.max(LOG_FLOOR).ln()).collect();
        MelSpectrogram::new(values, n_frames, self.config.n_mels, self.config.hop, self.config.sample_rate)
    }
}

pub fn mel_spectrogram(clip: &AudioClip, config: &MelConfig) -> Result<MelSpectrogram> {
    MelAnalyzer::new(*config)?.analyze(clip)
}
