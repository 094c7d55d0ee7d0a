//! Audio I/O, framing, STFT, mel analysis and phase reconstruction.

pub mod griffin_lim;
pub mod mel;
pub mod stft;
pub mod wav;

pub use griffin_lim::{phase_reconstruct, GriffinLim, Vocoder};
pub use mel::{mel_scale, mel_spectrogram, MelAnalyzer, MelConfig, MelFilterbank, MelSpectrogram, LOG_FLOOR};
pub use stft::{istft, stft, Spectrogram, StftPlan, Window};
pub use wav::{load_wav, save_wav};

use crate::error::{bail, Result};

/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub const DEFAULT_RATE: u32 = 16000;

    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            bail!(Config, "sample rate must be positive");
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            bail!(Data, "non-finite sample at index {i}");
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Scales so the peak magnitude is `peak` (no-op on silence).
    pub fn normalize_peak(&mut self, peak: f64) {
        let m = self.samples.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        if m > 0.0 {
            let g = peak / m;
            self.samples.iter_mut().for_each(|s| *s *= g);
        }
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}
