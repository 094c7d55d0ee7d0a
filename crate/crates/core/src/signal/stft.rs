//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames are centered: the signal is reflect-padded by `n_fft / 2` on the
//! left and by whatever the right edge needs so that a clip of `len` samples
//! always produces `ceil(len / hop)` frames. Synthesis inverts exactly that
//! framing and returns `frames * hop` samples.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::AudioClip;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Periodic Hann window.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// Complex STFT, `n_frames x (n_fft / 2 + 1)` bins in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Vec<Complex64>,
    pub n_fft: usize,
    pub hop: usize,
    pub n_frames: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame(&self, f: usize) -> &[Complex64] {
        let nb = self.n_bins();
        &self.bins[f * nb..(f + 1) * nb]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

/// Number of centered frames for a clip of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

/// Mirror index into `0..n` without repeating the edge sample, folding as
/// many times as needed for arbitrarily long pads.
fn reflect_index(j: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = j.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reusable FFT plans and window for one `(n_fft, hop, window)` setting.
#[derive(Clone)]
pub struct StftPlan {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("n_fft", &self.n_fft).field("hop", &self.hop).finish()
    }
}

impl StftPlan {
    pub fn new(n_fft: usize, hop: usize, window: Window) -> Result<Self> {
        if n_fft == 0 || !n_fft.is_power_of_two() {
            bail!(Config, "n_fft must be a power of two, got {n_fft}");
        }
        if hop == 0 || hop > n_fft {
            bail!(Config, "hop must be in 1..=n_fft, got hop {hop} for n_fft {n_fft}");
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_fft,
            hop,
            window: window.coefficients(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn analyze(&self, samples: &[f64]) -> Spectrogram {
        let n_frames = frame_count(samples.len(), self.hop);
        let nb = self.n_fft / 2 + 1;
        let left = (self.n_fft / 2) as isize;
        let mut bins = Vec::with_capacity(n_frames * nb);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for f in 0..n_frames {
            let start = (f * self.hop) as isize - left;
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = samples[reflect_index(start + i as isize, samples.len())];
                *slot = Complex64::new(x * self.window[i], 0.0);
            }
            self.forward.process(&mut buf);
            bins.extend_from_slice(&buf[..nb]);
        }
        Spectrogram { bins, n_fft: self.n_fft, hop: self.hop, n_frames }
    }

    /// Weighted overlap-add inverse. Returns `n_frames * hop` samples aligned
    /// with the analysis framing.
    pub fn synthesize(&self, spec: &Spectrogram) -> Vec<f64> {
        let n = self.n_fft;
        let nb = n / 2 + 1;
        let left = n / 2;
        let out_len = spec.n_frames * self.hop;
        if spec.n_frames == 0 {
            return Vec::new();
        }
        let padded = (spec.n_frames - 1) * self.hop + n;
        let mut acc = vec![0.0; padded];
        let mut wsum = vec![0.0; padded];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for f in 0..spec.n_frames {
            let frame = spec.frame(f);
            buf[..nb].copy_from_slice(frame);
            for k in nb..n {
                buf[k] = frame[n - k].conj();
            }
            self.inverse.process(&mut buf);
            let off = f * self.hop;
            for i in 0..n {
                let w = self.window[i];
                acc[off + i] += buf[i].re * scale * w;
                wsum[off + i] += w * w;
            }
        }
        (0..out_len)
            .map(|i| {
                let j = i + left;
                if j < padded && wsum[j] > 1e-10 {
                    acc[j] / wsum[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn stft(clip: &AudioClip, n_fft: usize, hop: usize, window: Window) -> Result<Spectrogram> {
    Ok(StftPlan::new(n_fft, hop, window)?.analyze(&clip.samples))
}

pub fn istft(spec: &Spectrogram, window: Window) -> Result<Vec<f64>> {
    Ok(StftPlan::new(spec.n_fft, spec.hop, window)?.synthesize(spec))
}
