//! Training corpora of one-second, 16 kHz segments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::SAMPLE_RATE;
use crate::error::{bail, Result};
use crate::signal::{load_wav, AudioClip};

pub const SEGMENT: usize = SAMPLE_RATE as usize;
pub const DEFAULT_BUILTIN_CLIPS: usize = 8;
/// Upper bound for corpora used in desk-scale runs.
pub const MAX_SECONDS: usize = 60;
const NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Corpus {
    pub ids: Vec<String>,
    pub clips: Vec<AudioClip>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.clips.iter().map(AudioClip::duration_secs).sum()
    }

    pub fn take(&self, n: usize) -> Corpus {
        Corpus { ids: self.ids.iter().take(n).cloned().collect(), clips: self.clips.iter().take(n).cloned().collect() }
    }

    /// `n` synthetic speech-like clips: voiced syllables with moving
    /// formants, fricative bursts and pauses.
    pub fn builtin(n: usize, seed: u64) -> Self {
        let clips = (0..n).map(|i| synth_utterance(seed.wrapping_mul(1_000_003).wrapping_add(i as u64))).collect();
        Self { ids: (0..n).map(|i| format!("builtin-{i:02}")).collect(), clips }
    }

    /// Mono 16 kHz PCM16 files matching `pattern`, cut into whole seconds.
    pub fn from_glob(pattern: &str) -> Result<Self> {
        let mut paths: Vec<_> = glob::glob(pattern)
            .map_err(|e| crate::Error::Usage(format!("bad corpus glob {pattern:?}: {e}")))?
            .filter_map(|p| p.ok())
            .collect();
        paths.sort();
        let mut ids = Vec::new();
        let mut clips = Vec::new();
        for p in paths {
            let clip = load_wav(&p)?;
            if clip.sample_rate != SAMPLE_RATE {
                bail!(Config, "{}: sample rate {} (only {SAMPLE_RATE} Hz is supported)", p.display(), clip.sample_rate);
            }
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            for (k, seg) in clip.samples.chunks_exact(SEGMENT).enumerate() {
                ids.push(format!("{name}#{k}"));
                clips.push(AudioClip::new(seg.to_vec(), SAMPLE_RATE)?);
            }
        }
        if clips.is_empty() {
            bail!(Config, "corpus glob {pattern:?} yielded no one-second segments");
        }
        Ok(Self { ids, clips })
    }

    /// `builtin`, `builtin:N` or a file glob.
    pub fn resolve(spec: &str, seed: u64) -> Result<Self> {
        if spec == "builtin" {
            return Ok(Self::builtin(DEFAULT_BUILTIN_CLIPS, seed));
        }
        if let Some(n) = spec.strip_prefix("builtin:") {
            let n: usize = n.parse().map_err(|_| crate::Error::Usage(format!("bad builtin corpus size {n:?}")))?;
            if n == 0 || n > MAX_SECONDS {
                bail!(Usage, "builtin corpus size must be in 1..={MAX_SECONDS}");
            }
            return Ok(Self::builtin(n, seed));
        }
        Self::from_glob(spec)
    }
}

/// Formant resonance gain at `f` (Hz).
fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants.iter().map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2))).sum::<f64>() + 0.02
}

fn synth_utterance(seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE as f64;
    let mut out = vec![0.0; SEGMENT];
    let base_f0 = rng.random_range(95.0..210.0);
    let mut t0 = rng.random_range(0..1600usize);
    let mut phase = 0.0f64;
    while t0 < SEGMENT {
        let len = rng.random_range(1800..4200usize).min(SEGMENT - t0);
        let f1 = (rng.random_range(300.0..800.0), rng.random_range(300.0..800.0));
        let f2 = (rng.random_range(900.0..2300.0), rng.random_range(900.0..2300.0));
        let f3 = rng.random_range(2400.0..3200.0);
        let glide = rng.random_range(-0.25..0.25);
        let amp = rng.random_range(0.5..1.0);
        for i in 0..len {
            let u = i as f64 / len as f64;
            let env = (PI * u).sin().powf(0.6);
            let f0 = base_f0 * (1.0 + glide * u + 0.02 * (2.0 * PI * 5.0 * i as f64 / sr).sin());
            phase += 2.0 * PI * f0 / sr;
            let formants = [(f1.0 + (f1.1 - f1.0) * u, 90.0), (f2.0 + (f2.1 - f2.0) * u, 120.0), (f3, 200.0)];
            let mut s = 0.0;
            let mut h = 1.0;
            while h * f0 < 4000.0 {
                s += formant_gain(h * f0, &formants) * (h * phase).sin() / h.sqrt();
                h += 1.0;
            }
            out[t0 + i] += amp * env * s;
        }
        t0 += len;
        // fricative burst or pause between syllables
        if t0 < SEGMENT && rng.random_bool(0.5) {
            let n = rng.random_range(600..1400usize).min(SEGMENT - t0);
            let mut prev = 0.0;
            for i in 0..n {
                let w: f64 = StandardNormal.sample(&mut rng);
                // first difference tilts the noise toward high frequencies
                let hp = w - prev;
                prev = w;
                out[t0 + i] += 0.15 * (PI * i as f64 / n as f64).sin() * hp;
            }
            t0 += n;
        }
        t0 += rng.random_range(200..1200usize);
    }
    // recording noise floor, roughly 55 dB below the speech peak
    for v in out.iter_mut() {
        let w: f64 = StandardNormal.sample(&mut rng);
        *v += NOISE_FLOOR * w;
    }
    let mut clip = AudioClip::new(out, SAMPLE_RATE).expect("finite synthesis");
    clip.normalize_peak(0.5);
    clip
}
