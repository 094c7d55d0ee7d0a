//! Python bindings: audio I/O, mel analysis, schedules, quantizer planning,
//! trained pipelines, bitstreams and metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use dnsc::bitstream::Bitstream as CoreBitstream;
use dnsc::codec::pipeline::Pipeline as CorePipeline;
use dnsc::codec::train::train_pipeline;
use dnsc::codec::{CodecConfig as CoreConfig, Corpus, SAMPLE_RATE};
use dnsc::diffusion::{default_schedule, NoiseSchedule as CoreSchedule};
use dnsc::eval::metrics;
use dnsc::quantizer::{plan_bitrate, AllocationStrategy};
use dnsc::signal::{self, MelConfig};

fn to_py(e: dnsc::Error) -> PyErr {
    match e {
        dnsc::Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_user_error() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn clip(samples: Vec<f64>, sample_rate: u32) -> PyResult<signal::AudioClip> {
    signal::AudioClip::new(samples, sample_rate).map_err(to_py)
}

/// Mono PCM clip with float samples in [-1, 1].
#[pyclass(module = "pydnsc", frozen)]
struct AudioClip {
    inner: signal::AudioClip,
}

#[pymethods]
impl AudioClip {
    #[new]
    #[pyo3(signature = (samples, sample_rate = SAMPLE_RATE))]
    fn new(samples: Vec<f64>, sample_rate: u32) -> PyResult<Self> {
        Ok(Self { inner: clip(samples, sample_rate)? })
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples.clone()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("AudioClip({} samples @ {} Hz)", self.inner.len(), self.inner.sample_rate)
    }
}

#[pyfunction]
fn load_wav(path: PathBuf) -> PyResult<AudioClip> {
    Ok(AudioClip { inner: signal::load_wav(path).map_err(to_py)? })
}

#[pyfunction]
fn save_wav(clip: &AudioClip, path: PathBuf) -> PyResult<()> {
    signal::save_wav(&clip.inner, path).map_err(to_py)
}

/// Log-mel frames (`n_frames` lists of 80 values) with the codec's
/// analysis settings.
#[pyfunction]
fn mel_spectrogram(clip: &AudioClip) -> PyResult<Vec<Vec<f64>>> {
    let m = signal::mel_spectrogram(&clip.inner, &MelConfig::default()).map_err(to_py)?;
    Ok(m.values.chunks(m.n_mels).map(<[f64]>::to_vec).collect())
}

/// Builtin synthetic speech-like clips.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn builtin_corpus(n: usize, seed: u64) -> Vec<AudioClip> {
    Corpus::builtin(n, seed).clips.into_iter().map(|inner| AudioClip { inner }).collect()
}

#[pyclass(module = "pydnsc", frozen)]
struct NoiseSchedule {
    inner: CoreSchedule,
}

#[pymethods]
impl NoiseSchedule {
    /// Scaled-linear schedule with `steps` diffusion steps.
    #[new]
    fn new(steps: usize) -> PyResult<Self> {
        Ok(Self { inner: default_schedule(steps).map_err(to_py)? })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.a.clone()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.clone()
    }

    #[getter]
    fn c(&self) -> Vec<f64> {
        self.inner.c.clone()
    }

    fn subsample(&self, steps: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.subsample(steps).map_err(to_py)? })
    }

    fn dump(&self) -> String {
        self.inner.dump()
    }
}

/// `(code_dim, levels, bits_per_frame)` for a bitrate at the codec's
/// frame rate.
#[pyfunction]
fn plan_for_bitrate(target_bps: u32) -> PyResult<(usize, usize, usize)> {
    let rate = SAMPLE_RATE as f64 / dnsc::codec::HOP as f64;
    let p = plan_bitrate(target_bps, rate, AllocationStrategy::PreferThreeBits).map_err(to_py)?;
    Ok((p.code_dim, p.levels, p.bits_per_frame()))
}

#[pyclass(module = "pydnsc", frozen)]
struct CodecConfig {
    inner: CoreConfig,
}

#[pymethods]
impl CodecConfig {
    /// Parses the `key = value` config format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreConfig::parse(text).map_err(to_py)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.kind.label()
    }

    #[getter]
    fn bitrate_bps(&self) -> u32 {
        self.inner.bitrate.target_bps
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

#[pyclass(module = "pydnsc", frozen)]
struct Bitstream {
    inner: CoreBitstream,
}

#[pymethods]
impl Bitstream {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: CoreBitstream::from_bytes(data).map_err(to_py)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[getter]
    fn n_frames(&self) -> u32 {
        self.inner.header.n_frames
    }

    #[getter]
    fn config_id(&self) -> u8 {
        self.inner.header.config_id
    }

    #[getter]
    fn target_bps(&self) -> u32 {
        self.inner.header.target_bps
    }

    #[getter]
    fn payload_bits(&self) -> usize {
        self.inner.payload_bits()
    }

    fn indices(&self) -> PyResult<Vec<Vec<u32>>> {
        self.inner.indices().map_err(to_py)
    }
}

/// A trained codec: encoder, diffusion model and decoder stage.
#[pyclass(module = "pydnsc", frozen)]
struct Pipeline {
    inner: CorePipeline,
}

#[pymethods]
impl Pipeline {
    /// Loads a run directory written by `dnsc train` or `save`.
    #[staticmethod]
    fn load(run_dir: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CorePipeline::load(run_dir).map_err(to_py)? })
    }

    /// Trains every stage of `config` on a corpus spec (`builtin`,
    /// `builtin:N` or a WAV glob). Releases the GIL while training.
    #[staticmethod]
    #[pyo3(signature = (config, corpus = None))]
    fn train(py: Python<'_>, config: &CodecConfig, corpus: Option<String>) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let spec = corpus.unwrap_or_else(|| cfg.corpus_glob.clone());
        let inner = py
            .detach(|| -> dnsc::Result<CorePipeline> {
                let corpus = Corpus::resolve(&spec, 0)?;
                Ok(train_pipeline(&cfg, &corpus, None)?.0)
            })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, run_dir: PathBuf) -> PyResult<()> {
        self.inner.save(run_dir).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> CodecConfig {
        CodecConfig { inner: self.inner.config.clone() }
    }

    fn encode(&self, clip: &AudioClip) -> PyResult<Bitstream> {
        Ok(Bitstream { inner: self.inner.encode(&clip.inner).map_err(to_py)? })
    }

    #[pyo3(signature = (stream, seed = 0, steps = None))]
    fn decode(&self, py: Python<'_>, stream: &Bitstream, seed: u64, steps: Option<usize>) -> PyResult<AudioClip> {
        let steps = steps.unwrap_or(self.inner.config.t_sample);
        let inner = py.detach(|| self.inner.decode_with_steps(&stream.inner, seed, steps)).map_err(to_py)?;
        Ok(AudioClip { inner })
    }

    /// Decodes the quantized conditioning directly, skipping diffusion.
    #[pyo3(signature = (stream, seed = 0))]
    fn passthrough(&self, stream: &Bitstream, seed: u64) -> PyResult<AudioClip> {
        Ok(AudioClip { inner: self.inner.passthrough(&stream.inner, seed).map_err(to_py)? })
    }
}

#[pyfunction]
fn lsd(reference: &AudioClip, test: &AudioClip) -> PyResult<f64> {
    metrics::lsd(&reference.inner, &test.inner).map_err(to_py)
}

#[pyfunction]
fn si_sdr(reference: &AudioClip, test: &AudioClip) -> PyResult<f64> {
    metrics::si_sdr(&reference.inner.samples, &test.inner.samples).map_err(to_py)
}

#[pymodule]
fn pydnsc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<AudioClip>()?;
    m.add_class::<NoiseSchedule>()?;
    m.add_class::<CodecConfig>()?;
    m.add_class::<Bitstream>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(save_wav, m)?)?;
    m.add_function(wrap_pyfunction!(mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(plan_for_bitrate, m)?)?;
    m.add_function(wrap_pyfunction!(lsd, m)?)?;
    m.add_function(wrap_pyfunction!(si_sdr, m)?)?;
    m.add("SAMPLE_RATE", SAMPLE_RATE)?;
    Ok(())
}
