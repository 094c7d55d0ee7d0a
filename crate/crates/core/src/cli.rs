//! Command-line surface: training runs, coding, the evaluation matrix and
//! run verification.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitstream::Bitstream;
use crate::codec::pipeline::{training_schedule, DecoderStage, Pipeline};
use crate::codec::train::train_pipeline_into;
use crate::codec::{CodecConfig, Corpus};
use crate::diffusion::standard_normal;
use crate::error::{bail, Error, Result};
use crate::eval::run_matrix;
use crate::nn::{grad_check, hex_digest, GradCheckOptions, Graph, Params, Var};
use crate::quantizer::sq::{level_value, nearest_level};
use crate::signal::{load_wav, save_wav};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Builtin corpora are always synthesized from this seed, so the training
/// seed only drives initialization and noise.
pub const CORPUS_SEED: u64 = 0;
pub const GRAD_TOL: f64 = 1e-4;
const GRAD_COORDS: usize = 200;
/// Finite-difference step for trained weights. At 1e-5 roundoff on
/// coordinates with tiny gradients dominates the relative error.
const GRAD_EPS: f64 = 1e-4;
const PROGRESS_EVERY: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "dnsc", version, about = "Diffusion speech codec runs: train, code, evaluate, verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every stage of a config into a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's diffusion training steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Encode a 16 kHz WAV into a bitstream file.
    Encode {
        run_dir: PathBuf,
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a bitstream file into a WAV.
    Decode {
        run_dir: PathBuf,
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampling steps; defaults to the config's T_sample.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate every run directory matching a glob on a corpus.
    Matrix {
        /// Glob of run directories.
        runs: String,
        /// `builtin`, `builtin:N` or a WAV glob.
        corpus: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-run the property checks against a run directory.
    Verify { run_dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: String,
    pub seed: u64,
    /// File name to sha256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    /// sha256 over the config text, seed and corpus samples.
    pub input_hash: String,
    pub status: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

/// Checksums of every regular file in `dir` except the manifest.
pub fn artifact_checksums(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST_FILE && entry.file_type()?.is_file() {
            out.insert(name, hex_digest(&std::fs::read(entry.path())?));
        }
    }
    Ok(out)
}

pub fn input_hash(cfg_text: &str, seed: u64, corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(b"config\0");
    h.update(cfg_text.as_bytes());
    h.update(b"\0seed\0");
    h.update(seed.to_le_bytes());
    h.update(b"\0corpus\0");
    for (id, clip) in corpus.ids.iter().zip(&corpus.clips) {
        h.update(id.as_bytes());
        h.update(clip.sample_rate.to_le_bytes());
        for s in &clip.samples {
            h.update(s.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 internal or training failure, 2 user or
/// format error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, command_line) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_user_error() {
        2
    } else {
        1
    }
}

fn execute(command: Command, command_line: Vec<String>) -> Result<i32> {
    match command {
        Command::Train { config, out, seed, steps } => cmd_train(&config, &out, seed, steps, command_line).map(|_| 0),
        Command::Encode { run_dir, input, out } => cmd_encode(&run_dir, &input, &out).map(|_| 0),
        Command::Decode { run_dir, input, out, seed, steps } => cmd_decode(&run_dir, &input, &out, seed, steps).map(|_| 0),
        Command::Matrix { runs, corpus, out, seed } => cmd_matrix(&runs, &corpus, &out, seed).map(|_| 0),
        Command::Verify { run_dir } => cmd_verify(&run_dir),
    }
}

pub fn cmd_train(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    steps: Option<usize>,
    command_line: Vec<String>,
) -> Result<RunManifest> {
    let started = unix_now();
    let mut cfg = CodecConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    cfg.validate()?;
    let corpus = Corpus::resolve(&cfg.corpus_glob, CORPUS_SEED)?;
    let text = cfg.to_text();
    let mut manifest = RunManifest {
        command_line,
        config: text.clone(),
        seed: cfg.seed,
        artifacts: BTreeMap::new(),
        input_hash: input_hash(&text, cfg.seed, &corpus),
        status: "running".into(),
        started_unix: started,
        finished_unix: 0,
    };
    std::fs::create_dir_all(out_dir)?;
    let mut report = |stage: &str, i: usize, total: usize, loss: f64| {
        if (i + 1) % PROGRESS_EVERY == 0 || i + 1 == total {
            eprintln!("{stage} {}/{total} loss {loss:.5}", i + 1);
        }
    };
    let result = train_pipeline_into(&cfg, &corpus, Some(out_dir), Some(&mut report));
    manifest.status = match &result {
        Ok(_) => "complete".into(),
        Err(e) => format!("failed: {e}"),
    };
    manifest.artifacts = artifact_checksums(out_dir)?;
    manifest.finished_unix = unix_now();
    manifest.write(out_dir)?;
    result?;
    Ok(manifest)
}

pub fn cmd_encode(run_dir: &Path, in_wav: &Path, out: &Path) -> Result<()> {
    let p = Pipeline::load(run_dir)?;
    let clip = load_wav(in_wav)?;
    p.encode(&clip)?.write(out)
}

pub fn cmd_decode(run_dir: &Path, in_dnsc: &Path, out: &Path, seed: u64, steps: Option<usize>) -> Result<()> {
    let p = Pipeline::load(run_dir)?;
    let stream = Bitstream::read(in_dnsc)?;
    let clip = p.decode_with_steps(&stream, seed, steps.unwrap_or(p.config.t_sample))?;
    save_wav(&clip, out)
}

pub fn cmd_matrix(runs_glob: &str, corpus_spec: &str, out: &Path, seed: u64) -> Result<()> {
    let mut dirs: Vec<PathBuf> = glob::glob(runs_glob)
        .map_err(|e| Error::Usage(format!("bad run glob {runs_glob:?}: {e}")))?
        .filter_map(|p| p.ok())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!(Usage, "no run directories match {runs_glob:?}");
    }
    let corpus = Corpus::resolve(corpus_spec, CORPUS_SEED)?;
    let report = run_matrix(&dirs, &corpus, seed)?;
    let sidecar = report.write(out, seed)?;
    eprintln!("wrote {} rows to {} (summary {})", report.rows.len(), out.display(), sidecar.display());
    Ok(())
}

/// Outcome of one verification check.
#[derive(Debug)]
pub struct Check {
    pub name: String,
    pub result: Result<String>,
}

/// Runs every check against `run_dir`; later checks that need a loaded
/// pipeline are skipped if loading failed.
pub fn verify_checks(run_dir: &Path) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut push = |name: &str, result: Result<String>| checks.push(Check { name: name.into(), result });
    push("manifest", check_manifest(run_dir));
    let p = match Pipeline::load(run_dir) {
        Ok(p) => {
            push("load", Ok(format!("{}", p.config.kind)));
            p
        }
        Err(e) => {
            push("load", Err(e));
            return checks;
        }
    };
    push("schedule", check_schedule(&p));
    push("gradcheck.denoiser", check_denoiser_grads(&p));
    for (name, codec) in [("gradcheck.cond_codec", &p.cond_codec), ("gradcheck.target_codec", &p.target_codec)] {
        if let Some(c) = codec {
            push(name, check_codec_grads(c));
        }
    }
    if let Some(d) = &p.decoder {
        push("gradcheck.decoder", check_decoder_grads(d));
    }
    push("quantizer", check_quantizer(&p));
    push("bitstream", check_bitstream(&p));
    checks
}

/// Prints one PASS/FAIL line per check. Exit code 0 if all pass, else 2 when
/// a failure comes from the run's files and 1 otherwise.
pub fn cmd_verify(run_dir: &Path) -> Result<i32> {
    let mut code = 0;
    for c in verify_checks(run_dir) {
        match &c.result {
            Ok(detail) => println!("PASS {}: {detail}", c.name),
            Err(e) => {
                println!("FAIL {}: {e}", c.name);
                code = code.max(exit_code(e));
            }
        }
    }
    Ok(code)
}

fn check_manifest(dir: &Path) -> Result<String> {
    let m = RunManifest::load(dir)?;
    if m.status != "complete" {
        bail!(Config, "run status is {:?}", m.status);
    }
    let now = artifact_checksums(dir)?;
    for (name, sum) in &m.artifacts {
        match now.get(name) {
            None => bail!(Config, "{name} is missing"),
            Some(s) if s != sum => bail!(Corruption, "{name} checksum mismatch"),
            _ => {}
        }
    }
    Ok(format!("{} artifacts", m.artifacts.len()))
}

fn check_schedule(p: &Pipeline) -> Result<String> {
    let train = training_schedule(&p.config)?;
    train.validate()?;
    for s in [&train, &p.schedule] {
        for t in 1..=s.steps() {
            let (a, b) = (s.a[t], s.b[t]);
            if (a * a + b * b - 1.0).abs() > 1e-12 {
                bail!(Numeric, "a^2 + b^2 = {} at t = {t}", a * a + b * b);
            }
        }
    }
    let sampling = p.sampling_schedule(p.config.t_sample)?;
    sampling.validate()?;
    Ok(format!("T = {}, sampling {}", train.steps(), sampling.steps()))
}

fn grad_opts() -> GradCheckOptions {
    GradCheckOptions { eps: GRAD_EPS, max_coords: GRAD_COORDS, seed: 0 }
}

fn within_tol(err: f64) -> Result<String> {
    if err < GRAD_TOL {
        Ok(format!("max relative error {err:.2e}"))
    } else {
        Err(Error::Numeric(format!("max relative error {err:.2e} exceeds {GRAD_TOL:e}")))
    }
}

fn probe(rows: usize, cols: usize, seed: u64) -> crate::nn::Tensor {
    standard_normal(&[rows, cols], &mut ChaCha8Rng::seed_from_u64(seed))
}

fn check_denoiser_grads(p: &Pipeline) -> Result<String> {
    let net = &p.dm.net;
    let spec = net.spec;
    let frames = 2;
    let x = probe(spec.out_channels, frames * spec.upsample, 1);
    let z = probe(spec.cond_channels, frames, 2);
    let target = probe(spec.out_channels, frames * spec.upsample, 3);
    let mut params = p.dm.params.clone();
    let err = grad_check(
        &mut params,
        |ps: &Params, g: &mut Graph| -> Result<Var> {
            let (xv, zv, tv) = (g.input(x.clone())?, g.input(z.clone())?, g.input(target.clone())?);
            let y = net.forward(g, ps, xv, zv, 0.4)?;
            g.mse(y, tv)
        },
        grad_opts(),
    )?;
    within_tol(err)
}

fn check_codec_grads(c: &crate::codec::LatentCodec) -> Result<String> {
    let x: Vec<f64> = probe(1, 512, 4).data().iter().map(|v| 0.1 * v).collect();
    let mut params = c.params.clone();
    let err = grad_check(
        &mut params,
        |ps: &Params, g: &mut Graph| c.loss_graph(g, ps, &x, false, &mut ChaCha8Rng::seed_from_u64(0)),
        grad_opts(),
    )?;
    within_tol(err)
}

fn check_decoder_grads(d: &DecoderStage) -> Result<String> {
    match d {
        DecoderStage::PostNet { net, params } => {
            let n_mels = crate::signal::MelConfig::default().n_mels;
            let x = probe(n_mels, 4, 5);
            let target = probe(n_mels, 4, 6);
            let mut params = params.clone();
            let err = grad_check(
                &mut params,
                |ps: &Params, g: &mut Graph| -> Result<Var> {
                    let (xv, tv) = (g.input(x.clone())?, g.input(target.clone())?);
                    let y = net.forward(g, ps, xv)?;
                    g.mse(y, tv)
                },
                grad_opts(),
            )?;
            within_tol(err)
        }
        DecoderStage::Latent(c) => check_codec_grads(c),
    }
}

fn check_quantizer(p: &Pipeline) -> Result<String> {
    let sqs = [p.dm.sq.as_ref(), p.cond_codec.as_ref().map(|c| &c.sq), p.target_codec.as_ref().map(|c| &c.sq)];
    let mut n = 0;
    for sq in sqs.into_iter().flatten() {
        let levels = sq.levels;
        for k in 0..levels {
            let code = level_value(k, levels);
            if nearest_level(code, levels) as usize != k {
                bail!(Numeric, "level {k} of {levels} does not round-trip");
            }
            // anything within half a step snaps back to the same level
            for off in [-0.49, 0.49] {
                let snapped = nearest_level((code + off * sq.step()).clamp(-1.0, 1.0), levels) as usize;
                if snapped != k {
                    bail!(Numeric, "level {k} of {levels} is not the nearest within half a step");
                }
            }
        }
        let idx: Vec<u32> = (0..sq.code_dim).map(|i| (i % levels) as u32).collect();
        let codes = sq.codes(&idx)?;
        let back: Vec<u32> = codes.iter().map(|&c| nearest_level(c, levels)).collect();
        if back != idx {
            bail!(Numeric, "code vector does not round-trip to its indices");
        }
        n += 1;
    }
    Ok(format!("{n} scalar quantizers"))
}

fn check_bitstream(p: &Pipeline) -> Result<String> {
    let clip = Corpus::builtin(1, CORPUS_SEED).clips.remove(0);
    let stream = p.encode(&clip)?;
    p.check_header(&stream.header)?;
    let bytes = stream.to_bytes();
    let back = Bitstream::from_bytes(&bytes)?;
    if back.to_bytes() != bytes || back.indices()? != stream.indices()? {
        bail!(Format, "bitstream does not round-trip");
    }
    let bits = stream.payload_bits() as u64;
    let secs_bits = p.config.bitrate.target_bps as u64 * stream.header.n_frames as u64 * crate::codec::HOP as u64;
    if bits * crate::codec::SAMPLE_RATE as u64 != secs_bits {
        bail!(Format, "payload carries {bits} bits, not the configured rate");
    }
    for bit in [0, 8 * bytes.len() / 2, 8 * bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        if Bitstream::from_bytes(&bad).is_ok() {
            bail!(Format, "flipped bit {bit} went undetected");
        }
    }
    if Bitstream::from_bytes(&bytes[..bytes.len() - 1]).is_ok() {
        bail!(Format, "truncation went undetected");
    }
    Ok(format!("{} bytes for {} frames", bytes.len(), stream.header.n_frames))
}
