//! Codec configurations and the `key = value` config file format.

use std::fmt;
use std::path::Path;

use crate::diffusion::Parameterization;
use crate::error::{bail, Result};
use crate::quantizer::BitrateSpec;
use crate::signal::AudioClip;

pub const HOP: usize = 256;
pub const SAMPLE_RATE: u32 = AudioClip::DEFAULT_RATE;
pub const LATENT_DIM: usize = 80;
/// Conditioning bitrate used when a config does not name one.
pub const DEFAULT_COND_BPS: u32 = 3000;
/// Bitrate of the codec whose latents are generated by `lat`-output models.
pub const TARGET_CODEC_BPS: u32 = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Mel,
    Lat,
    Wav,
}

impl Domain {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(Self::Mel),
            "lat" => Ok(Self::Lat),
            "wav" => Ok(Self::Wav),
            other => bail!(Config, "unknown domain {other:?} (expected mel, lat or wav)"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mel => "mel",
            Self::Lat => "lat",
            Self::Wav => "wav",
        }
    }
}

/// A (conditioning, output) cell of the design space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigKind {
    pub cond: Domain,
    pub out: Domain,
}

impl ConfigKind {
    pub fn new(cond: Domain, out: Domain) -> Result<Self> {
        if cond == Domain::Wav {
            bail!(Config, "waveform conditioning is infeasible at low bitrates; use mel or lat");
        }
        Ok(Self { cond, out })
    }

    /// Stream identifier: 0 mel->wav, 1 lat->wav, 2 mel->mel, 3 lat->mel,
    /// 4 mel->lat, 5 lat->lat.
    pub fn id(self) -> u8 {
        let out = match self.out {
            Domain::Wav => 0,
            Domain::Mel => 2,
            Domain::Lat => 4,
        };
        out + u8::from(self.cond == Domain::Lat)
    }

    pub fn from_id(id: u8) -> Result<Self> {
        if id >= 6 {
            bail!(Format, "config id {id} out of range");
        }
        let cond = if id % 2 == 0 { Domain::Mel } else { Domain::Lat };
        let out = [Domain::Wav, Domain::Mel, Domain::Lat][id as usize / 2];
        Ok(Self { cond, out })
    }

    pub fn label(self) -> String {
        format!("{}->{}", self.cond.as_str(), self.out.as_str())
    }

    /// End-to-end SQ training applies to mel conditioning only.
    pub fn trains_sq(self) -> bool {
        self.cond == Domain::Mel
    }

    pub fn needs_cond_codec(self) -> bool {
        self.cond == Domain::Lat
    }

    pub fn needs_target_codec(self) -> bool {
        self.out == Domain::Lat
    }

    pub fn has_decoder(self) -> bool {
        self.out != Domain::Wav
    }
}

impl fmt::Display for ConfigKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// All six valid cells, in stream-id order.
pub fn enumerate_configs() -> Vec<ConfigKind> {
    (0..6).map(|id| ConfigKind::from_id(id).expect("id in range")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub kind: ConfigKind,
    pub bitrate: BitrateSpec,
    pub t_train: usize,
    pub t_sample: usize,
    /// Diffusion training steps.
    pub steps: usize,
    pub seed: u64,
    pub corpus_glob: String,
    pub codec_steps: usize,
    pub finetune_steps: usize,
    pub parameterization: Parameterization,
    /// Weight of the SQ reconstruction term in end-to-end training.
    pub lambda: f64,
    pub lr: f64,
    pub codec_lr: f64,
}

impl CodecConfig {
    pub fn new(kind: ConfigKind) -> Self {
        Self {
            kind,
            bitrate: BitrateSpec::new(DEFAULT_COND_BPS, SAMPLE_RATE, HOP).expect("default bitrate is valid"),
            t_train: 200,
            t_sample: 50,
            steps: 5000,
            seed: 0,
            corpus_glob: "builtin".into(),
            codec_steps: 2000,
            finetune_steps: 500,
            parameterization: Parameterization::X0,
            lambda: 1.0,
            lr: 1e-3,
            codec_lr: 1e-3,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// usage errors naming the key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cond = None;
        let mut out = None;
        let mut fields: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!(Usage, "line {}: expected `key = value`, got {line:?}", n + 1);
            };
            let (k, v) = (k.trim(), v.trim());
            if fields.iter().any(|(seen, _)| seen == k) {
                bail!(Usage, "line {}: key {k} given twice", n + 1);
            }
            match k {
                "cond_domain" => cond = Some(Domain::parse(v)?),
                "out_domain" => out = Some(Domain::parse(v)?),
                _ => {}
            }
            fields.push((k.to_owned(), v.to_owned()));
        }
        let (Some(cond), Some(out)) = (cond, out) else {
            bail!(Usage, "config must set cond_domain and out_domain");
        };
        let mut cfg = Self::new(ConfigKind::new(cond, out)?);
        for (k, v) in &fields {
            let bad = |what: &str| crate::Error::Usage(format!("key {k}: {v:?} is not {what}"));
            let uint = || v.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            let float = || v.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0).ok_or_else(|| bad("a finite number"));
            match k.as_str() {
                "cond_domain" | "out_domain" => {}
                "bitrate_bps" => {
                    let bps = v.parse::<u32>().map_err(|_| bad("a bitrate in bits per second"))?;
                    cfg.bitrate = BitrateSpec::new(bps, SAMPLE_RATE, HOP)?;
                }
                "T_train" => cfg.t_train = uint()?,
                "T_sample" => cfg.t_sample = uint()?,
                "steps" => cfg.steps = uint()?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad("a 64-bit seed"))?,
                "corpus_glob" => cfg.corpus_glob = v.clone(),
                "codec_steps" => cfg.codec_steps = uint()?,
                "finetune_steps" => cfg.finetune_steps = uint()?,
                "parameterization" => cfg.parameterization = Parameterization::parse(v)?,
                "lambda" => cfg.lambda = float()?,
                "lr" => cfg.lr = float()?,
                "codec_lr" => cfg.codec_lr = float()?,
                other => bail!(Usage, "unknown config key {other}"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_train == 0 || self.t_sample == 0 || self.t_sample > self.t_train {
            bail!(Config, "need 1 <= T_sample <= T_train, got {} and {}", self.t_sample, self.t_train);
        }
        if self.lr <= 0.0 || self.codec_lr <= 0.0 {
            bail!(Config, "learning rates must be positive");
        }
        if self.bitrate.sample_rate != SAMPLE_RATE || self.bitrate.hop != HOP {
            bail!(Config, "only 16 kHz with hop 256 is supported");
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        format!(
            "cond_domain = {}\nout_domain = {}\nbitrate_bps = {}\nT_train = {}\nT_sample = {}\nsteps = {}\nseed = {}\n\
             corpus_glob = {}\ncodec_steps = {}\nfinetune_steps = {}\nparameterization = {}\nlambda = {:?}\nlr = {:?}\n\
             codec_lr = {:?}\n",
            self.kind.cond.as_str(),
            self.kind.out.as_str(),
            self.bitrate.target_bps,
            self.t_train,
            self.t_sample,
            self.steps,
            self.seed,
            self.corpus_glob,
            self.codec_steps,
            self.finetune_steps,
            self.parameterization.as_str(),
            self.lambda,
            self.lr,
            self.codec_lr,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn six_cells_with_distinct_ids() {
        let all = enumerate_configs();
        assert_eq!(all.len(), 6);
        for (i, k) in all.iter().enumerate() {
            assert_eq!(k.id() as usize, i);
            assert_eq!(ConfigKind::from_id(k.id()).unwrap(), *k);
        }
        assert_eq!(all[2].label(), "mel->mel");
        assert_eq!(all[1].label(), "lat->wav");
        assert!(matches!(ConfigKind::new(Domain::Wav, Domain::Mel), Err(Error::Config(_))));
    }

    #[test]
    fn parse_round_trip() {
        let text = "# demo\ncond_domain = lat\nout_domain = mel\nbitrate_bps = 6000\nsteps = 10\nseed = 3\nT_train = 100\nT_sample = 20\ncorpus_glob = builtin:2\n";
        let c = CodecConfig::parse(text).unwrap();
        assert_eq!(c.kind.label(), "lat->mel");
        assert_eq!(c.bitrate.bits_per_frame(), 96);
        assert_eq!(c.corpus_glob, "builtin:2");
        assert_eq!(CodecConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors_name_the_key() {
        let e = CodecConfig::parse("cond_domain = mel\nout_domain = mel\nlearning_rate = 3\n").unwrap_err();
        assert!(matches!(&e, Error::Usage(m) if m.contains("learning_rate")));
        assert!(matches!(CodecConfig::parse("cond_domain = wav\nout_domain = mel\n"), Err(Error::Config(_))));
        assert!(matches!(CodecConfig::parse("out_domain = mel\n"), Err(Error::Usage(_))));
        assert!(CodecConfig::parse("cond_domain = mel\nout_domain = mel\nbitrate_bps = 1001\n").is_err());
        assert!(matches!(CodecConfig::parse("cond_domain = mel\nout_domain = mel\nsteps = -1\n"), Err(Error::Usage(_))));
    }
}
