//! Evaluation matrix over trained pipelines: every utterance is coded by
//! the diffusion path and by the quantized passthrough.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{bootstrap_ci, lsd, mcd, mean, si_sdr};
use crate::codec::pipeline::Pipeline;
use crate::codec::Corpus;
use crate::error::Result;
use crate::signal::{AudioClip, MelAnalyzer, MelConfig};

pub const CSV_HEADER: &str = "id,config,bitrate_bps,variant,lsd_db,mcd_db,si_sdr_db";
pub const MCD_COEFFS: usize = 13;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const SUBSTITUTION_NOTE: &str = "Metrics are objective surrogates (LSD, MCD, SI-SDR). They are not calibrated \
against perceptual quality scores such as ViSQOL or SCOREQ, and rankings are not expected to transfer. All models are \
reconstruction-trained stand-ins (L1+L2, no adversarial losses).";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Full decode through the diffusion model.
    Dm,
    /// Dequantized conditioning decoded directly, skipping the diffusion
    /// model.
    Passthrough,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dm => "dm",
            Self::Passthrough => "passthrough",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub config: String,
    pub bitrate_bps: u32,
    pub variant: Variant,
    pub lsd_db: f64,
    pub mcd_db: f64,
    pub si_sdr_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// Cells that could not be evaluated, with the reason.
    pub absent: Vec<(String, String)>,
}

/// Distances of `test` against `reference`.
pub fn score(analyzer: &MelAnalyzer, reference: &AudioClip, test: &AudioClip) -> Result<(f64, f64, f64)> {
    let mut t = test.clone();
    // compare on the reference's span; coded output is frame-padded
    t.samples.resize(reference.len(), 0.0);
    let mr = analyzer.analyze(reference)?;
    let mt = analyzer.analyze(&t)?;
    Ok((lsd(reference, &t)?, mcd(&mr, &mt, MCD_COEFFS)?, si_sdr(&reference.samples, &t.samples)?))
}

/// Seed used to decode utterance `i`.
pub fn utterance_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// DM and passthrough rows for every utterance, in corpus order.
pub fn evaluate_pipeline(p: &Pipeline, corpus: &Corpus, seed: u64) -> Result<Vec<MetricRow>> {
    let analyzer = MelAnalyzer::new(MelConfig::default())?;
    let mut rows = Vec::with_capacity(2 * corpus.len());
    for (i, (id, clip)) in corpus.ids.iter().zip(&corpus.clips).enumerate() {
        let stream = p.encode(clip)?;
        let s = utterance_seed(seed, i);
        for (variant, out) in [(Variant::Dm, p.decode(&stream, s)?), (Variant::Passthrough, p.passthrough(&stream, s)?)] {
            let (lsd_db, mcd_db, si_sdr_db) = score(&analyzer, clip, &out)?;
            rows.push(MetricRow {
                id: id.clone(),
                config: p.config.kind.label(),
                bitrate_bps: p.config.bitrate.target_bps,
                variant,
                lsd_db,
                mcd_db,
                si_sdr_db,
            });
        }
    }
    Ok(rows)
}

/// Evaluates every run directory; directories that fail to load are
/// recorded as absent cells. Rows are ordered by (config id, bitrate,
/// utterance, variant).
pub fn run_matrix(run_dirs: &[PathBuf], corpus: &Corpus, seed: u64) -> Result<MetricReport> {
    let mut loaded = Vec::new();
    let mut report = MetricReport::default();
    for dir in run_dirs {
        match Pipeline::load(dir) {
            Ok(p) => loaded.push(p),
            Err(e) => report.absent.push((dir.display().to_string(), e.to_string())),
        }
    }
    loaded.sort_by_key(|p| (p.config.kind.id(), p.config.bitrate.target_bps));
    for p in &loaded {
        report.rows.extend(evaluate_pipeline(p, corpus, seed)?);
    }
    Ok(report)
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                r.id,
                r.config,
                r.bitrate_bps,
                r.variant.as_str(),
                r.lsd_db,
                r.mcd_db,
                r.si_sdr_db
            );
        }
        out
    }

    /// (config, bitrate, variant) cells in row order.
    pub fn cells(&self) -> Vec<(String, u32, Variant)> {
        let mut cells: Vec<(String, u32, Variant)> = Vec::new();
        for r in &self.rows {
            let key = (r.config.clone(), r.bitrate_bps, r.variant);
            if !cells.contains(&key) {
                cells.push(key);
            }
        }
        cells
    }

    /// Means and seeded bootstrap 95% intervals per cell, with the metric
    /// substitution note and any absent cells.
    pub fn summary(&self, seed: u64) -> String {
        let mut out = format!("# {SUBSTITUTION_NOTE}\n");
        out.push_str("config,bitrate_bps,variant,n,metric,mean,ci_low,ci_high\n");
        for (config, bps, variant) in self.cells() {
            let rows: Vec<&MetricRow> =
                self.rows.iter().filter(|r| r.config == config && r.bitrate_bps == bps && r.variant == variant).collect();
            let metrics: [(&str, fn(&MetricRow) -> f64); 3] =
                [("lsd_db", |r| r.lsd_db), ("mcd_db", |r| r.mcd_db), ("si_sdr_db", |r| r.si_sdr_db)];
            for (name, f) in metrics {
                let v: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                let (lo, hi) = bootstrap_ci(&v, BOOTSTRAP_RESAMPLES, seed).unwrap_or((f64::NAN, f64::NAN));
                let _ = writeln!(out, "{config},{bps},{},{},{name},{:.6},{lo:.6},{hi:.6}", variant.as_str(), v.len(), mean(&v));
            }
        }
        for (cell, why) in &self.absent {
            let _ = writeln!(out, "# absent: {cell}: {why}");
        }
        out
    }

    /// Writes the CSV and a `<name>.summary.txt` sidecar next to it.
    pub fn write(&self, csv_path: impl AsRef<Path>, seed: u64) -> Result<PathBuf> {
        let csv_path = csv_path.as_ref();
        std::fs::write(csv_path, self.to_csv())?;
        let sidecar = summary_path(csv_path);
        std::fs::write(&sidecar, self.summary(seed))?;
        Ok(sidecar)
    }
}

pub fn summary_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".summary.txt");
    csv_path.with_file_name(name)
}
