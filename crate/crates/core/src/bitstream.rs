//! The `.dnsc` stream format.
//!
//! ```text
//! offset size field
//!      0    4 magic "DNSC"
//!      4    1 version (1)
//!      5    1 config_id (0..6)
//!      6    4 sample_rate
//!     10    2 hop
//!     12    4 n_frames
//!     16    1 code_dim
//!     17    1 bits_per_dim
//!     18    4 target_bps
//!     22    . payload: indices packed MSB-first, frame-major, zero-padded
//!      .    4 CRC-32 (IEEE) of header and payload
//! ```
//!
//! Integers are little-endian. Files carry no timestamps, so equal streams
//! serialize to equal bytes.

use std::path::Path;

use crate::error::{bail, Result};

pub const MAGIC: &[u8; 4] = b"DNSC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const CRC_LEN: usize = 4;
pub const N_CONFIGS: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitstreamHeader {
    pub config_id: u8,
    pub sample_rate: u32,
    pub hop: u16,
    pub n_frames: u32,
    pub code_dim: u8,
    pub bits_per_dim: u8,
    pub target_bps: u32,
}

impl BitstreamHeader {
    pub fn payload_bits(&self) -> usize {
        self.n_frames as usize * self.code_dim as usize * self.bits_per_dim as usize
    }

    pub fn payload_len(&self) -> usize {
        self.payload_bits().div_ceil(8)
    }

    fn validate(&self) -> Result<()> {
        if self.config_id >= N_CONFIGS {
            bail!(Format, "config id {} out of range", self.config_id);
        }
        if self.code_dim == 0 || !(1..=32).contains(&self.bits_per_dim) {
            bail!(Format, "invalid geometry: {} dims x {} bits", self.code_dim, self.bits_per_dim);
        }
        if self.sample_rate == 0 || self.hop == 0 {
            bail!(Format, "sample rate and hop must be positive");
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(MAGIC);
        h[4] = VERSION;
        h[5] = self.config_id;
        h[6..10].copy_from_slice(&self.sample_rate.to_le_bytes());
        h[10..12].copy_from_slice(&self.hop.to_le_bytes());
        h[12..16].copy_from_slice(&self.n_frames.to_le_bytes());
        h[16] = self.code_dim;
        h[17] = self.bits_per_dim;
        h[18..22].copy_from_slice(&self.target_bps.to_le_bytes());
        h
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            bail!(Format, "bad magic (not a DNSC stream)");
        }
        if bytes.len() < HEADER_LEN {
            bail!(Truncation, "stream is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len());
        }
        if bytes[4] != VERSION {
            bail!(Format, "unsupported stream version {}", bytes[4]);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let h = Self {
            config_id: bytes[5],
            sample_rate: u32_at(6),
            hop: u16::from_le_bytes([bytes[10], bytes[11]]),
            n_frames: u32_at(12),
            code_dim: bytes[16],
            bits_per_dim: bytes[17],
            target_bps: u32_at(18),
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: BitstreamHeader,
    pub payload: Vec<u8>,
}

/// Packs `indices` (frames x dims) MSB-first at `bits` per index.
pub fn pack(indices: &[Vec<u32>], bits: u8) -> Result<Vec<u8>> {
    if !(1..=32).contains(&bits) {
        bail!(Config, "bits per index must be in 1..=32, got {bits}");
    }
    let total: usize = indices.iter().map(|f| f.len()).sum::<usize>() * bits as usize;
    let mut out = vec![0u8; total.div_ceil(8)];
    let mut pos = 0usize;
    for (f, frame) in indices.iter().enumerate() {
        for &idx in frame {
            if bits < 32 && idx >> bits != 0 {
                bail!(Data, "index {idx} in frame {f} does not fit in {bits} bits");
            }
            for b in (0..bits).rev() {
                if (idx >> b) & 1 == 1 {
                    out[pos / 8] |= 0x80 >> (pos % 8);
                }
                pos += 1;
            }
        }
    }
    Ok(out)
}

pub fn unpack(bytes: &[u8], n_frames: usize, dims: usize, bits: u8) -> Result<Vec<Vec<u32>>> {
    let needed = (n_frames * dims * bits as usize).div_ceil(8);
    if bytes.len() < needed {
        bail!(Truncation, "payload has {} bytes, {needed} needed", bytes.len());
    }
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut frame = Vec::with_capacity(dims);
        for _ in 0..dims {
            let mut v = 0u32;
            for _ in 0..bits {
                let bit = (bytes[pos / 8] >> (7 - pos % 8)) & 1;
                v = (v << 1) | bit as u32;
                pos += 1;
            }
            frame.push(v);
        }
        out.push(frame);
    }
    Ok(out)
}

impl Bitstream {
    pub fn new(header: BitstreamHeader, indices: &[Vec<u32>]) -> Result<Self> {
        header.validate()?;
        if indices.len() != header.n_frames as usize {
            bail!(Shape, "{} index frames for a header of {}", indices.len(), header.n_frames);
        }
        if let Some(f) = indices.iter().position(|f| f.len() != header.code_dim as usize) {
            bail!(Shape, "frame {f} has {} indices, header says {}", indices[f].len(), header.code_dim);
        }
        let payload = pack(indices, header.bits_per_dim)?;
        Ok(Self { header, payload })
    }

    pub fn indices(&self) -> Result<Vec<Vec<u32>>> {
        let h = &self.header;
        unpack(&self.payload, h.n_frames as usize, h.code_dim as usize, h.bits_per_dim)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() + CRC_LEN);
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and validates magic, version, config id, lengths and CRC.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = BitstreamHeader::from_bytes(bytes)?;
        let total = HEADER_LEN + header.payload_len() + CRC_LEN;
        if bytes.len() < total {
            bail!(Truncation, "stream is {} bytes, header implies {total}", bytes.len());
        }
        if bytes.len() > total {
            bail!(Format, "{} trailing bytes after the checksum", bytes.len() - total);
        }
        let body = &bytes[..total - CRC_LEN];
        let stored = u32::from_le_bytes(bytes[total - CRC_LEN..].try_into().unwrap());
        if crc32fast::hash(body) != stored {
            bail!(Corruption, "CRC mismatch");
        }
        Ok(Self { header, payload: body[HEADER_LEN..].to_vec() })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Bits actually spent on indices, excluding padding.
    pub fn payload_bits(&self) -> usize {
        self.header.payload_bits()
    }
}
