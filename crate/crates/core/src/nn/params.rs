//! Named parameter collections and the `DNSM` checkpoint format.
//!
//! A checkpoint is the magic `DNSM`, a version byte, then one record per
//! tensor until end of file:
//!
//! ```text
//! u32 name_len | name (UTF-8) | u32 rank | u32 dims[rank] | f64 data[prod(dims)]
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{bail, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DNSM";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Trainable tensors with matching gradient buffers.
#[derive(Debug, Clone, Default)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            bail!(Config, "duplicate parameter name {name}");
        }
        let id = self.values.len();
        self.lookup.insert(name.clone(), id);
        self.grads.push(Tensor::zeros(value.shape()));
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale_grads(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copies values from `other` for every name both collections share.
    /// Shapes must agree. Returns the number of tensors copied.
    pub fn copy_matching(&mut self, other: &Params) -> Result<usize> {
        let mut n = 0;
        for (i, name) in self.names.iter().enumerate() {
            if let Some(j) = other.id(name) {
                let src = other.value(j);
                if src.shape() != self.values[i].shape() {
                    bail!(Shape, "parameter {name}: shape {:?} vs {:?}", src.shape(), self.values[i].shape());
                }
                self.values[i] = src.clone();
                n += 1;
            }
        }
        Ok(n)
    }

    /// Serializes all values in insertion order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        for (name, value) in self.names.iter().zip(&self.values) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
            for &d in value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..4] != CHECKPOINT_MAGIC {
            bail!(Format, "not a DNSM checkpoint");
        }
        if bytes[4] != CHECKPOINT_VERSION {
            bail!(Format, "unsupported checkpoint version {}", bytes[4]);
        }
        let mut cur = Cursor { bytes, pos: 5 };
        let mut params = Params::new();
        while cur.pos < bytes.len() {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| crate::error::Error::Format("parameter name is not UTF-8".into()))?
                .to_owned();
            let rank = cur.u32()? as usize;
            if rank > 8 {
                bail!(Format, "parameter {name}: implausible rank {rank}");
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = cur.take(n.checked_mul(8).ok_or_else(|| crate::error::Error::Format("tensor too large".into()))?)?;
            let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if data.iter().any(|v| !v.is_finite()) {
                bail!(Data, "parameter {name} holds non-finite values");
            }
            params.add(name, Tensor::new(shape, data)?)?;
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            crate::error::Error::Format(m) => crate::error::Error::Format(format!("{}: {m}", path.display())),
            crate::error::Error::Truncation(m) => crate::error::Error::Truncation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn checksum(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            bail!(Truncation, "checkpoint ends inside a record");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Kaiming-uniform initialization: U(-b, b) with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    scaled_uniform(shape, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}

pub fn scaled_uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}
