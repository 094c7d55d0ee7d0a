use crate::error::{bail, Result};

/// Sinusoidal embedding of a normalized diffusion time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub max_period: f64,
}

impl TimeEmbedding {
    /// Normalized times are stretched to this many positions before the
    /// sinusoids are applied.
    pub const POSITION_SCALE: f64 = 1000.0;

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            bail!(Config, "embedding dimension must be even and positive, got {dim}");
        }
        Ok(Self { dim, max_period: 10000.0 })
    }

    /// `[sin(w0 p), cos(w0 p), sin(w1 p), cos(w1 p), ...]` with
    /// `w_i = max_period^(-i / (dim/2))` and `p = 1000 t`.
    pub fn embed(&self, t_normalized: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t_normalized) {
            bail!(Domain, "normalized time must lie in [0, 1], got {t_normalized}");
        }
        let half = self.dim / 2;
        let pos = Self::POSITION_SCALE * t_normalized;
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..half {
            let w = self.max_period.powf(-(i as f64) / half as f64);
            out.push((w * pos).sin());
            out.push((w * pos).cos());
        }
        Ok(out)
    }
}

pub fn sinusoidal_embed(t_normalized: f64, dim: usize) -> Result<Vec<f64>> {
    TimeEmbedding::new(dim)?.embed(t_normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn zero_time() {
        let e = sinusoidal_embed(0.0, 16).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(matches!(sinusoidal_embed(0.5, 7), Err(Error::Config(_))));
    }

    #[test]
    fn injective_and_bounded_on_grid() {
        let embs: Vec<Vec<f64>> = (0..1000).map(|i| sinusoidal_embed(i as f64 / 999.0, 32).unwrap()).collect();
        for e in &embs {
            assert_eq!(e.len(), 32);
            assert!(e.iter().all(|v| v.abs() <= 1.0));
        }
        // exhaustive pairwise check
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                let d: f64 = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(d > 1e-12, "t grid points {i} and {j} collide");
            }
        }
    }
}
