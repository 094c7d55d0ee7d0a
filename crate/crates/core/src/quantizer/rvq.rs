//! Residual vector quantization.
//!
//! Each stage quantizes the residual left by the previous stages with its
//! own codebook. Trained codebooks reserve index 0 for the zero vector so a
//! stage can opt out of contributing.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Rvq {
    pub dim: usize,
    /// One flat `size x dim` codebook per stage.
    codebooks: Vec<Vec<f64>>,
    pub codebook_size: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Rvq {
    /// Builds from explicit codebooks, `stages x size x dim`.
    pub fn from_codebooks(codebooks: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let Some(first) = codebooks.first() else {
            bail!(Config, "RVQ needs at least one stage");
        };
        let size = first.len();
        let dim = first.first().map_or(0, Vec::len);
        if size == 0 || dim == 0 {
            bail!(Config, "RVQ codebooks must be non-empty");
        }
        let mut flat = Vec::with_capacity(codebooks.len());
        for (s, book) in codebooks.iter().enumerate() {
            if book.len() != size || book.iter().any(|c| c.len() != dim) {
                bail!(Shape, "stage {s} codebook does not match {size} x {dim}");
            }
            if book.iter().flatten().any(|v| !v.is_finite()) {
                bail!(Data, "stage {s} codebook holds non-finite values");
            }
            flat.push(book.concat());
        }
        Ok(Self { dim, codebooks: flat, codebook_size: size })
    }

    pub fn n_stages(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codeword(&self, stage: usize, index: usize) -> &[f64] {
        &self.codebooks[stage][index * self.dim..(index + 1) * self.dim]
    }

    pub fn bits_per_frame(&self) -> usize {
        self.n_stages() * super::sq::bits_for_levels(self.codebook_size)
    }

    /// Greedy nearest-codeword search on the running residual.
    pub fn quantize(&self, v: &[f64]) -> Result<Vec<u32>> {
        self.quantize_stages(v, self.n_stages())
    }

    /// Quantizes with only the first `stages` stages.
    pub fn quantize_stages(&self, v: &[f64], stages: usize) -> Result<Vec<u32>> {
        if v.len() != self.dim {
            bail!(Shape, "vector has {} values, RVQ expects {}", v.len(), self.dim);
        }
        if v.iter().any(|x| !x.is_finite()) {
            bail!(Data, "non-finite value in RVQ input");
        }
        if stages > self.n_stages() {
            bail!(Config, "{stages} stages requested, RVQ has {}", self.n_stages());
        }
        let mut residual = v.to_vec();
        let mut out = Vec::with_capacity(stages);
        for s in 0..stages {
            let best = self.nearest(s, &residual);
            for (r, c) in residual.iter_mut().zip(self.codeword(s, best)) {
                *r -= c;
            }
            out.push(best as u32);
        }
        Ok(out)
    }

    fn nearest(&self, stage: usize, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.codebook_size {
            let d = sq_dist(self.codeword(stage, k), v);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Sum of the selected codewords; fewer indices than stages is allowed.
    pub fn dequantize(&self, indices: &[u32]) -> Result<Vec<f64>> {
        if indices.len() > self.n_stages() {
            bail!(Shape, "{} indices for {} stages", indices.len(), self.n_stages());
        }
        let mut out = vec![0.0; self.dim];
        for (s, &i) in indices.iter().enumerate() {
            if i as usize >= self.codebook_size {
                bail!(Data, "index {i} out of range for codebook of {}", self.codebook_size);
            }
            for (o, c) in out.iter_mut().zip(self.codeword(s, i as usize)) {
                *o += c;
            }
        }
        Ok(out)
    }

    /// Trains `stages` codebooks by k-means on successive residuals.
    /// Index 0 of every stage is pinned to the zero vector.
    pub fn train(data: &[Vec<f64>], stages: usize, codebook_size: usize, iterations: usize, seed: u64) -> Result<Self> {
        if stages == 0 || codebook_size < 2 {
            bail!(Config, "RVQ training needs >= 1 stage and >= 2 codewords");
        }
        let Some(dim) = data.first().map(Vec::len) else {
            bail!(Data, "no training vectors");
        };
        if dim == 0 || data.iter().any(|v| v.len() != dim) {
            bail!(Shape, "training vectors must share a non-zero dimension");
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            bail!(Data, "non-finite training vector");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut residual: Vec<Vec<f64>> = data.to_vec();
        let mut books = Vec::with_capacity(stages);
        for _ in 0..stages {
            let book = kmeans_with_zero(&residual, codebook_size, iterations, &mut rng);
            for r in &mut residual {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, c) in book.iter().enumerate() {
                    let d = sq_dist(c, r);
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                for (x, c) in r.iter_mut().zip(&book[best]) {
                    *x -= c;
                }
            }
            books.push(book);
        }
        Self::from_codebooks(books)
    }
}

fn kmeans_with_zero(data: &[Vec<f64>], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = data[0].len();
    let mut centers = vec![vec![0.0; dim]];
    let picks = sample(rng, data.len(), (k - 1).min(data.len()));
    centers.extend(picks.iter().map(|i| data[i].clone()));
    while centers.len() < k {
        // fewer vectors than codewords: pad with zeros, never selected first
        centers.push(vec![0.0; dim]);
    }
    let mut assign = vec![0usize; data.len()];
    for _ in 0..iterations {
        for (a, v) in assign.iter_mut().zip(data) {
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = sq_dist(c, v);
                if d < best_d {
                    best_d = d;
                    *a = j;
                }
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, v) in assign.iter().zip(data) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for j in 1..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::Rng;

    fn sign_book() -> Rvq {
        Rvq::from_codebooks(vec![vec![vec![-1.0], vec![1.0]], vec![vec![-0.5], vec![0.5]]]).unwrap()
    }

    #[test]
    fn greedy_two_stage_example() {
        let q = sign_book();
        assert_eq!(q.quantize(&[0.7]).unwrap(), vec![1, 0]);
        assert_eq!(q.dequantize(&[1, 0]).unwrap(), vec![0.5]);
        assert_eq!(q.bits_per_frame(), 2);
    }

    #[test]
    fn codeword_sums_round_trip() {
        let q = sign_book();
        for a in 0..2 {
            for b in 0..2 {
                let v = q.dequantize(&[a, b]).unwrap();
                assert_eq!(q.quantize(&v).unwrap(), vec![a, b]);
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        let q = sign_book();
        assert!(matches!(q.dequantize(&[2]), Err(Error::Data(_))));
        assert!(matches!(q.quantize(&[0.0, 1.0]), Err(Error::Shape(_))));
        assert!(matches!(Rvq::from_codebooks(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn trained_codebooks_reserve_zero_and_reduce_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f64>> = (0..400).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let q = Rvq::train(&data, 3, 16, 15, 7).unwrap();
        for s in 0..3 {
            assert!(q.codeword(s, 0).iter().all(|&v| v == 0.0));
        }
        let err = |stages: usize| -> f64 {
            data.iter()
                .map(|v| sq_dist(v, &q.dequantize(&q.quantize_stages(v, stages).unwrap()).unwrap()))
                .sum::<f64>()
        };
        let (e1, e2, e3) = (err(1), err(2), err(3));
        assert!(e2 <= e1 && e3 <= e2, "{e1} {e2} {e3}");
    }
}
