//! Residual conv post-net applied to normalized mels before phase
//! reconstruction. The output layer starts at zero, so an untrained
//! post-net is the identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Activation, Conv1d, ConvGeometry, Graph, Params, Tensor, Var};

pub const POSTNET_HIDDEN: usize = 64;
pub const POSTNET_KERNEL: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct PostNet {
    conv1: Conv1d,
    conv2: Conv1d,
}

impl PostNet {
    pub fn new(params: &mut Params, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geo = ConvGeometry::same(POSTNET_KERNEL, 1);
        let conv1 = Conv1d::new(params, "post.conv1", channels, POSTNET_HIDDEN, POSTNET_KERNEL, geo, &mut rng)?;
        let conv2 = Conv1d::new(params, "post.conv2", POSTNET_HIDDEN, channels, POSTNET_KERNEL, geo, &mut rng)?;
        params.value_mut(conv2.w).fill(0.0);
        Ok(Self { conv1, conv2 })
    }

    pub fn from_params(params: &Params) -> Result<Self> {
        let geo = ConvGeometry::same(POSTNET_KERNEL, 1);
        let get = |n: &str| Conv1d::from_names(params, n, geo).ok_or_else(|| crate::Error::Config(format!("decoder checkpoint lacks {n}")));
        Ok(Self { conv1: get("post.conv1")?, conv2: get("post.conv2")? })
    }

    pub fn forward(&self, g: &mut Graph, params: &Params, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, params, x)?;
        let h = g.activation(h, Activation::Silu)?;
        let h = self.conv2.forward(g, params, h)?;
        g.add(x, h)
    }

    pub fn apply(&self, params: &Params, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.input(x.clone())?;
        let y = self.forward(&mut g, params, xv)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckOptions};

    #[test]
    fn starts_as_identity() {
        let mut p = Params::new();
        let net = PostNet::new(&mut p, 4, 0).unwrap();
        let x = Tensor::matrix(4, 3, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        assert_eq!(net.apply(&p, &x).unwrap(), x);
    }

    #[test]
    fn gradients() {
        let mut p = Params::new();
        let net = PostNet::new(&mut p, 3, 1).unwrap();
        // move off the zero init so every path carries gradient
        let id = p.id("post.conv2.weight").unwrap();
        p.value_mut(id).data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = ((i * 7 % 11) as f64 - 5.0) * 0.02);
        let x = Tensor::matrix(3, 6, (0..18).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.3).collect()).unwrap();
        let err = grad_check(
            &mut p,
            |p, g| {
                let xv = g.input(x.clone())?;
                let y = net.forward(g, p, xv)?;
                let s = g.square(y)?;
                g.mean(s)
            },
            GradCheckOptions { max_coords: 250, ..Default::default() },
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
