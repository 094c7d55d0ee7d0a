//! Parameter-owning layer handles. Each layer registers its tensors in a
//! [`Params`] collection under a name prefix and replays them into a
//! [`Graph`] on every forward pass.

use rand::Rng;

use super::graph::{ConvGeometry, Graph, Var};
use super::params::{kaiming_uniform, ParamId, Params};
use super::tensor::Tensor;
use crate::error::Result;

/// Dense map over channels, applied independently to every frame.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(params: &mut Params, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Self> {
        let w = params.add(format!("{name}.weight"), kaiming_uniform(&[d_out, d_in], d_in, rng))?;
        let b = params.add(format!("{name}.bias"), Tensor::zeros(&[d_out]))?;
        Ok(Self { w, b })
    }

    /// Registers a layer with explicitly provided weights.
    pub fn with_weights(params: &mut Params, name: &str, weight: Tensor, bias: Tensor) -> Result<Self> {
        let w = params.add(format!("{name}.weight"), weight)?;
        let b = params.add(format!("{name}.bias"), bias)?;
        Ok(Self { w, b })
    }

    pub fn from_names(params: &Params, name: &str) -> Option<Self> {
        Some(Self { w: params.id(&format!("{name}.weight"))?, b: params.id(&format!("{name}.bias"))? })
    }

    pub fn forward(&self, g: &mut Graph, params: &Params, x: Var) -> Result<Var> {
        let w = g.param(params, self.w)?;
        let b = g.param(params, self.b)?;
        g.linear(x, w, Some(b))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub geo: ConvGeometry,
}

impl Conv1d {
    pub fn new(
        params: &mut Params,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        geo: ConvGeometry,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = params.add(format!("{name}.weight"), kaiming_uniform(&[c_out, c_in, kernel], c_in * kernel, rng))?;
        let b = params.add(format!("{name}.bias"), Tensor::zeros(&[c_out]))?;
        Ok(Self { w, b, geo })
    }

    pub fn from_names(params: &Params, name: &str, geo: ConvGeometry) -> Option<Self> {
        Some(Self { w: params.id(&format!("{name}.weight"))?, b: params.id(&format!("{name}.bias"))?, geo })
    }

    pub fn forward(&self, g: &mut Graph, params: &Params, x: Var) -> Result<Var> {
        let w = g.param(params, self.w)?;
        let b = g.param(params, self.b)?;
        let y = g.conv1d(x, w, self.geo)?;
        g.add_bias(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut Params,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        // each output sample sees c_in * kernel / stride inputs
        let fan_in = (c_in * kernel / stride).max(1);
        let w = params.add(format!("{name}.weight"), kaiming_uniform(&[c_in, c_out, kernel], fan_in, rng))?;
        let b = params.add(format!("{name}.bias"), Tensor::zeros(&[c_out]))?;
        Ok(Self { w, b, stride, padding })
    }

    pub fn from_names(params: &Params, name: &str, stride: usize, padding: usize) -> Option<Self> {
        Some(Self { w: params.id(&format!("{name}.weight"))?, b: params.id(&format!("{name}.bias"))?, stride, padding })
    }

    pub fn forward(&self, g: &mut Graph, params: &Params, x: Var) -> Result<Var> {
        let w = g.param(params, self.w)?;
        let b = g.param(params, self.b)?;
        let y = g.conv_transpose1d(x, w, self.stride, self.padding)?;
        g.add_bias(y, b)
    }
}
