//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, Params};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Models with more scalars than this are checked on a random subset of
    /// exactly this many coordinates.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, max_coords: 256, seed: 0 }
    }
}

fn eval<F>(params: &Params, loss_fn: &F) -> Result<f64>
where
    F: Fn(&Params, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = loss_fn(params, &mut g)?;
    Ok(g.value(l).item())
}

/// Largest relative error `|a - n| / max(|a|, |n|, 1e-8)` between analytic
/// and numeric derivatives over the checked coordinates. `params` is left
/// unchanged except for its gradient buffers.
pub fn grad_check<F>(params: &mut Params, loss_fn: F, opts: GradCheckOptions) -> Result<f64>
where
    F: Fn(&Params, &mut Graph) -> Result<Var>,
{
    let mut coords: Vec<(ParamId, usize)> =
        params.ids().flat_map(|id| (0..params.value(id).len()).map(move |j| (id, j))).collect();
    if coords.is_empty() {
        return Ok(0.0);
    }
    if coords.len() > opts.max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked: Vec<usize> = sample(&mut rng, coords.len(), opts.max_coords).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    params.zero_grad();
    {
        let mut g = Graph::new();
        let l = loss_fn(params, &mut g)?;
        g.backward(l, params)?;
    }

    let mut worst = 0.0f64;
    for (id, j) in coords {
        let analytic = params.grad(id).data()[j];
        let orig = params.value(id).data()[j];
        params.value_mut(id).data_mut()[j] = orig + opts.eps;
        let up = eval(params, &loss_fn)?;
        params.value_mut(id).data_mut()[j] = orig - opts.eps;
        let down = eval(params, &loss_fn)?;
        params.value_mut(id).data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * opts.eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
