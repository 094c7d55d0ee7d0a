//! Finite-difference checks for every layer type and graph op at f64.

use dnsc::codec::denoiser::{DenoiserNet, DenoiserSpec};
use dnsc::codec::postnet::PostNet;
use dnsc::codec::LatentCodec;
use dnsc::diffusion::standard_normal;
use dnsc::nn::{grad_check, Activation, Conv1d, ConvGeometry, ConvTranspose1d, GradCheckOptions, Graph, Linear, Params, Tensor, Var};
use dnsc::quantizer::{BitrateSpec, ScalarQuantizer};
use dnsc::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const COORDS: usize = 200;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    standard_normal(shape, &mut rng(seed))
}

fn opts() -> GradCheckOptions {
    GradCheckOptions { max_coords: COORDS, ..Default::default() }
}

fn check(params: &mut Params, f: impl Fn(&Params, &mut Graph) -> Result<Var>) -> f64 {
    assert!(params.num_scalars() >= COORDS, "model too small to check {COORDS} coordinates");
    grad_check(params, f, opts()).unwrap()
}

#[test]
fn single_linear_with_squared_loss() {
    let mut params = Params::new();
    let lin = Linear::new(&mut params, "lin", 20, 12, &mut rng(1)).unwrap();
    let (x, y) = (randn(&[20, 3], 2), randn(&[12, 3], 3));
    let err = check(&mut params, |p, g| {
        let (xv, yv) = (g.input(x.clone())?, g.input(y.clone())?);
        let out = lin.forward(g, p, xv)?;
        g.mse(out, yv)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn conv_stack_with_each_smooth_activation() {
    for (i, act) in [Activation::Silu, Activation::Elu, Activation::Tanh].into_iter().enumerate() {
        let mut params = Params::new();
        let mut r = rng(10 + i as u64);
        let c1 = Conv1d::new(&mut params, "c1", 4, 8, 3, ConvGeometry::same(3, 1), &mut r).unwrap();
        let c2 = Conv1d::new(&mut params, "c2", 8, 6, 3, ConvGeometry::same(3, 2), &mut r).unwrap();
        let c3 = Conv1d::new(&mut params, "c3", 6, 5, 4, ConvGeometry::strided(2, 1), &mut r).unwrap();
        let x = randn(&[4, 16], 20);
        let y = randn(&[5, 8], 21);
        let err = check(&mut params, |p, g| {
            let xv = g.input(x.clone())?;
            let h = c1.forward(g, p, xv)?;
            let h = g.activation(h, act)?;
            let h = c2.forward(g, p, h)?;
            let h = g.activation(h, act)?;
            let out = c3.forward(g, p, h)?;
            let yv = g.input(y.clone())?;
            g.mse(out, yv)
        });
        assert!(err < TOL, "{act:?}: {err}");
    }
}

#[test]
fn relu_away_from_the_kink() {
    let mut params = Params::new();
    let lin = Linear::new(&mut params, "lin", 16, 16, &mut rng(4)).unwrap();
    let x = randn(&[16, 2], 5);
    // finite differences straddling zero are not derivatives; keep the
    // pre-activations clear of it
    let ok = {
        let mut g = Graph::new();
        let xv = g.input(x.clone()).unwrap();
        let h = lin.forward(&mut g, &params, xv).unwrap();
        g.value(h).data().iter().all(|v| v.abs() > 1e-3)
    };
    assert!(ok);
    let err = check(&mut params, |p, g| {
        let xv = g.input(x.clone())?;
        let h = lin.forward(g, p, xv)?;
        let h = g.activation(h, Activation::Relu)?;
        let s = g.square(h)?;
        g.mean(s)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn transposed_conv() {
    let mut params = Params::new();
    let ct = ConvTranspose1d::new(&mut params, "ct", 6, 5, 8, 4, 2, &mut rng(6)).unwrap();
    let x = randn(&[6, 5], 7);
    let y = randn(&[5, 20], 8);
    let err = check(&mut params, |p, g| {
        let xv = g.input(x.clone())?;
        let out = ct.forward(g, p, xv)?;
        let yv = g.input(y.clone())?;
        g.mse(out, yv)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn elementwise_and_shape_ops() {
    let mut params = Params::new();
    let a = params.add("a", randn(&[6, 20], 30)).unwrap();
    let b = params.add("b", randn(&[6, 20], 31)).unwrap();
    let c = params.add("c", randn(&[4, 5], 32)).unwrap();
    let w = params.add("w", randn(&[3, 10], 33)).unwrap();
    let target = randn(&[3, 20], 34);
    let err = check(&mut params, |p, g| {
        let (av, bv, cv, wv) = (g.param(p, a)?, g.param(p, b)?, g.param(p, c)?, g.param(p, w)?);
        let m = g.mul(av, bv)?;
        let d = g.sub(m, bv)?;
        let s = g.scale(d, 0.7)?;
        let r = g.repeat_cols(cv, 4)?;
        let cat = g.concat_rows(s, r)?;
        let h = g.matmul(wv, cat)?;
        let cl = g.clamp(h, -50.0, 50.0)?;
        let t = g.input(target.clone())?;
        let l2 = g.mse(cl, t)?;
        let sum = g.sum(av)?;
        let tiny = g.scale(sum, 1e-3)?;
        g.add(l2, tiny)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn l1_l2_loss_away_from_ties() {
    let mut params = Params::new();
    let a = params.add("a", randn(&[10, 25], 40)).unwrap();
    let target = randn(&[10, 25], 41);
    let err = check(&mut params, |p, g| {
        let av = g.param(p, a)?;
        let t = g.input(target.clone())?;
        g.l1_l2(av, t)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn scalar_quantizer_continuous_path() {
    let mut params = Params::new();
    let sq = ScalarQuantizer::new(&mut params, "sq", 24, 8, 8, &mut rng(50)).unwrap();
    let x = randn(&[24, 6], 51).map(|v| 0.5 * v);
    let y = randn(&[24, 6], 52);
    let err = check(&mut params, |p, g| {
        let xv = g.input(x.clone())?;
        let out = sq.forward_continuous(g, p, xv)?;
        let yv = g.input(y.clone())?;
        g.mse(out, yv)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn post_net() {
    let mut params = Params::new();
    let net = PostNet::new(&mut params, 80, 60).unwrap();
    // move the zero-initialized output off zero so both convs are live
    let id = params.id("post.conv2.weight").unwrap();
    let shape = params.value(id).shape().to_vec();
    *params.value_mut(id) = randn(&shape, 61).map(|v| 0.05 * v);
    let x = randn(&[80, 6], 62);
    let y = randn(&[80, 6], 63);
    let err = check(&mut params, |p, g| {
        let xv = g.input(x.clone())?;
        let out = net.forward(g, p, xv)?;
        let yv = g.input(y.clone())?;
        g.mse(out, yv)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn latent_codec_reconstruction_loss() {
    let codec = LatentCodec::new(BitrateSpec::new(3000, 16000, 256).unwrap(), 70).unwrap();
    let x: Vec<f64> = randn(&[1, 512], 71).data().iter().map(|v| 0.1 * v).collect();
    let mut params = codec.params.clone();
    let err = check(&mut params, |p, g| codec.loss_graph(g, p, &x, false, &mut rng(0)));
    assert!(err < TOL, "{err}");
}

fn randomized_denoiser(spec: DenoiserSpec, seed: u64) -> (DenoiserNet, Params) {
    let mut params = Params::new();
    let net = DenoiserNet::new(&mut params, spec, seed).unwrap();
    for name in ["den.out.weight", "den.skip.weight"] {
        let id = params.id(name).unwrap();
        let shape = params.value(id).shape().to_vec();
        *params.value_mut(id) = randn(&shape, seed + 1).map(|v| 0.1 * v);
    }
    (net, params)
}

#[test]
fn full_denoiser_for_each_output_shape() {
    let specs = [
        DenoiserSpec { out_channels: 80, cond_channels: 80, upsample: 1 },
        DenoiserSpec { out_channels: 16, cond_channels: 80, upsample: 16 },
    ];
    for (i, spec) in specs.into_iter().enumerate() {
        let (net, mut params) = randomized_denoiser(spec, 80 + i as u64);
        let frames = 2;
        let x = randn(&[spec.out_channels, frames * spec.upsample], 90);
        let z = randn(&[spec.cond_channels, frames], 91);
        let y = randn(&[spec.out_channels, frames * spec.upsample], 92);
        let err = check(&mut params, |p, g| {
            let (xv, zv, yv) = (g.input(x.clone())?, g.input(z.clone())?, g.input(y.clone())?);
            let out = net.forward(g, p, xv, zv, 0.37)?;
            g.mse(out, yv)
        });
        assert!(err < TOL, "{spec:?}: {err}");
    }
}
