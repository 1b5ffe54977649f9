//! Central finite-difference checks of the analytic backward passes.
//!
//! The numeric side runs on naive `f64` re-implementations of every layer,
//! so probe differences are not drowned by `f32` rounding. Each check also
//! reports how far the production forward pass strays from that reference.
//!
//! Layer checks drive a kernel with a random linear read-out
//! `L = sum(r * y)`, so the output gradient is `r`, and probe every input and
//! parameter coordinate. The model check uses the training loss on a
//! shrunken network and probes parameters drawn at random.
//!
//! Probes whose `+h` and `-h` runs land on different sides of a ReLU or
//! max-pool switch measure a one-sided slope; they are skipped and counted.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_model_with, model_backward, model_forward, LayerSpec, Mode, ModelParams, Variant};
use crate::kernels::{
    conv3d_backward, conv3d_forward, deconv3d_backward, deconv3d_forward, dense_backward, dense_forward, dropout,
    dropout_backward, maxpool3d_backward, maxpool3d_forward, upsample3d_backward, upsample3d_forward, Activation,
    Conv3DKernel, LayerCache, Padding,
};
use crate::train::mse_loss;
use crate::{Result, Tensor};

/// Probe half-width.
pub const EPSILON: f64 = 1e-3;
/// Acceptance bound for the per-layer checks.
pub const LAYER_TOLERANCE: f64 = 1e-3;
/// Acceptance bound for the model check.
pub const MODEL_TOLERANCE: f64 = 1e-2;
/// Partials smaller than this in magnitude are compared absolutely.
pub const ABSOLUTE_FLOOR: f64 = 1e-6;
/// Largest accepted gap between the production and reference forward passes.
pub const FORWARD_TOLERANCE: f64 = 1e-4;
/// Initialisations tried before a model check gives up on a live network.
const MAX_DRAWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    /// Checked probes where either gradient exceeds the absolute floor.
    pub nonzero: usize,
    pub max_rel_error: f64,
    pub forward_gap: f64,
}

impl GradCheck {
    fn new(name: impl Into<String>) -> Self {
        GradCheck {
            name: name.into(),
            checked: 0,
            skipped: 0,
            nonzero: 0,
            max_rel_error: 0.0,
            forward_gap: 0.0,
        }
    }

    fn record(&mut self, analytic: f32, numeric: Option<f64>) {
        match numeric {
            Some(n) => {
                self.checked += 1;
                if (analytic as f64).abs().max(n.abs()) > ABSOLUTE_FLOOR {
                    self.nonzero += 1;
                }
                self.max_rel_error = self.max_rel_error.max(relative_error(analytic as f64, n));
            }
            None => self.skipped += 1,
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0
            && self.nonzero > 0
            && self.max_rel_error <= tolerance
            && self.forward_gap <= FORWARD_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABSOLUTE_FLOOR)
}

/// Row-major `f64` array for the reference passes.
#[derive(Debug, Clone)]
struct Field {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Field {
    fn zeros(shape: &[usize]) -> Self {
        Field {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn dims5(&self) -> [usize; 5] {
        match *self.shape {
            [b, t, h, w, c] => [b, t, h, w, c],
            [b, h, w, c] => [b, 1, h, w, c],
            _ => panic!("reference field {:?} is not a video batch", self.shape),
        }
    }

    /// Same rank as `self` with the spatio-temporal extents replaced.
    fn reshaped(&self, extents: [usize; 3], channels: usize) -> Self {
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape[r - 1] = channels;
        if r == 5 {
            shape[1..4].copy_from_slice(&extents);
        } else {
            shape[1..3].copy_from_slice(&extents[1..]);
        }
        Field::zeros(&shape)
    }
}

impl From<&Tensor> for Field {
    fn from(t: &Tensor) -> Self {
        Field {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

fn max_gap(a: &Tensor, b: &Field) -> f64 {
    if a.shape() != b.shape.as_slice() {
        return f64::INFINITY;
    }
    a.data().iter().zip(&b.data).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

/// Applies `activation`, appending ReLU signs to `pattern`.
fn activate(pre: &mut [f64], activation: Activation, pattern: &mut Vec<u32>) {
    for v in pre {
        match activation {
            Activation::Relu => {
                pattern.push(u32::from(*v > 0.0));
                *v = v.max(0.0);
            }
            Activation::Tanh => *v = libm::tanh(*v),
            Activation::Linear => {}
        }
    }
}

/// Per-axis output extent and low-side padding of a same-padded convolution
/// over a `big` field.
fn same_geometry(big: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> ([usize; 3], [usize; 3]) {
    let mut out = [0; 3];
    let mut pad = [0; 3];
    for a in 0..3 {
        out[a] = big[a].div_ceil(stride[a]);
        pad[a] = ((out[a] - 1) * stride[a] + kernel[a]).saturating_sub(big[a]) / 2;
    }
    (out, pad)
}

/// Visits every `(small voxel, tap, big voxel)` triple of a same-padded
/// convolution that reads `big` and writes `small`.
fn for_each_tap(big: [usize; 3], kernel: [usize; 3], stride: [usize; 3], mut f: impl FnMut(usize, usize, usize)) {
    let (small, pad) = same_geometry(big, kernel, stride);
    for ot in 0..small[0] {
        for oy in 0..small[1] {
            for ox in 0..small[2] {
                let o = (ot * small[1] + oy) * small[2] + ox;
                for s in 0..kernel[0] {
                    for p in 0..kernel[1] {
                        for q in 0..kernel[2] {
                            let it = (ot * stride[0] + s).wrapping_sub(pad[0]);
                            let iy = (oy * stride[1] + p).wrapping_sub(pad[1]);
                            let ix = (ox * stride[2] + q).wrapping_sub(pad[2]);
                            if it < big[0] && iy < big[1] && ix < big[2] {
                                let k = (s * kernel[1] + p) * kernel[2] + q;
                                f(o, k, (it * big[1] + iy) * big[2] + ix);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution (`transposed == false`, weights `(out, in, S, P, Q)`) or its
/// adjoint (`transposed == true`, weights `(in, out, S, P, Q)`), plus bias.
fn reference_conv(x: &Field, w: &Field, bias: &Field, stride: [usize; 3], transposed: bool) -> Field {
    let [b, t, h, wd, cx] = x.dims5();
    let (wa, wb) = (w.shape[0], w.shape[1]);
    let kernel = [w.shape[2], w.shape[3], w.shape[4]];
    let taps: usize = kernel.iter().product();
    let weight = |a: usize, c: usize, k: usize| w.data[(a * wb + c) * taps + k];
    let (big, cy) = if transposed {
        ([t * stride[0], h * stride[1], wd * stride[2]], wb)
    } else {
        ([t, h, wd], wa)
    };
    let out_ext = if transposed { big } else { same_geometry(big, kernel, stride).0 };
    let in_len = t * h * wd * cx;
    let out_len = out_ext.iter().product::<usize>() * cy;
    let mut y = x.reshaped(out_ext, cy);
    for n in 0..b {
        let xs = &x.data[n * in_len..(n + 1) * in_len];
        let ys = &mut y.data[n * out_len..(n + 1) * out_len];
        for_each_tap(big, kernel, stride, |small_v, k, big_v| {
            if transposed {
                for ci in 0..cx {
                    for co in 0..cy {
                        ys[big_v * cy + co] += weight(ci, co, k) * xs[small_v * cx + ci];
                    }
                }
            } else {
                for co in 0..cy {
                    for ci in 0..cx {
                        ys[small_v * cy + co] += weight(co, ci, k) * xs[big_v * cx + ci];
                    }
                }
            }
        });
        for v in ys.chunks_exact_mut(cy) {
            for (o, bv) in v.iter_mut().zip(&bias.data) {
                *o += bv;
            }
        }
    }
    y
}

fn reference_pool(x: &Field, window: [usize; 3], pattern: &mut Vec<u32>) -> Field {
    let [b, t, h, w, c] = x.dims5();
    let inp = [t, h, w];
    let mut out = [0; 3];
    let mut lo = [0; 3];
    for a in 0..3 {
        out[a] = inp[a].div_ceil(window[a]);
        lo[a] = (out[a] * window[a] - inp[a]) / 2;
    }
    let mut y = x.reshaped(out, c);
    let mut o = 0;
    for n in 0..b {
        for ot in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    for ch in 0..c {
                        let mut best = (f64::NEG_INFINITY, usize::MAX);
                        for s in 0..window[0] {
                            for p in 0..window[1] {
                                for q in 0..window[2] {
                                    let it = (ot * window[0] + s).wrapping_sub(lo[0]);
                                    let iy = (oy * window[1] + p).wrapping_sub(lo[1]);
                                    let ix = (ox * window[2] + q).wrapping_sub(lo[2]);
                                    if it < t && iy < h && ix < w {
                                        let idx = (((n * t + it) * h + iy) * w + ix) * c + ch;
                                        if best.1 == usize::MAX || x.data[idx] > best.0 {
                                            best = (x.data[idx], idx);
                                        }
                                    }
                                }
                            }
                        }
                        y.data[o] = best.0;
                        pattern.push(best.1 as u32);
                        o += 1;
                    }
                }
            }
        }
    }
    y
}

fn reference_upsample(x: &Field, factor: [usize; 3]) -> Field {
    let [b, t, h, w, c] = x.dims5();
    let out = [t * factor[0], h * factor[1], w * factor[2]];
    let mut y = x.reshaped(out, c);
    let mut o = 0;
    for n in 0..b {
        for ot in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    let src = (((n * t + ot / factor[0]) * h + oy / factor[1]) * w + ox / factor[2]) * c;
                    y.data[o..o + c].copy_from_slice(&x.data[src..src + c]);
                    o += c;
                }
            }
        }
    }
    y
}

fn reference_dense(x: &Field, w: &Field, bias: &Field) -> Field {
    let (b, n) = (x.shape[0], x.shape[1]);
    let m = w.shape[1];
    let mut y = Field::zeros(&[b, m]);
    for r in 0..b {
        for j in 0..m {
            y.data[r * m + j] = bias.data[j] + (0..n).map(|i| x.data[r * n + i] * w.data[i * m + j]).sum::<f64>();
        }
    }
    y
}

/// Runs `f` at `p + h` and `p - h` for one coordinate and returns the
/// central difference, or `None` when the two runs straddle a kink.
fn central_difference(
    fields: &mut [Field],
    slot: usize,
    index: usize,
    mut f: impl FnMut(&[Field]) -> (f64, Vec<u32>),
) -> Option<f64> {
    let original = fields[slot].data[index];
    fields[slot].data[index] = original + EPSILON;
    let (lp, pp) = f(fields);
    fields[slot].data[index] = original - EPSILON;
    let (lm, pm) = f(fields);
    fields[slot].data[index] = original;
    (pp == pm).then(|| (lp - lm) / (2.0 * EPSILON))
}

type Forward<'a> = dyn Fn(&[Tensor]) -> Result<(Tensor, LayerCache)> + 'a;
type Backward<'a> = dyn Fn(&Tensor, &LayerCache, &[Tensor]) -> Result<Vec<Tensor>> + 'a;
type Reference<'a> = dyn Fn(&[Field], &mut Vec<u32>) -> Field + 'a;

/// Checks every coordinate of every tensor in `tensors` (input first, then
/// any parameters) against the analytic gradients from `backward`.
fn check_op(
    name: &str,
    tensors: Vec<Tensor>,
    forward: &Forward<'_>,
    backward: &Backward<'_>,
    reference: &Reference<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheck> {
    let (y, cache) = forward(&tensors)?;
    let readout = Tensor::from_fn(y.shape(), |_| rng.random_range(-1.0..1.0));
    let r = Field::from(&readout);
    let analytic = backward(&readout, &cache, &tensors)?;
    let mut fields: Vec<Field> = tensors.iter().map(Field::from).collect();

    let mut report = GradCheck::new(name);
    report.forward_gap = max_gap(&y, &reference(&fields, &mut Vec::new()));
    for (slot, grads) in analytic.iter().enumerate() {
        for index in 0..fields[slot].data.len() {
            let numeric = central_difference(&mut fields, slot, index, |f| {
                let mut pattern = Vec::new();
                let y = reference(f, &mut pattern);
                (y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum(), pattern)
            });
            report.record(grads.data()[index], numeric);
        }
    }
    Ok(report)
}

fn uniform(shape: &[usize], scale: f32, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Distinct values spaced well beyond `2 * EPSILON`, so no pooling window
/// holds a near tie.
fn spaced(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    Tensor::from_vec(shape, ranks.into_iter().map(|r| r as f32 * 0.01 - n as f32 * 0.005).collect())
        .expect("shape matches length")
}

fn conv_case(
    name: &str,
    transposed: bool,
    input: [usize; 5],
    weights: [usize; 5],
    stride: [usize; 3],
    activation: Activation,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheck> {
    let bias_len = if transposed { weights[1] } else { weights[0] };
    let tensors = vec![
        uniform(&input, 1.0, rng),
        uniform(&weights, 0.4, rng),
        uniform(&[bias_len], 0.2, rng),
    ];
    fn kernel(t: &[Tensor], stride: [usize; 3]) -> Conv3DKernel<'_> {
        Conv3DKernel {
            weights: &t[1],
            bias: &t[2],
            stride,
            padding: Padding::Same,
        }
    }
    let forward = |t: &[Tensor]| {
        if transposed {
            deconv3d_forward(&t[0], &kernel(t, stride), activation)
        } else {
            conv3d_forward(&t[0], &kernel(t, stride), activation)
        }
    };
    let backward = |g: &Tensor, cache: &LayerCache, t: &[Tensor]| {
        let r = if transposed {
            deconv3d_backward(g, cache, &kernel(t, stride))?
        } else {
            conv3d_backward(g, cache, &kernel(t, stride))?
        };
        Ok(vec![r.input, r.weights, r.bias])
    };
    let reference = |f: &[Field], pattern: &mut Vec<u32>| {
        let mut y = reference_conv(&f[0], &f[1], &f[2], stride, transposed);
        activate(&mut y.data, activation, pattern);
        y
    };
    check_op(name, tensors, &forward, &backward, &reference, rng)
}

/// Finite-difference checks for every layer kernel.
pub fn layer_checks(seed: u64) -> Result<Vec<GradCheck>> {
    use Activation::{Linear, Relu, Tanh};
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        conv_case("conv3d gemm tanh", false, [2, 4, 5, 5, 2], [3, 2, 5, 3, 3], [1; 3], Tanh, rng)?,
        conv_case("conv3d gemm relu", false, [1, 4, 5, 4, 3], [4, 3, 5, 3, 3], [1; 3], Relu, rng)?,
        conv_case("conv3d direct tanh", false, [2, 4, 5, 5, 2], [1, 2, 5, 3, 3], [1; 3], Tanh, rng)?,
        conv_case("conv3d direct relu", false, [1, 5, 4, 4, 3], [2, 3, 5, 3, 3], [1; 3], Relu, rng)?,
        conv_case("conv2d", false, [2, 1, 6, 5, 2], [3, 2, 1, 3, 3], [1; 3], Relu, rng)?,
        conv_case("deconv3d stride 2", true, [1, 2, 3, 3, 3], [3, 2, 5, 3, 3], [2; 3], Relu, rng)?,
        conv_case("deconv3d stride 1", true, [2, 3, 4, 4, 2], [2, 1, 5, 3, 3], [1; 3], Tanh, rng)?,
        conv_case("deconv2d stride 2", true, [2, 1, 3, 3, 2], [2, 3, 1, 3, 3], [1, 2, 2], Relu, rng)?,
    ];

    for (name, window) in [("maxpool3d", [2, 2, 2]), ("maxpool2d", [1, 2, 2])] {
        let forward = move |t: &[Tensor]| maxpool3d_forward(&t[0], window, window);
        let backward = |g: &Tensor, c: &LayerCache, _: &[Tensor]| Ok(vec![maxpool3d_backward(g, c)?]);
        let reference = move |f: &[Field], p: &mut Vec<u32>| reference_pool(&f[0], window, p);
        let input = spaced(&[2, 4, 5, 4, 2], rng);
        out.push(check_op(name, vec![input], &forward, &backward, &reference, rng)?);
    }

    for (name, factor) in [("upsample3d", [2, 2, 2]), ("upsample2d", [1, 2, 2])] {
        let forward = move |t: &[Tensor]| upsample3d_forward(&t[0], factor);
        let backward = |g: &Tensor, c: &LayerCache, _: &[Tensor]| Ok(vec![upsample3d_backward(g, c)?]);
        let reference = move |f: &[Field], _: &mut Vec<u32>| reference_upsample(&f[0], factor);
        let input = uniform(&[2, 2, 3, 3, 2], 1.0, rng);
        out.push(check_op(name, vec![input], &forward, &backward, &reference, rng)?);
    }

    for (name, activation) in [("dense tanh", Tanh), ("dense relu", Relu), ("dense linear", Linear)] {
        let forward = move |t: &[Tensor]| dense_forward(&t[0], &t[1], &t[2], activation);
        let backward = |g: &Tensor, c: &LayerCache, t: &[Tensor]| {
            let r = dense_backward(g, c, &t[1])?;
            Ok(vec![r.input, r.weights, r.bias])
        };
        let reference = move |f: &[Field], p: &mut Vec<u32>| {
            let mut y = reference_dense(&f[0], &f[1], &f[2]);
            activate(&mut y.data, activation, p);
            y
        };
        let tensors = vec![
            uniform(&[3, 12], 1.0, rng),
            uniform(&[12, 7], 0.5, rng),
            uniform(&[7], 0.2, rng),
        ];
        out.push(check_op(name, tensors, &forward, &backward, &reference, rng)?);
    }

    let mask_seed: u64 = rng.random();
    let input = uniform(&[2, 3, 4, 4, 2], 1.0, rng);
    let draw = move |x: &Tensor| dropout(x, 0.25, &mut ChaCha8Rng::seed_from_u64(mask_seed), true);
    let LayerCache::Dropout { mask: Some(mask) } = draw(&input)?.1 else {
        unreachable!("training-mode dropout keeps a mask")
    };
    let forward = move |t: &[Tensor]| draw(&t[0]);
    let backward = |g: &Tensor, c: &LayerCache, _: &[Tensor]| Ok(vec![dropout_backward(g, c)?]);
    let reference = |f: &[Field], _: &mut Vec<u32>| {
        let mut y = f[0].clone();
        for (v, &m) in y.data.iter_mut().zip(&mask) {
            *v *= m as f64;
        }
        y
    };
    out.push(check_op("dropout", vec![input], &forward, &backward, &reference, rng)?);

    Ok(out)
}

/// Reference forward pass of a whole model. `params` holds `[w, b]` per
/// parameterised layer in layer order; `masks` the dropout masks in order.
fn reference_model(
    layers: &[LayerSpec],
    params: &[Field],
    masks: &[Vec<f32>],
    x: &Field,
    pattern: &mut Vec<u32>,
) -> Field {
    let mut y = x.clone();
    let (mut p, mut d) = (0, 0);
    for layer in layers {
        let conv = |y: &Field, stride: [usize; 3], transposed: bool, act: Activation, pattern: &mut Vec<u32>| {
            let mut z = reference_conv(y, &params[p], &params[p + 1], stride, transposed);
            activate(&mut z.data, act, pattern);
            z
        };
        y = match *layer {
            LayerSpec::Conv3d { activation, .. } | LayerSpec::Conv2d { activation, .. } => {
                conv(&y, [1; 3], false, activation, pattern)
            }
            LayerSpec::Deconv3d { stride, activation, .. } => conv(&y, stride, true, activation, pattern),
            LayerSpec::Deconv2d { stride, activation, .. } => {
                conv(&y, [1, stride[0], stride[1]], true, activation, pattern)
            }
            LayerSpec::MaxPool3d { window } => reference_pool(&y, window, pattern),
            LayerSpec::MaxPool2d { window } => reference_pool(&y, [1, window[0], window[1]], pattern),
            LayerSpec::UpSample3d { factor } => reference_upsample(&y, factor),
            LayerSpec::UpSample2d { factor } => reference_upsample(&y, [1, factor[0], factor[1]]),
            LayerSpec::Dense { activation, .. } => {
                let mut z = reference_dense(&y, &params[p], &params[p + 1]);
                activate(&mut z.data, activation, pattern);
                z
            }
            LayerSpec::Flatten => {
                let b = y.shape[0];
                y.shape = vec![b, y.data.len() / b];
                y
            }
            LayerSpec::Reshape { ref shape } => {
                let mut s = vec![y.shape[0]];
                s.extend_from_slice(shape);
                y.shape = s;
                y
            }
            LayerSpec::Dropout { .. } => {
                for (v, &m) in y.data.iter_mut().zip(&masks[d]) {
                    *v *= m as f64;
                }
                d += 1;
                y
            }
        };
        if layer.has_params() {
            p += 2;
        }
    }
    y
}

/// Finite-difference check of the whole-model gradient of the MSE loss for a
/// shrunken variant (clip input `(4, 8, 8, 1)` or frame input `(8, 8, 1)`,
/// widths `[4, 4]`), over `samples` parameters drawn at random.
pub fn model_check(variant: Variant, seed: u64, samples: usize) -> Result<GradCheck> {
    let input = if variant.is_spatio_temporal() {
        vec![4, 8, 8, 1]
    } else {
        vec![8, 8, 1]
    };
    let spec = build_model_with(variant, input.clone(), [4, 4])?;
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut batch = vec![2];
    batch.extend_from_slice(&input);

    // A draw whose ReLU bottleneck is dead has an all-zero gradient almost
    // everywhere and checks nothing; redraw a bounded number of times.
    let mut attempt = 0;
    let (params, x, y, caches, grads) = loop {
        let params = ModelParams::init(&spec, rng);
        let x = uniform(&batch, 1.0, rng);
        let dropout_seed: u64 = rng.random();
        let (y, caches) =
            model_forward(&spec, &params, &x, Mode::Train(&mut ChaCha8Rng::seed_from_u64(dropout_seed)))?;
        let (_, grad_out) = mse_loss(&x, &y)?;
        let grads = model_backward(&spec, &params, &caches, &grad_out)?;
        let (live, total) = grads
            .iter()
            .flat_map(|(_, g)| g.weights.data().iter().chain(g.bias.data()))
            .fold((0, 0), |(l, t), v| (l + usize::from(v.abs() as f64 > ABSOLUTE_FLOOR), t + 1));
        attempt += 1;
        if live * 4 >= total || attempt == MAX_DRAWS {
            break (params, x, y, caches, grads);
        }
    };
    let masks: Vec<Vec<f32>> = caches
        .iter()
        .filter_map(|c| match c {
            LayerCache::Dropout { mask: Some(m) } => Some(m.clone()),
            _ => None,
        })
        .collect();

    let mut fields: Vec<Field> = params
        .iter()
        .flat_map(|(_, p)| [Field::from(&p.weights), Field::from(&p.bias)])
        .collect();
    let analytic: Vec<&Tensor> = grads.iter().flat_map(|(_, g)| [&g.weights, &g.bias]).collect();
    let xf = Field::from(&x);
    let loss = |f: &[Field], pattern: &mut Vec<u32>| -> f64 {
        let y = reference_model(spec.layers(), f, &masks, &xf, pattern);
        let sq: f64 = y.data.iter().zip(&xf.data).map(|(a, b)| (a - b) * (a - b)).sum();
        sq / batch[0] as f64
    };

    let mut report = GradCheck::new(alloc::format!("{} end-to-end", variant.name()));
    report.forward_gap = max_gap(&y, &reference_model(spec.layers(), &fields, &masks, &xf, &mut Vec::new()));

    let mut coords: Vec<(usize, usize)> = fields
        .iter()
        .enumerate()
        .flat_map(|(slot, f)| (0..f.data.len()).map(move |i| (slot, i)))
        .collect();
    coords.shuffle(rng);
    for (slot, index) in coords {
        if report.checked == samples {
            break;
        }
        let numeric = central_difference(&mut fields, slot, index, |f| {
            let mut pattern = Vec::new();
            (loss(f, &mut pattern), pattern)
        });
        report.record(analytic[slot].data()[index], numeric);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!(relative_error(1e-9, -1e-9) < 0.01);
    }

    #[test]
    fn every_layer_kernel_matches_finite_differences() {
        for c in layer_checks(11).unwrap() {
            assert!(c.passes(LAYER_TOLERANCE), "{c:?}");
            assert!(c.skipped * 10 <= c.checked, "{c:?}");
        }
    }

    #[test]
    fn all_zero_gradients_do_not_pass() {
        let mut c = GradCheck::new("dead");
        for _ in 0..10 {
            c.record(0.0, Some(0.0));
        }
        assert_eq!(c.max_rel_error, 0.0);
        assert!(!c.passes(1.0));
    }

    #[test]
    fn shrunken_models_match_finite_differences() {
        for (seed, v) in Variant::ALL.into_iter().enumerate() {
            let c = model_check(v, seed as u64, 500).unwrap();
            assert!(c.checked >= 200 && c.skipped < c.checked, "{c:?}");
            assert!(c.nonzero * 4 >= c.checked, "{c:?}");
            assert!(c.passes(MODEL_TOLERANCE), "{c:?}");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let rng = &mut ChaCha8Rng::seed_from_u64(1);
        let forward = |t: &[Tensor]| dense_forward(&t[0], &t[1], &t[2], Activation::Tanh);
        let backward = |g: &Tensor, c: &LayerCache, t: &[Tensor]| {
            let mut r = dense_backward(g, c, &t[1])?;
            r.weights.data_mut()[3] *= 1.01;
            Ok(vec![r.input, r.weights, r.bias])
        };
        let reference = |f: &[Field], p: &mut Vec<u32>| {
            let mut y = reference_dense(&f[0], &f[1], &f[2]);
            activate(&mut y.data, Activation::Tanh, p);
            y
        };
        let tensors = vec![
            uniform(&[2, 4], 1.0, rng),
            uniform(&[4, 3], 0.5, rng),
            uniform(&[3], 0.2, rng),
        ];
        let c = check_op("broken", tensors, &forward, &backward, &reference, rng).unwrap();
        assert!(c.forward_gap <= FORWARD_TOLERANCE);
        assert!(!c.passes(LAYER_TOLERANCE));
    }
}
