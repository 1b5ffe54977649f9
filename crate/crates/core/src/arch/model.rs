//! Whole-model forward and backward passes.
//!
//! 2D layers run through the 3D kernels on a singleton temporal axis: a
//! `(B, H, W, C)` activation is viewed as `(B, 1, H, W, C)` for the call and
//! reshaped back afterwards.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use super::{LayerParams, LayerSpec, ModelParams, ModelSpec};
use crate::kernels::{
    conv3d_backward_with, conv3d_forward, deconv3d_backward, deconv3d_forward, dense_backward, dense_forward, dropout,
    dropout_backward, maxpool3d_backward, maxpool3d_forward, upsample3d_backward, upsample3d_forward, Conv3DKernel,
    LayerCache, Padding,
};
use crate::{Error, Result, Tensor};

/// Forward-pass mode. Dropout draws from the RNG only in training mode.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Inference,
}

fn layer_params<'p>(params: &'p ModelParams, index: usize) -> Result<&'p LayerParams> {
    params
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(alloc::format!("missing parameters for layer {index}")))
}

/// `(B, H, W, C)` viewed as `(B, 1, H, W, C)`.
fn lift(x: Tensor) -> Result<Tensor> {
    match *x.shape() {
        [b, h, w, c] => x.reshape(&[b, 1, h, w, c]),
        _ => Err(Error::shape("2D layer input", "(B,H,W,C)", x.shape())),
    }
}

fn lower(x: Tensor) -> Result<Tensor> {
    match *x.shape() {
        [b, 1, h, w, c] => x.reshape(&[b, h, w, c]),
        _ => Err(Error::shape("2D layer output", "(B,1,H,W,C)", x.shape())),
    }
}

fn conv_kernel<'p>(p: &'p LayerParams, stride: [usize; 3]) -> Conv3DKernel<'p> {
    Conv3DKernel {
        weights: &p.weights,
        bias: &p.bias,
        stride,
        padding: Padding::Same,
    }
}

fn forward_layer(
    layer: &LayerSpec,
    index: usize,
    params: &ModelParams,
    x: Tensor,
    mode: &mut Mode<'_>,
) -> Result<(Tensor, LayerCache)> {
    match *layer {
        LayerSpec::Conv3d { activation, .. } => conv3d_forward(&x, &conv_kernel(layer_params(params, index)?, [1; 3]), activation),
        LayerSpec::Conv2d { activation, .. } => {
            let (y, c) = conv3d_forward(&lift(x)?, &conv_kernel(layer_params(params, index)?, [1; 3]), activation)?;
            Ok((lower(y)?, c))
        }
        LayerSpec::Deconv3d { stride, activation, .. } => {
            deconv3d_forward(&x, &conv_kernel(layer_params(params, index)?, stride), activation)
        }
        LayerSpec::Deconv2d { stride, activation, .. } => {
            let k = conv_kernel(layer_params(params, index)?, [1, stride[0], stride[1]]);
            let (y, c) = deconv3d_forward(&lift(x)?, &k, activation)?;
            Ok((lower(y)?, c))
        }
        LayerSpec::MaxPool3d { window } => maxpool3d_forward(&x, window, window),
        LayerSpec::MaxPool2d { window } => {
            let w = [1, window[0], window[1]];
            let (y, c) = maxpool3d_forward(&lift(x)?, w, w)?;
            Ok((lower(y)?, c))
        }
        LayerSpec::UpSample3d { factor } => upsample3d_forward(&x, factor),
        LayerSpec::UpSample2d { factor } => {
            let (y, c) = upsample3d_forward(&lift(x)?, [1, factor[0], factor[1]])?;
            Ok((lower(y)?, c))
        }
        LayerSpec::Dense { activation, .. } => {
            let p = layer_params(params, index)?;
            dense_forward(&x, &p.weights, &p.bias, activation)
        }
        LayerSpec::Flatten => {
            let input_shape = x.shape().to_vec();
            let flat: usize = input_shape[1..].iter().product();
            Ok((x.reshape(&[input_shape[0], flat])?, LayerCache::Reshape { input_shape }))
        }
        LayerSpec::Reshape { ref shape } => {
            let input_shape = x.shape().to_vec();
            let mut target = vec![input_shape[0]];
            target.extend_from_slice(shape);
            Ok((x.reshape(&target)?, LayerCache::Reshape { input_shape }))
        }
        LayerSpec::Dropout { rate } => match mode {
            Mode::Train(rng) => dropout(&x, rate, &mut **rng, true),
            Mode::Inference => Ok((x, LayerCache::Dropout { mask: None })),
        },
    }
}

fn check_input(spec: &ModelSpec, input: &Tensor) -> Result<()> {
    if input.rank() != spec.input_shape().len() + 1 || &input.shape()[1..] != spec.input_shape() {
        let mut want = vec![0];
        want.extend_from_slice(spec.input_shape());
        return Err(Error::shape("model input (B, ...)", want, input.shape()));
    }
    Ok(())
}

/// Runs the model on a batch `(B, ...input_shape)` and returns the
/// reconstruction with one cache per layer.
pub fn model_forward(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &Tensor,
    mut mode: Mode<'_>,
) -> Result<(Tensor, Vec<LayerCache>)> {
    check_input(spec, input)?;
    let mut x = input.clone();
    let mut caches = Vec::with_capacity(spec.layers().len());
    for (i, layer) in spec.layers().iter().enumerate() {
        let (y, cache) = forward_layer(layer, i, params, x, &mut mode)?;
        caches.push(cache);
        x = y;
    }
    Ok((x, caches))
}

/// Inference-mode forward pass that drops caches as it goes.
pub fn reconstruct(spec: &ModelSpec, params: &ModelParams, input: &Tensor) -> Result<Tensor> {
    check_input(spec, input)?;
    let mut x = input.clone();
    let mut mode = Mode::Inference;
    for (i, layer) in spec.layers().iter().enumerate() {
        x = forward_layer(layer, i, params, x, &mut mode)?.0;
    }
    Ok(x)
}

fn into_grads(grads: &mut ModelParams, index: usize, weights: Tensor, bias: Tensor) {
    grads.insert(index, LayerParams { weights, bias });
}

/// Exact gradients of a scalar loss whose gradient with respect to the model
/// output is `grad_output`. The result has the same layout as the parameters.
pub fn model_backward(
    spec: &ModelSpec,
    params: &ModelParams,
    caches: &[LayerCache],
    grad_output: &Tensor,
) -> Result<ModelParams> {
    if caches.len() != spec.layers().len() {
        return Err(Error::shape("model_backward caches", spec.layers().len(), caches.len()));
    }
    let mut grads = ModelParams::default();
    let mut g = grad_output.clone();
    for (i, (layer, cache)) in spec.layers().iter().zip(caches).enumerate().rev() {
        g = match *layer {
            LayerSpec::Conv3d { .. } => {
                let r = conv3d_backward_with(&g, cache, &conv_kernel(layer_params(params, i)?, [1; 3]), i > 0)?;
                into_grads(&mut grads, i, r.weights, r.bias);
                r.input
            }
            LayerSpec::Conv2d { .. } => {
                let k = conv_kernel(layer_params(params, i)?, [1; 3]);
                let r = conv3d_backward_with(&lift(g)?, cache, &k, i > 0)?;
                into_grads(&mut grads, i, r.weights, r.bias);
                lower(r.input)?
            }
            LayerSpec::Deconv3d { stride, .. } => {
                let r = deconv3d_backward(&g, cache, &conv_kernel(layer_params(params, i)?, stride))?;
                into_grads(&mut grads, i, r.weights, r.bias);
                r.input
            }
            LayerSpec::Deconv2d { stride, .. } => {
                let k = conv_kernel(layer_params(params, i)?, [1, stride[0], stride[1]]);
                let r = deconv3d_backward(&lift(g)?, cache, &k)?;
                into_grads(&mut grads, i, r.weights, r.bias);
                lower(r.input)?
            }
            LayerSpec::MaxPool3d { .. } => maxpool3d_backward(&g, cache)?,
            LayerSpec::MaxPool2d { .. } => lower(maxpool3d_backward(&g, cache)?)?,
            LayerSpec::UpSample3d { .. } => upsample3d_backward(&g, cache)?,
            LayerSpec::UpSample2d { .. } => lower(upsample3d_backward(&lift(g)?, cache)?)?,
            LayerSpec::Dense { .. } => {
                let r = dense_backward(&g, cache, &layer_params(params, i)?.weights)?;
                into_grads(&mut grads, i, r.weights, r.bias);
                r.input
            }
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                let LayerCache::Reshape { input_shape } = cache else {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "layer {i} expects a reshape cache, got {}",
                        cache.kind()
                    )));
                };
                g.reshape(input_shape)?
            }
            LayerSpec::Dropout { .. } => dropout_backward(&g, cache)?,
        };
    }
    Ok(grads)
}
