use alloc::collections::BTreeMap;

use rand::Rng;

use super::{LayerSpec, ModelSpec};
use crate::kernels::glorot_uniform;
use crate::{Error, Result, Tensor};

/// Weights and bias of one parameterised layer.
///
/// Convolution weights are `(out, in, S, P, Q)`; 2D layers use `S = 1`.
/// Transposed-convolution weights are `(in, out, S, P, Q)`. Dense weights
/// are `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Learned parameters keyed by layer index. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    layers: BTreeMap<usize, LayerParams>,
}

/// `(weight shape, fan_in, fan_out, bias len)` for a parameterised layer.
fn param_geometry(layer: &LayerSpec, input: &[usize]) -> Option<([usize; 5], usize, usize, usize)> {
    let channels_in = *input.last()?;
    match *layer {
        LayerSpec::Conv3d { filters, kernel, .. } => {
            let taps = kernel.iter().product::<usize>();
            Some((
                [filters, channels_in, kernel[0], kernel[1], kernel[2]],
                channels_in * taps,
                filters * taps,
                filters,
            ))
        }
        LayerSpec::Conv2d { filters, kernel, .. } => {
            let taps = kernel[0] * kernel[1];
            Some(([filters, channels_in, 1, kernel[0], kernel[1]], channels_in * taps, filters * taps, filters))
        }
        LayerSpec::Deconv3d { filters, kernel, .. } => {
            let taps = kernel.iter().product::<usize>();
            Some((
                [channels_in, filters, kernel[0], kernel[1], kernel[2]],
                channels_in * taps,
                filters * taps,
                filters,
            ))
        }
        LayerSpec::Deconv2d { filters, kernel, .. } => {
            let taps = kernel[0] * kernel[1];
            Some(([channels_in, filters, 1, kernel[0], kernel[1]], channels_in * taps, filters * taps, filters))
        }
        LayerSpec::Dense { units, .. } => Some(([channels_in, units, 0, 0, 0], channels_in, units, units)),
        _ => None,
    }
}

/// Dense weights are rank 2; the trailing placeholders are dropped.
fn shape_of(dims: &[usize; 5], layer: &LayerSpec) -> alloc::vec::Vec<usize> {
    if matches!(layer, LayerSpec::Dense { .. }) {
        dims[..2].to_vec()
    } else {
        dims.to_vec()
    }
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases for every parameterised layer.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        Self::build(spec, |shape, fan_in, fan_out| glorot_uniform(shape, fan_in, fan_out, rng))
    }

    /// All-zero parameters (also the shape of a gradient accumulator).
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self::build(spec, |shape, _, _| Tensor::zeros(shape))
    }

    fn build(spec: &ModelSpec, mut weights: impl FnMut(&[usize], usize, usize) -> Tensor) -> Self {
        let mut layers = BTreeMap::new();
        let mut shape = spec.input_shape().to_vec();
        for (i, layer) in spec.layers().iter().enumerate() {
            if let Some((dims, fan_in, fan_out, bias)) = param_geometry(layer, &shape) {
                let w = weights(&shape_of(&dims, layer), fan_in, fan_out);
                layers.insert(
                    i,
                    LayerParams {
                        weights: w,
                        bias: Tensor::zeros(&[bias]),
                    },
                );
            }
            shape = layer.output_shape(&shape).expect("validated spec");
        }
        ModelParams { layers }
    }

    /// Zero tensors with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|(&i, p)| {
                (
                    i,
                    LayerParams {
                        weights: Tensor::zeros(p.weights.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    },
                )
            })
            .collect();
        ModelParams { layers }
    }

    pub fn get(&self, layer: usize) -> Option<&LayerParams> {
        self.layers.get(&layer)
    }

    pub fn get_mut(&mut self, layer: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(&layer)
    }

    pub fn insert(&mut self, layer: usize, params: LayerParams) {
        self.layers.insert(layer, params);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &LayerParams)> {
        self.layers.iter().map(|(&i, p)| (i, p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (usize, &mut LayerParams)> {
        self.layers.iter_mut().map(|(&i, p)| (i, p))
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.values().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// Checks that layer indices and tensor shapes agree with `spec`.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let reference = ModelParams::zeros(spec);
        if reference.layers.len() != self.layers.len() {
            return Err(Error::shape(
                "ModelParams layer count",
                reference.layers.len(),
                self.layers.len(),
            ));
        }
        for ((ri, rp), (i, p)) in reference.layers.iter().zip(&self.layers) {
            if ri != i || rp.weights.shape() != p.weights.shape() || rp.bias.shape() != p.bias.shape() {
                return Err(Error::shape(
                    "ModelParams layer",
                    (ri, rp.weights.shape(), rp.bias.shape()),
                    (i, p.weights.shape(), p.bias.shape()),
                ));
            }
        }
        Ok(())
    }
}
