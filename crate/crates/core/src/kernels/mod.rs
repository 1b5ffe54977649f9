//! Layer kernels with explicit forward and backward passes.
//!
//! Spatio-temporal tensors are `(B, T, H, W, C)`; dense tensors are `(B, N)`.
//! Every forward returns a [`LayerCache`] holding exactly what the matching
//! backward needs, so backward never re-runs forward.

use alloc::vec::Vec;

use crate::math;
use crate::Tensor;

mod conv;
mod dense;
mod dropout;
mod gemm;
mod init;
mod pool;
mod upsample;

pub use conv::{conv3d_backward, conv3d_forward, deconv3d_backward, deconv3d_forward, Conv3DKernel, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use dropout::{dropout, dropout_backward};
pub use init::glorot_uniform;
pub use pool::{maxpool3d_backward, maxpool3d_forward};
pub use upsample::{upsample3d_backward, upsample3d_forward};

pub(crate) use conv::conv3d_backward_with;
pub(crate) use gemm::{gemm, MatRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => math::tanh(x),
            Activation::Linear => x,
        }
    }

    /// Derivative evaluated at the pre-activation value.
    pub fn derivative(self, pre: f32) -> f32 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = math::tanh(pre);
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }

    pub(crate) fn apply_into(self, pre: &[f32]) -> Vec<f32> {
        pre.iter().map(|&v| self.apply(v)).collect()
    }

    /// `grad_out * f'(pre)` elementwise.
    pub(crate) fn backprop(self, grad_out: &[f32], pre: &[f32]) -> Vec<f32> {
        match self {
            Activation::Linear => grad_out.to_vec(),
            _ => grad_out
                .iter()
                .zip(pre)
                .map(|(&g, &p)| g * self.derivative(p))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output extent `ceil(in / stride)`; zeros split evenly with any odd
    /// remainder on the high-index side.
    Same,
    /// No padding; output extent `(in - k) / stride + 1`.
    Valid,
}

/// Forward state saved for the backward pass of one layer.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Conv {
        input: Tensor,
        pre_activation: Tensor,
        activation: Activation,
    },
    Deconv {
        input: Tensor,
        pre_activation: Tensor,
        activation: Activation,
    },
    MaxPool {
        input_shape: Vec<usize>,
        argmax: Vec<u32>,
    },
    Upsample {
        input_shape: Vec<usize>,
        factor: [usize; 3],
    },
    Dense {
        input: Tensor,
        pre_activation: Tensor,
        activation: Activation,
    },
    /// `None` marks an identity pass (inference or zero rate).
    Dropout { mask: Option<Vec<f32>> },
    Reshape { input_shape: Vec<usize> },
}

impl LayerCache {
    pub(crate) fn kind(&self) -> &'static str {
        match self {
            LayerCache::Conv { .. } => "conv",
            LayerCache::Deconv { .. } => "deconv",
            LayerCache::MaxPool { .. } => "maxpool",
            LayerCache::Upsample { .. } => "upsample",
            LayerCache::Dense { .. } => "dense",
            LayerCache::Dropout { .. } => "dropout",
            LayerCache::Reshape { .. } => "reshape",
        }
    }
}
