//! The six autoencoder variants and their layer-by-layer shapes.
//!
//! Three spatio-temporal models consume `(T, H, W, 1)` windows; two 2D
//! convolutional models and one fully connected model consume `(H, W, 1)`
//! frames. Every model ends in a single `tanh` layer so reconstructions lie
//! in `[-1, 1]`, matching the normalised inputs.
//!
//! Decoder convolutions run at stride 1 with same padding; resolution is
//! restored by the upsampling or stride-2 transposed-convolution layers.
//! The convolution that feeds the last upsampling layer produces 16 feature
//! maps, which the final convolution combines into one.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::kernels::Activation;
use crate::{Error, Result};

mod model;
mod params;

pub use model::{model_backward, model_forward, reconstruct, Mode};
pub use params::{LayerParams, ModelParams};

/// Dropout probability used wherever a variant applies dropout.
pub const DROPOUT_RATE: f32 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    DstcaeUpSampling,
    DstcaeDeconv,
    DstcaeC3d,
    CaeUpSampling,
    CaeDeconv,
    Dae,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::DstcaeUpSampling,
        Variant::DstcaeDeconv,
        Variant::DstcaeC3d,
        Variant::CaeUpSampling,
        Variant::CaeDeconv,
        Variant::Dae,
    ];

    /// Command-line spelling, e.g. `dstcae-c3d`.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::DstcaeUpSampling => "dstcae-upsampling",
            Variant::DstcaeDeconv => "dstcae-deconv",
            Variant::DstcaeC3d => "dstcae-c3d",
            Variant::CaeUpSampling => "cae-upsampling",
            Variant::CaeDeconv => "cae-deconv",
            Variant::Dae => "dae",
        }
    }

    /// Display name, e.g. `DSTCAE-C3D`.
    pub fn name(self) -> &'static str {
        match self {
            Variant::DstcaeUpSampling => "DSTCAE-UpSampling",
            Variant::DstcaeDeconv => "DSTCAE-Deconv",
            Variant::DstcaeC3d => "DSTCAE-C3D",
            Variant::CaeUpSampling => "CAE-UpSampling",
            Variant::CaeDeconv => "CAE-Deconv",
            Variant::Dae => "DAE",
        }
    }

    /// True for the models that consume windows of frames.
    pub fn is_spatio_temporal(self) -> bool {
        matches!(self, Variant::DstcaeUpSampling | Variant::DstcaeDeconv | Variant::DstcaeC3d)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.slug().eq_ignore_ascii_case(s) || v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownVariant(s.into()))
    }
}

/// One layer of a model. Geometry arrays are `(T, H, W)` for 3D layers and
/// `(H, W)` for 2D layers.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv3d {
        filters: usize,
        kernel: [usize; 3],
        activation: Activation,
    },
    MaxPool3d {
        window: [usize; 3],
    },
    UpSample3d {
        factor: [usize; 3],
    },
    Deconv3d {
        filters: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        activation: Activation,
    },
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        activation: Activation,
    },
    MaxPool2d {
        window: [usize; 2],
    },
    UpSample2d {
        factor: [usize; 2],
    },
    Deconv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        activation: Activation,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
    Dropout {
        rate: f32,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3d { .. } => "3D Convolution",
            LayerSpec::MaxPool3d { .. } => "3D Max-pooling",
            LayerSpec::UpSample3d { .. } => "3D UpSampling",
            LayerSpec::Deconv3d { .. } => "3D Deconvolution",
            LayerSpec::Conv2d { .. } => "2D Convolution",
            LayerSpec::MaxPool2d { .. } => "2D Max-pooling",
            LayerSpec::UpSample2d { .. } => "2D UpSampling",
            LayerSpec::Deconv2d { .. } => "2D Deconvolution",
            LayerSpec::Dense { .. } => "Fully Connected",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Reshape { .. } => "Reshape",
            LayerSpec::Dropout { .. } => "Dropout",
        }
    }

    pub fn activation(&self) -> Option<Activation> {
        match *self {
            LayerSpec::Conv3d { activation, .. }
            | LayerSpec::Deconv3d { activation, .. }
            | LayerSpec::Conv2d { activation, .. }
            | LayerSpec::Deconv2d { activation, .. }
            | LayerSpec::Dense { activation, .. } => Some(activation),
            _ => None,
        }
    }

    pub fn has_params(&self) -> bool {
        self.activation().is_some()
    }

    /// Output shape (without batch axis) for an input of shape `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::shape("LayerSpec::output_shape", self.name(), input);
        match (self, input) {
            (LayerSpec::Conv3d { filters, .. }, &[t, h, w, _]) => Ok(vec![t, h, w, *filters]),
            (LayerSpec::MaxPool3d { window }, &[t, h, w, c]) => Ok(vec![
                t.div_ceil(window[0]),
                h.div_ceil(window[1]),
                w.div_ceil(window[2]),
                c,
            ]),
            (LayerSpec::UpSample3d { factor }, &[t, h, w, c]) => Ok(vec![t * factor[0], h * factor[1], w * factor[2], c]),
            (LayerSpec::Deconv3d { filters, stride, .. }, &[t, h, w, _]) => {
                Ok(vec![t * stride[0], h * stride[1], w * stride[2], *filters])
            }
            (LayerSpec::Conv2d { filters, .. }, &[h, w, _]) => Ok(vec![h, w, *filters]),
            (LayerSpec::MaxPool2d { window }, &[h, w, c]) => Ok(vec![h.div_ceil(window[0]), w.div_ceil(window[1]), c]),
            (LayerSpec::UpSample2d { factor }, &[h, w, c]) => Ok(vec![h * factor[0], w * factor[1], c]),
            (LayerSpec::Deconv2d { filters, stride, .. }, &[h, w, _]) => Ok(vec![h * stride[0], w * stride[1], *filters]),
            (LayerSpec::Dense { units, .. }, &[_]) => Ok(vec![*units]),
            (LayerSpec::Flatten, dims) if !dims.is_empty() => Ok(vec![dims.iter().product()]),
            (LayerSpec::Reshape { shape }, dims) if shape.iter().product::<usize>() == dims.iter().product() => {
                Ok(shape.clone())
            }
            (LayerSpec::Dropout { .. }, dims) => Ok(dims.to_vec()),
            _ => Err(bad()),
        }
    }
}

/// Declarative description of one autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    variant: Variant,
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
}

/// One row of a shape table: layer name and its output shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRow {
    pub name: &'static str,
    pub shape: Vec<usize>,
}

impl fmt::Display for ShapeRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - (", self.name)?;
        for (i, d) in self.shape.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str(")")
    }
}

impl ModelSpec {
    /// Validates the autoencoder contract: every layer accepts its input,
    /// the output shape equals the input shape, and exactly one
    /// parameterised layer uses `tanh`, namely the last one.
    pub fn new(variant: Variant, layers: Vec<LayerSpec>, input_shape: Vec<usize>) -> Result<Self> {
        let spec = ModelSpec {
            variant,
            layers,
            input_shape,
        };
        let shapes = spec.layer_shapes()?;
        let out = shapes.last().unwrap_or(&spec.input_shape);
        if *out != spec.input_shape {
            return Err(Error::shape("ModelSpec output", &spec.input_shape, out));
        }
        let tanh_layers: Vec<usize> = spec
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.activation() == Some(Activation::Tanh))
            .map(|(i, _)| i)
            .collect();
        let last_param = spec.layers.iter().rposition(LayerSpec::has_params);
        if tanh_layers.len() != 1 || last_param != tanh_layers.first().copied() {
            return Err(Error::InvalidArgument(
                "model must have exactly one tanh layer, the last parameterised one".into(),
            ));
        }
        Ok(spec)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            cur = layer.output_shape(&cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

/// Builds one of the six variants at full size.
pub fn build_model(variant: Variant) -> ModelSpec {
    let input = if variant.is_spatio_temporal() {
        vec![8, 64, 64, 1]
    } else {
        vec![64, 64, 1]
    };
    build_model_with(variant, input, [16, 8]).expect("reference architectures are valid")
}

/// Builds a variant with a custom input shape and encoder widths
/// `[first, second]`. The full-size models use `[16, 8]`.
pub fn build_model_with(variant: Variant, input_shape: Vec<usize>, widths: [usize; 2]) -> Result<ModelSpec> {
    use Activation::{Relu, Tanh};
    use LayerSpec::*;
    let [wide, narrow] = widths;
    let k3 = [5, 3, 3];
    let k2 = [3, 3];
    let drop = Dropout { rate: DROPOUT_RATE };
    let conv3 = |filters, activation| Conv3d {
        filters,
        kernel: k3,
        activation,
    };
    let conv2 = |filters, activation| Conv2d {
        filters,
        kernel: k2,
        activation,
    };
    let layers = match variant {
        Variant::DstcaeUpSampling => vec![
            conv3(wide, Relu),
            MaxPool3d { window: [2, 2, 2] },
            drop,
            conv3(narrow, Relu),
            MaxPool3d { window: [2, 2, 2] },
            conv3(narrow, Relu),
            UpSample3d { factor: [2, 2, 2] },
            conv3(wide, Relu),
            UpSample3d { factor: [2, 2, 2] },
            conv3(1, Tanh),
        ],
        Variant::DstcaeDeconv => {
            let deconv = |filters, s, activation| Deconv3d {
                filters,
                kernel: k3,
                stride: [s; 3],
                activation,
            };
            vec![
                conv3(wide, Relu),
                MaxPool3d { window: [2, 2, 2] },
                drop,
                conv3(narrow, Relu),
                MaxPool3d { window: [2, 2, 2] },
                deconv(narrow, 2, Relu),
                deconv(wide, 2, Relu),
                deconv(1, 1, Tanh),
            ]
        }
        Variant::DstcaeC3d => vec![
            conv3(wide, Relu),
            MaxPool3d { window: [1, 2, 2] },
            drop,
            conv3(narrow, Relu),
            MaxPool3d { window: [2, 2, 2] },
            conv3(narrow, Relu),
            MaxPool3d { window: [2, 2, 2] },
            conv3(narrow, Relu),
            UpSample3d { factor: [2, 2, 2] },
            conv3(narrow, Relu),
            UpSample3d { factor: [2, 2, 2] },
            conv3(wide, Relu),
            UpSample3d { factor: [1, 2, 2] },
            conv3(1, Tanh),
        ],
        Variant::CaeUpSampling => vec![
            conv2(wide, Relu),
            MaxPool2d { window: [2, 2] },
            conv2(narrow, Relu),
            MaxPool2d { window: [2, 2] },
            conv2(narrow, Relu),
            MaxPool2d { window: [2, 2] },
            conv2(narrow, Relu),
            UpSample2d { factor: [2, 2] },
            conv2(narrow, Relu),
            UpSample2d { factor: [2, 2] },
            conv2(wide, Relu),
            UpSample2d { factor: [2, 2] },
            conv2(1, Tanh),
        ],
        Variant::CaeDeconv => {
            let deconv = |filters, s, activation| Deconv2d {
                filters,
                kernel: k2,
                stride: [s; 2],
                activation,
            };
            vec![
                conv2(wide, Relu),
                MaxPool2d { window: [2, 2] },
                conv2(narrow, Relu),
                MaxPool2d { window: [2, 2] },
                conv2(narrow, Relu),
                MaxPool2d { window: [2, 2] },
                deconv(narrow, 2, Relu),
                deconv(narrow, 2, Relu),
                deconv(wide, 2, Relu),
                deconv(1, 1, Tanh),
            ]
        }
        Variant::Dae => {
            let pixels = input_shape.iter().product();
            let dense = |units, activation| Dense { units, activation };
            vec![
                Flatten,
                dense(150, Relu),
                drop,
                dense(100, Relu),
                dense(50, Relu),
                dense(100, Relu),
                dense(150, Relu),
                dense(pixels, Tanh),
                Reshape {
                    shape: input_shape.clone(),
                },
            ]
        }
    };
    ModelSpec::new(variant, layers, input_shape)
}

/// Layer names and output shapes in table form, starting with the input.
/// Dropout layers do not change shape and are omitted.
pub fn shape_table(spec: &ModelSpec) -> Vec<ShapeRow> {
    let shapes = spec.layer_shapes().expect("validated at construction");
    core::iter::once(ShapeRow {
        name: "Input",
        shape: spec.input_shape.clone(),
    })
    .chain(
        spec.layers
            .iter()
            .zip(shapes)
            .filter(|(l, _)| !matches!(l, LayerSpec::Dropout { .. }))
            .map(|(l, shape)| ShapeRow { name: l.name(), shape }),
    )
    .collect()
}

/// Human-readable variant list for error messages.
pub fn variant_names() -> String {
    Variant::ALL.iter().map(|v| v.slug()).collect::<Vec<_>>().join(", ")
}
