//! Frame preprocessing: luminance, bilinear resizing and normalisation.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result, Tensor, FRAME_SIZE};

/// Single-channel image of real-valued pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} pixels do not form a non-empty {width}x{height} image",
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_gray8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Plane::new(width, height, pixels.iter().map(|&p| p as f32).collect())
    }

    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// BT.601 luma `0.299 R + 0.587 G + 0.114 B`, rounded to nearest.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    math::round64(y).clamp(0.0, 255.0) as u8
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(src: &Plane, width: usize, height: usize) -> Result<Plane> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("resize target must be non-empty".into()));
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = math::floor64(pos) as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let xs = axis(width, src.width);
    let ys = axis(height, src.height);
    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src.at(x0, y0) * (1.0 - fx) + src.at(x1, y0) * fx;
            let bottom = src.at(x0, y1) * (1.0 - fx) + src.at(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Plane::new(width, height, data)
}

/// Scales pixels from `0..=255` to `[0, 1]` and subtracts the frame mean.
/// Returns an `(H, W, 1)` tensor.
pub fn normalize(plane: &Plane) -> Tensor {
    let n = plane.data.len() as f64;
    let mean = plane.data.iter().map(|&p| p as f64 / 255.0).sum::<f64>() / n;
    let data = plane.data.iter().map(|&p| (p as f64 / 255.0 - mean) as f32).collect();
    Tensor::from_vec(&[plane.height, plane.width, 1], data).expect("plane is non-empty")
}

/// Resize to the model frame size, then normalise.
pub fn prepare_frame(plane: &Plane) -> Result<Tensor> {
    Ok(normalize(&resize_bilinear(plane, FRAME_SIZE, FRAME_SIZE)?))
}
