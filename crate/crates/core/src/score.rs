//! Reconstruction errors and the anomaly scores derived from them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result, Tensor};

/// Squared Euclidean residual norm of every frame in a batch. Frames are the
/// trailing `(H, W, C)` blocks, so `(B, T, H, W, C)` windows yield `B * T`
/// values (window-major) and `(N, H, W, C)` frames yield `N`.
pub fn frame_errors(input: &Tensor, output: &Tensor) -> Result<Vec<f64>> {
    if input.shape() != output.shape() || input.rank() < 3 {
        return Err(Error::shape("frame_errors", input.shape(), output.shape()));
    }
    let per: usize = input.shape()[input.rank() - 3..].iter().product();
    Ok(input
        .data()
        .chunks_exact(per)
        .zip(output.data().chunks_exact(per))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum()
        })
        .collect())
}

/// Reconstruction errors of one video under unit stride: row `i` is window
/// `i` (0-based start frame) and holds the errors of frames `i..i+T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconErrorMatrix {
    pub video_id: String,
    length: usize,
    rows: usize,
    values: Vec<f64>,
}

impl ReconErrorMatrix {
    /// `values` is `D * T` errors in window-major order.
    pub fn new(video_id: impl Into<String>, length: usize, values: Vec<f64>) -> Result<Self> {
        if length == 0 || values.is_empty() || values.len() % length != 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} errors do not form whole windows of {length}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("reconstruction errors must be finite and non-negative".into()));
        }
        Ok(ReconErrorMatrix {
            video_id: video_id.into(),
            length,
            rows: values.len() / length,
            values,
        })
    }

    /// Window length `T`.
    pub fn window_length(&self) -> usize {
        self.length
    }

    /// Number of windows `D`.
    pub fn windows(&self) -> usize {
        self.rows
    }

    /// Number of frames `V = D + T - 1`.
    pub fn frames(&self) -> usize {
        self.rows + self.length - 1
    }

    /// Error of 0-based `frame` inside 0-based `window`, if it is covered.
    pub fn get(&self, window: usize, frame: usize) -> Option<f64> {
        (window < self.rows && frame >= window && frame < window + self.length)
            .then(|| self.values[window * self.length + frame - window])
    }

    /// The `T` errors of one window.
    pub fn row(&self, window: usize) -> &[f64] {
        &self.values[window * self.length..(window + 1) * self.length]
    }

    /// Every entry for 0-based `frame`, in window order.
    pub fn column(&self, frame: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        let lo = (frame + 1).saturating_sub(self.length);
        let hi = frame.min(self.rows - 1);
        (lo..=hi).map(move |i| self.values[i * self.length + frame - i])
    }
}

/// Builds the matrix from inference-mode outputs for all `D` windows of a
/// video, each `(T, H, W, C)`, stacked as `(D, T, H, W, C)`.
pub fn recon_error_matrix(video_id: &str, inputs: &Tensor, outputs: &Tensor) -> Result<ReconErrorMatrix> {
    if inputs.rank() != 5 {
        return Err(Error::shape("recon_error_matrix", "(D,T,H,W,C)", inputs.shape()));
    }
    ReconErrorMatrix::new(video_id, inputs.shape()[1], frame_errors(inputs, outputs)?)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0f64);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, math::sqrt64(var))
}

/// Per-frame cross-context scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScoreSeries {
    pub c_mu: Vec<f64>,
    pub c_sigma: Vec<f64>,
}

/// Mean and population standard deviation of each frame's errors over the
/// windows that contain it.
pub fn cross_context_scores(r: &ReconErrorMatrix) -> FrameScoreSeries {
    let v = r.frames();
    let mut c_mu = vec![0.0; v];
    let mut c_sigma = vec![0.0; v];
    for j in 0..v {
        (c_mu[j], c_sigma[j]) = mean_std(r.column(j));
    }
    FrameScoreSeries { c_mu, c_sigma }
}

/// Per-window within-context scores.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScoreSeries {
    pub w_mu: Vec<f64>,
    pub w_sigma: Vec<f64>,
}

/// Mean and population standard deviation of each window's `T` errors.
pub fn within_context_scores(r: &ReconErrorMatrix) -> WindowScoreSeries {
    let d = r.windows();
    let mut w_mu = vec![0.0; d];
    let mut w_sigma = vec![0.0; d];
    for i in 0..d {
        (w_mu[i], w_sigma[i]) = mean_std(r.row(i).iter().copied());
    }
    WindowScoreSeries { w_mu, w_sigma }
}

/// Fall-frame count of every unit-stride window of length `length`.
pub fn fall_counts(frame_labels: &[bool], length: usize) -> Result<Vec<usize>> {
    if length == 0 || frame_labels.len() < length {
        return Err(Error::VideoTooShort {
            id: String::new(),
            frames: frame_labels.len(),
            window: length,
        });
    }
    let mut count = frame_labels[..length].iter().filter(|&&f| f).count();
    let mut out = Vec::with_capacity(frame_labels.len() - length + 1);
    out.push(count);
    for i in length..frame_labels.len() {
        count = count + frame_labels[i] as usize - frame_labels[i - length] as usize;
        out.push(count);
    }
    Ok(out)
}

/// A window is a fall when it holds at least `alpha` fall frames.
pub fn label_windows(frame_labels: &[bool], length: usize, alpha: usize) -> Result<Vec<bool>> {
    if alpha == 0 || alpha > length {
        return Err(Error::InvalidArgument(alloc::format!(
            "alpha must be in 1..={length}, got {alpha}"
        )));
    }
    Ok(fall_counts(frame_labels, length)?.into_iter().map(|c| c >= alpha).collect())
}
