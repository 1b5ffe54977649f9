use super::SampleSet;
use crate::{Error, Result, Tensor};

/// Mirrors `src` left-to-right into `dst`. The buffer is read as
/// `(..., W, C)` with `width` columns of `channels` values each.
pub fn hflip_into(src: &[f32], dst: &mut [f32], width: usize, channels: usize) {
    let row = width * channels;
    for (s, d) in src.chunks_exact(row).zip(dst.chunks_exact_mut(row)) {
        for x in 0..width {
            let from = (width - 1 - x) * channels;
            d[x * channels..(x + 1) * channels].copy_from_slice(&s[from..from + channels]);
        }
    }
}

/// Doubles a `(B, H, W, C)` frame batch: the `B` originals followed by
/// their left-right mirrors.
pub fn augment_hflip(frames: &Tensor) -> Result<Tensor> {
    let &[b, h, w, c] = frames.shape() else {
        return Err(Error::shape("augment_hflip", "(B,H,W,C)", frames.shape()));
    };
    let mut out = alloc::vec::Vec::with_capacity(2 * frames.len());
    out.extend_from_slice(frames.data());
    out.resize(2 * frames.len(), 0.0);
    let (orig, mirrored) = out.split_at_mut(frames.len());
    hflip_into(orig, mirrored, w, c);
    Tensor::from_vec(&[2 * b, h, w, c], out)
}

/// A sample set followed by the mirror image of every sample.
pub struct HFlipAugmented<'a, S: ?Sized> {
    inner: &'a S,
}

impl<'a, S: SampleSet + ?Sized> HFlipAugmented<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        HFlipAugmented { inner }
    }
}

impl<S: SampleSet + ?Sized> SampleSet for HFlipAugmented<'_, S> {
    fn len(&self) -> usize {
        2 * self.inner.len()
    }

    fn sample_shape(&self) -> alloc::vec::Vec<usize> {
        self.inner.sample_shape()
    }

    fn copy_sample(&self, index: usize, out: &mut [f32]) {
        let n = self.inner.len();
        if index < n {
            self.inner.copy_sample(index, out);
        } else {
            let shape = self.inner.sample_shape();
            let mut tmp = alloc::vec![0.0; out.len()];
            self.inner.copy_sample(index - n, &mut tmp);
            let c = shape[shape.len() - 1];
            let w = shape[shape.len() - 2];
            hflip_into(&tmp, out, w, c);
        }
    }
}
