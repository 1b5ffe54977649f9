use alloc::vec;

use super::LayerCache;
use crate::{Error, Result, Tensor};

/// Non-overlapping 3D max pooling with same padding.
///
/// Output extent per axis is `ceil(in / stride)`. Padded positions never win.
/// Ties resolve to the first position in `(t, y, x)` scan order.
pub fn maxpool3d_forward(input: &Tensor, window: [usize; 3], stride: [usize; 3]) -> Result<(Tensor, LayerCache)> {
    if window != stride || window.contains(&0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "max pooling requires window == stride and nonzero extents, got {window:?} / {stride:?}"
        )));
    }
    let [b, t, h, w, c] = input.dims5("maxpool3d_forward")?;
    let inp = [t, h, w];
    let mut out = [0; 3];
    let mut lo = [0; 3];
    for a in 0..3 {
        out[a] = inp[a].div_ceil(stride[a]);
        lo[a] = (out[a] * stride[a] - inp[a]) / 2;
    }
    let n_out = b * out[0] * out[1] * out[2] * c;
    let mut values = vec![0.0f32; n_out];
    let mut argmax = vec![0u32; n_out];
    let x = input.data();
    let mut o = 0;
    for n in 0..b {
        for ot in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    for ch in 0..c {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for s in 0..window[0] {
                            let it = (ot * stride[0] + s).wrapping_sub(lo[0]);
                            if it >= t {
                                continue;
                            }
                            for p in 0..window[1] {
                                let iy = (oy * stride[1] + p).wrapping_sub(lo[1]);
                                if iy >= h {
                                    continue;
                                }
                                for q in 0..window[2] {
                                    let ix = (ox * stride[2] + q).wrapping_sub(lo[2]);
                                    if ix >= w {
                                        continue;
                                    }
                                    let idx = (((n * t + it) * h + iy) * w + ix) * c + ch;
                                    if best_idx == usize::MAX || x[idx] > best {
                                        best = x[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        values[o] = best;
                        argmax[o] = best_idx as u32;
                        o += 1;
                    }
                }
            }
        }
    }
    let output = Tensor::from_vec(&[b, out[0], out[1], out[2], c], values)?;
    Ok((
        output,
        LayerCache::MaxPool {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool3d_backward(grad_out: &Tensor, cache: &LayerCache) -> Result<Tensor> {
    let LayerCache::MaxPool { input_shape, argmax } = cache else {
        return Err(Error::InvalidArgument(alloc::format!(
            "maxpool3d_backward given a {} cache",
            cache.kind()
        )));
    };
    if grad_out.len() != argmax.len() {
        return Err(Error::shape("maxpool3d_backward", argmax.len(), grad_out.len()));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx as usize] += v;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_extents() {
        let x = Tensor::zeros(&[1, 8, 64, 64, 16]);
        let (y, _) = maxpool3d_forward(&x, [2, 2, 2], [2, 2, 2]).unwrap();
        assert_eq!(y.shape(), &[1, 4, 32, 32, 16]);
        let (y, _) = maxpool3d_forward(&x, [1, 2, 2], [1, 2, 2]).unwrap();
        assert_eq!(y.shape(), &[1, 8, 32, 32, 16]);
    }

    #[test]
    fn odd_extent_rounds_up() {
        let x = Tensor::from_fn(&[1, 1, 1, 5, 1], |i| i as f32);
        let (y, _) = maxpool3d_forward(&x, [1, 1, 2], [1, 1, 2]).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 4.0]);
    }

    #[test]
    fn constant_input_picks_first_index() {
        let x = Tensor::full(&[1, 2, 4, 4, 1], 3.0);
        let (y, cache) = maxpool3d_forward(&x, [2, 2, 2], [2, 2, 2]).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
        let LayerCache::MaxPool { argmax, .. } = cache else { panic!() };
        // First element of each window: t=0, y even, x even.
        assert_eq!(argmax, vec![0, 2, 8, 10]);
    }

    #[test]
    fn backward_routes_one_per_window() {
        let x = Tensor::from_fn(&[2, 2, 4, 4, 3], |i| ((i * 37) % 101) as f32);
        let (y, cache) = maxpool3d_forward(&x, [2, 2, 2], [2, 2, 2]).unwrap();
        let g = maxpool3d_backward(&Tensor::full(y.shape(), 1.0), &cache).unwrap();
        assert_eq!(g.sum(), y.len() as f64);
        assert!(g.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let z = maxpool3d_backward(&Tensor::zeros(y.shape()), &cache).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overlapping_windows_rejected() {
        let x = Tensor::zeros(&[1, 2, 2, 2, 1]);
        assert!(maxpool3d_forward(&x, [2, 2, 2], [1, 1, 1]).is_err());
    }
}
