use super::LayerCache;
use crate::{Error, Result, Tensor};

/// Nearest-neighbour upsampling: every element is repeated `factor` times
/// along each spatio-temporal axis. Channels are untouched.
pub fn upsample3d_forward(input: &Tensor, factor: [usize; 3]) -> Result<(Tensor, LayerCache)> {
    if factor.contains(&0) {
        return Err(Error::InvalidArgument("upsampling factor must be positive".into()));
    }
    let [b, t, h, w, c] = input.dims5("upsample3d_forward")?;
    let [ft, fh, fw] = factor;
    let (ot, oh, ow) = (t * ft, h * fh, w * fw);
    let x = input.data();
    let mut out = Tensor::zeros(&[b, ot, oh, ow, c]);
    let o = out.data_mut();
    let mut k = 0;
    for n in 0..b {
        for zt in 0..ot {
            for zy in 0..oh {
                for zx in 0..ow {
                    let src = (((n * t + zt / ft) * h + zy / fh) * w + zx / fw) * c;
                    o[k..k + c].copy_from_slice(&x[src..src + c]);
                    k += c;
                }
            }
        }
    }
    Ok((
        out,
        LayerCache::Upsample {
            input_shape: input.shape().to_vec(),
            factor,
        },
    ))
}

/// Sums the gradient over each repetition block.
pub fn upsample3d_backward(grad_out: &Tensor, cache: &LayerCache) -> Result<Tensor> {
    let LayerCache::Upsample { input_shape, factor } = cache else {
        return Err(Error::InvalidArgument(alloc::format!(
            "upsample3d_backward given a {} cache",
            cache.kind()
        )));
    };
    let [b, t, h, w, c] = <[usize; 5]>::try_from(input_shape.as_slice())
        .map_err(|_| Error::shape("upsample3d_backward", "rank 5", input_shape))?;
    let [ft, fh, fw] = *factor;
    let expected = [b, t * ft, h * fh, w * fw, c];
    grad_out.expect_shape("upsample3d_backward", &expected)?;
    let g = grad_out.data();
    let mut grad = Tensor::zeros(input_shape);
    let d = grad.data_mut();
    let mut k = 0;
    for n in 0..b {
        for zt in 0..t * ft {
            for zy in 0..h * fh {
                for zx in 0..w * fw {
                    let dst = (((n * t + zt / ft) * h + zy / fh) * w + zx / fw) * c;
                    for ch in 0..c {
                        d[dst + ch] += g[k + ch];
                    }
                    k += c;
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::maxpool3d_forward;

    #[test]
    fn table_extent() {
        let (y, _) = upsample3d_forward(&Tensor::zeros(&[1, 2, 16, 16, 8]), [2, 2, 2]).unwrap();
        assert_eq!(y.shape(), &[1, 4, 32, 32, 8]);
    }

    #[test]
    fn single_pixel_becomes_block() {
        let x = Tensor::full(&[1, 1, 1, 1, 1], 0.7);
        let (y, _) = upsample3d_forward(&x, [1, 2, 2]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2, 1]);
        assert_eq!(y.data(), &[0.7; 4]);
    }

    #[test]
    fn pool_undoes_upsample() {
        let x = Tensor::from_fn(&[2, 2, 3, 4, 2], |i| (i as f32 * 0.37).sin());
        for f in [[2, 2, 2], [1, 2, 2]] {
            let (u, _) = upsample3d_forward(&x, f).unwrap();
            let (p, _) = maxpool3d_forward(&u, f, f).unwrap();
            assert_eq!(p, x);
        }
    }

    #[test]
    fn backward_sums_blocks() {
        let x = Tensor::zeros(&[1, 1, 2, 2, 1]);
        let (y, cache) = upsample3d_forward(&x, [2, 2, 2]).unwrap();
        let g = upsample3d_backward(&Tensor::full(y.shape(), 1.0), &cache).unwrap();
        assert_eq!(g.data(), &[8.0; 4]);
    }
}
