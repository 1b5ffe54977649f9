use alloc::vec;

use super::{gemm, Activation, LayerCache, MatRef};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn dims(input: &Tensor, weights: &Tensor, bias: &Tensor, context: &'static str) -> Result<(usize, usize, usize)> {
    let (&[b, n], &[wn, m]) = (input.shape(), weights.shape()) else {
        return Err(Error::shape(context, "(B,n) input and (n,m) weights", (input.shape(), weights.shape())));
    };
    if n != wn {
        return Err(Error::shape(context, wn, n));
    }
    if bias.shape() != [m] {
        return Err(Error::shape(context, [m], bias.shape()));
    }
    Ok((b, n, m))
}

/// `activation(x W + b)` for `x: (B, n)`, `W: (n, m)`, `b: (m)`.
pub fn dense_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<(Tensor, LayerCache)> {
    let (b, n, m) = dims(input, weights, bias, "dense_forward")?;
    let mut pre = vec![0.0; b * m];
    for row in pre.chunks_exact_mut(m) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        b,
        n,
        m,
        MatRef::row_major(input.data(), n),
        MatRef::row_major(weights.data(), m),
        1.0,
        &mut pre,
    );
    let output = Tensor::from_vec(&[b, m], activation.apply_into(&pre))?;
    let cache = LayerCache::Dense {
        input: input.clone(),
        pre_activation: Tensor::from_vec(&[b, m], pre)?,
        activation,
    };
    Ok((output, cache))
}

pub fn dense_backward(grad_out: &Tensor, cache: &LayerCache, weights: &Tensor) -> Result<DenseGrads> {
    let LayerCache::Dense {
        input,
        pre_activation,
        activation,
    } = cache
    else {
        return Err(Error::InvalidArgument(alloc::format!(
            "dense_backward given a {} cache",
            cache.kind()
        )));
    };
    grad_out.expect_shape("dense_backward grad_out", pre_activation.shape())?;
    let (&[b, n], &[_, m]) = (input.shape(), weights.shape()) else {
        return Err(Error::shape("dense_backward", "(n,m) weights", weights.shape()));
    };
    let gp = activation.backprop(grad_out.data(), pre_activation.data());
    let mut dw = vec![0.0; n * m];
    gemm(n, b, m, MatRef::transposed(input.data(), n), MatRef::row_major(&gp, m), 0.0, &mut dw);
    let mut dx = vec![0.0; b * n];
    gemm(b, m, n, MatRef::row_major(&gp, m), MatRef::transposed(weights.data(), m), 0.0, &mut dx);
    let mut db = vec![0.0; m];
    for row in gp.chunks_exact(m) {
        for (a, &v) in db.iter_mut().zip(row) {
            *a += v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(&[b, n], dx)?,
        weights: Tensor::from_vec(&[n, m], dw)?,
        bias: Tensor::from_vec(&[m], db)?,
    })
}
