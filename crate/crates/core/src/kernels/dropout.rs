use alloc::vec::Vec;

use rand::Rng;

use super::LayerCache;
use crate::{Error, Result, Tensor};

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; in
/// inference mode (or with `rate == 0`) the input passes through unchanged
/// and `rng` is not consumed.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f32,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, LayerCache)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(alloc::format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), LayerCache::Dropout { mask: None }));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = (0..input.len())
        .map(|_| if rng.random::<f32>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((
        Tensor::from_vec(input.shape(), data)?,
        LayerCache::Dropout { mask: Some(mask) },
    ))
}

pub fn dropout_backward(grad_out: &Tensor, cache: &LayerCache) -> Result<Tensor> {
    match cache {
        LayerCache::Dropout { mask: None } => Ok(grad_out.clone()),
        LayerCache::Dropout { mask: Some(mask) } => {
            if mask.len() != grad_out.len() {
                return Err(Error::shape("dropout_backward", mask.len(), grad_out.len()));
            }
            let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
            Tensor::from_vec(grad_out.shape(), data)
        }
        other => Err(Error::InvalidArgument(alloc::format!(
            "dropout_backward given a {} cache",
            other.kind()
        ))),
    }
}
