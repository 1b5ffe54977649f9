use rand::Rng;

use crate::math;
use crate::Tensor;

/// Glorot-uniform initialisation: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f32);
    Tensor::from_fn(shape, |_| rng.random_range(-limit..=limit))
}
