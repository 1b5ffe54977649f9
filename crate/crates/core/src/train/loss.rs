use crate::{Error, Result, Tensor};

/// Batch reconstruction cost `(1/N) * sum_i ||I_i - O_i||^2` and its
/// gradient with respect to the output, `(2/N) * (O - I)`.
///
/// `N` is the leading (batch) extent.
pub fn mse_loss(input: &Tensor, output: &Tensor) -> Result<(f64, Tensor)> {
    if input.shape() != output.shape() || input.rank() == 0 {
        return Err(Error::shape("mse_loss", input.shape(), output.shape()));
    }
    let n = input.shape()[0] as f64;
    let mut sum = 0.0f64;
    let scale = (2.0 / n) as f32;
    let grad = input
        .data()
        .iter()
        .zip(output.data())
        .map(|(&i, &o)| {
            let d = o - i;
            sum += d as f64 * d as f64;
            scale * d
        })
        .collect();
    Ok((sum / n, Tensor::from_vec(input.shape(), grad)?))
}
