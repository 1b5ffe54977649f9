use crate::arch::ModelParams;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdadeltaConfig {
    /// Decay of both running averages.
    pub rho: f32,
    pub epsilon: f32,
    /// Multiplier on the computed update.
    pub learning_rate: f32,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            epsilon: 1e-6,
            learning_rate: 1.0,
        }
    }
}

/// Running averages `E[g^2]` and `E[dx^2]`, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    grad_sq: ModelParams,
    update_sq: ModelParams,
}

impl AdadeltaState {
    pub fn new(params: &ModelParams) -> Self {
        AdadeltaState {
            grad_sq: params.zeros_like(),
            update_sq: params.zeros_like(),
        }
    }

    pub fn grad_sq(&self) -> &ModelParams {
        &self.grad_sq
    }

    pub fn update_sq(&self) -> &ModelParams {
        &self.update_sq
    }
}

fn step_slice(x: &mut [f32], g: &[f32], eg: &mut [f32], ed: &mut [f32], cfg: &AdadeltaConfig) {
    let AdadeltaConfig {
        rho,
        epsilon,
        learning_rate,
    } = *cfg;
    for (((x, &g), eg), ed) in x.iter_mut().zip(g).zip(eg).zip(ed) {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let delta = -(math::sqrt(*ed + epsilon) / math::sqrt(*eg + epsilon)) * g;
        *ed = rho * *ed + (1.0 - rho) * delta * delta;
        *x += learning_rate * delta;
    }
}

/// One Adadelta update:
///
/// ```text
/// E[g^2]  <- rho E[g^2] + (1 - rho) g^2
/// dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
/// E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
/// x       <- x + lr * dx
/// ```
///
/// Gradients are checked for non-finite values before anything is modified.
pub fn adadelta_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdadeltaState,
    cfg: &AdadeltaConfig,
) -> Result<()> {
    for (layer, g) in grads.iter() {
        if !(g.weights.all_finite() && g.bias.all_finite()) {
            return Err(Error::NonFiniteGradient { layer });
        }
    }
    for (layer, p) in params.iter_mut() {
        let missing = || Error::InvalidArgument(alloc::format!("no gradient or state for layer {layer}"));
        let g = grads.get(layer).ok_or_else(missing)?;
        let eg = state.grad_sq.get_mut(layer).ok_or_else(missing)?;
        let ed = state.update_sq.get_mut(layer).ok_or_else(missing)?;
        if g.weights.shape() != p.weights.shape() || g.bias.shape() != p.bias.shape() {
            return Err(Error::shape("adadelta_step", p.weights.shape(), g.weights.shape()));
        }
        step_slice(
            p.weights.data_mut(),
            g.weights.data(),
            eg.weights.data_mut(),
            ed.weights.data_mut(),
            cfg,
        );
        step_slice(p.bias.data_mut(), g.bias.data(), eg.bias.data_mut(), ed.bias.data_mut(), cfg);
    }
    Ok(())
}
