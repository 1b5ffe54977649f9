//! Training: the reconstruction objective, the Adadelta optimiser,
//! horizontal-flip augmentation and the epoch loop.

mod adadelta;
mod augment;
mod fit;
mod loss;

pub use adadelta::{adadelta_step, AdadeltaConfig, AdadeltaState};
pub use augment::{augment_hflip, hflip_into, HFlipAugmented};
pub use fit::{fit, fit_with, EpochReport, SampleSet, TrainConfig, TrainOutcome};
pub use loss::mse_loss;
