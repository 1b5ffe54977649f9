//! Spatio-temporal convolutional autoencoders for fall detection framed as
//! video anomaly detection.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of
//! the pipeline: dense tensors and hand-written layer kernels with explicit
//! backward passes, the six autoencoder variants, Adadelta training on an
//! MSE objective, temporal sliding windows, cross-context and within-context
//! anomaly scores, and ROC AUC evaluation. File formats, image decoding and
//! the command line live in the `stcae` companion crate.
//!
//! Tensors are row-major with the last axis fastest. Video windows use the
//! axis order `(batch, time, height, width, channels)`.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod arch;
pub mod checkpoint;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod kernels;
mod math;
mod parallel;
pub mod preprocess;
pub mod score;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod window;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Side length of the square frames every model consumes.
pub const FRAME_SIZE: usize = 64;
