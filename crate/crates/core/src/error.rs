use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),
    #[error("video `{id}` has {frames} frames, shorter than the window length {window}")]
    VideoTooShort {
        id: String,
        frames: usize,
        window: usize,
    },
    #[error("labels are single-class; AUC is undefined")]
    DegenerateLabels,
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl core::fmt::Debug,
        actual: impl core::fmt::Debug,
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected: alloc::format!("{expected:?}"),
            actual: alloc::format!("{actual:?}"),
        }
    }
}
