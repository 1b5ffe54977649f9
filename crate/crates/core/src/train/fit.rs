use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adadelta_step, mse_loss, AdadeltaConfig, AdadeltaState, HFlipAugmented};
use crate::arch::{model_backward, model_forward, Mode, ModelParams, ModelSpec, Variant};
use crate::{Error, Result, Tensor};

/// Indexable collection of equally shaped training samples.
pub trait SampleSet {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape of one sample (no batch axis). Empty when the set is empty.
    fn sample_shape(&self) -> Vec<usize>;

    /// Writes sample `index` into `out`, whose length is the product of
    /// `sample_shape()`.
    fn copy_sample(&self, index: usize, out: &mut [f32]);
}

/// Each tensor is one sample.
impl SampleSet for [Tensor] {
    fn len(&self) -> usize {
        <[Tensor]>::len(self)
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.first().map(|t| t.shape().to_vec()).unwrap_or_default()
    }

    fn copy_sample(&self, index: usize, out: &mut [f32]) {
        out.copy_from_slice(self[index].data());
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Horizontal-flip augmentation; only valid for frame models.
    pub augment: bool,
    pub seed: u64,
    pub optimizer: AdadeltaConfig,
    /// Epochs between checkpoints; `None` writes only the final one.
    pub checkpoint_interval: Option<usize>,
}

impl TrainConfig {
    pub fn for_variant(variant: Variant) -> Self {
        let st = variant.is_spatio_temporal();
        TrainConfig {
            epochs: 500,
            batch_size: if st { 16 } else { 32 },
            augment: !st,
            seed: 0,
            optimizer: AdadeltaConfig::default(),
            checkpoint_interval: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.checkpoint_interval == Some(0) {
            return Err(Error::InvalidArgument("checkpoint interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// True when `epoch` is a multiple of the checkpoint interval.
    pub checkpoint_due: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic sample order for `epoch` (0-based).
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 1 + 2 * epoch as u64));
    order
}

pub fn fit(spec: &ModelSpec, data: &(impl SampleSet + ?Sized), cfg: &TrainConfig) -> Result<TrainOutcome> {
    fit_with(spec, data, cfg, &mut |_, _| {})
}

/// Trains from a seeded Glorot initialisation, calling `on_epoch` after
/// every epoch with the current parameters.
pub fn fit_with(
    spec: &ModelSpec,
    data: &(impl SampleSet + ?Sized),
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochReport, &ModelParams),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.augment {
        if spec.variant().is_spatio_temporal() {
            return Err(Error::InvalidArgument(alloc::format!(
                "flip augmentation is not used for {}",
                spec.variant()
            )));
        }
        run(spec, &HFlipAugmented::new(data), cfg, on_epoch)
    } else {
        run(spec, data, cfg, on_epoch)
    }
}

fn run<S: SampleSet + ?Sized>(
    spec: &ModelSpec,
    data: &S,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochReport, &ModelParams),
) -> Result<TrainOutcome> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let sample_shape = data.sample_shape();
    if sample_shape != spec.input_shape() {
        return Err(Error::shape("training sample", spec.input_shape(), &sample_shape));
    }
    let sample_len: usize = sample_shape.iter().product();

    let mut params = ModelParams::init(spec, &mut stream_rng(cfg.seed, 0));
    let mut state = AdadeltaState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut dropout_rng = stream_rng(cfg.seed, 2 + 2 * epoch as u64);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut buf = vec![0.0f32; chunk.len() * sample_len];
            for (&idx, out) in chunk.iter().zip(buf.chunks_exact_mut(sample_len)) {
                data.copy_sample(idx, out);
            }
            let mut shape = Vec::with_capacity(sample_shape.len() + 1);
            shape.push(chunk.len());
            shape.extend_from_slice(&sample_shape);
            let batch = Tensor::from_vec(&shape, buf)?;

            let (output, caches) = model_forward(spec, &params, &batch, Mode::Train(&mut dropout_rng))?;
            let (loss, grad) = mse_loss(&batch, &output)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
            }
            let grads = model_backward(spec, &params, &caches, &grad)?;
            adadelta_step(&mut params, &grads, &mut state, &cfg.optimizer)?;
            loss_sum += loss;
            batches += 1;
        }
        let mean_loss = loss_sum / batches as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
        }
        history.push(mean_loss);
        let report = EpochReport {
            epoch: epoch + 1,
            mean_loss,
            checkpoint_due: cfg.checkpoint_interval.is_some_and(|k| (epoch + 1) % k == 0),
        };
        log::debug!("epoch {} loss {:.6}", report.epoch, mean_loss);
        on_epoch(&report, &params);
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}
