use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::metrics::{auc, roc};
use super::report::{AggregateReport, RocResult, ScoreKind, VideoScores};
use crate::arch::{reconstruct, ModelParams, ModelSpec};
use crate::score::{cross_context_scores, frame_errors, label_windows, within_context_scores, ReconErrorMatrix};
use crate::train::SampleSet;
use crate::window::{WindowConfig, WindowedVideos};
use crate::{Error, Result, Tensor};

/// A labelled test video: `(V, H, W, C)` normalised frames and one fall
/// flag per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVideo {
    pub id: String,
    pub frames: Tensor,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VideoErrors {
    /// Window models: the full reconstruction-error matrix.
    Windows(ReconErrorMatrix),
    /// Frame models: one error per frame.
    Frames(Vec<f64>),
}

/// Reconstruction errors of one video with its frame labels. Every report
/// kind can be derived from this without rerunning the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub id: String,
    pub labels: Vec<bool>,
    pub errors: VideoErrors,
}

/// Runs the model over every window (or frame) of `video` in inference
/// mode, `batch_size` samples at a time.
pub fn error_profile(
    spec: &ModelSpec,
    params: &ModelParams,
    video: &TestVideo,
    batch_size: usize,
) -> Result<ErrorProfile> {
    let v = video.frames.shape().first().copied().unwrap_or(0);
    if video.labels.len() != v {
        return Err(Error::InvalidArgument(alloc::format!(
            "video {} has {} frames but {} labels",
            video.id,
            v,
            video.labels.len()
        )));
    }
    let batch_size = batch_size.max(1);
    let input = spec.input_shape();
    let errors = if spec.variant().is_spatio_temporal() {
        let cfg = WindowConfig {
            length: input[0],
            stride: 1,
        };
        let view = WindowedVideos::new([&video.frames], cfg)?;
        if view.is_empty() {
            return Err(Error::VideoTooShort {
                id: video.id.clone(),
                frames: v,
                window: cfg.length,
            });
        }
        let sample_len: usize = input.iter().product();
        let mut values = Vec::with_capacity(view.len() * cfg.length);
        let mut start = 0;
        while start < view.len() {
            let n = batch_size.min(view.len() - start);
            let mut buf = vec![0.0f32; n * sample_len];
            for (k, out) in buf.chunks_exact_mut(sample_len).enumerate() {
                view.copy_sample(start + k, out);
            }
            let mut shape = vec![n];
            shape.extend_from_slice(input);
            let batch = Tensor::from_vec(&shape, buf)?;
            let out = reconstruct(spec, params, &batch)?;
            values.extend(frame_errors(&batch, &out)?);
            start += n;
        }
        VideoErrors::Windows(ReconErrorMatrix::new(video.id.clone(), cfg.length, values)?)
    } else {
        if video.frames.shape()[1..] != *input {
            return Err(Error::shape("test frames", input, &video.frames.shape()[1..]));
        }
        let per: usize = input.iter().product();
        let mut values = Vec::with_capacity(v);
        for chunk in video.frames.data().chunks(batch_size * per) {
            let mut shape = vec![chunk.len() / per];
            shape.extend_from_slice(input);
            let batch = Tensor::from_vec(&shape, chunk.to_vec())?;
            let out = reconstruct(spec, params, &batch)?;
            values.extend(frame_errors(&batch, &out)?);
        }
        VideoErrors::Frames(values)
    };
    Ok(ErrorProfile {
        id: video.id.clone(),
        labels: video.labels.clone(),
        errors,
    })
}

fn aggregate(
    model: &str,
    kind: ScoreKind,
    alpha: Option<usize>,
    series: Vec<VideoScores>,
) -> Result<AggregateReport> {
    let mut per_video = Vec::new();
    let mut skipped = Vec::new();
    for s in &series {
        match auc(&s.scores, &s.labels) {
            Ok(a) => per_video.push(RocResult {
                video_id: s.video_id.clone(),
                curve: roc(&s.scores, &s.labels)?,
                auc: a,
            }),
            Err(Error::DegenerateLabels) => {
                log::warn!("video {} has single-class labels for {kind}; left out of the aggregate", s.video_id);
                skipped.push(s.video_id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    AggregateReport::new(model.into(), kind, alpha, per_video, series, skipped)
}

/// Per-frame scores against per-frame labels.
pub fn cross_context_report(model: &str, profiles: &[ErrorProfile], kind: ScoreKind) -> Result<AggregateReport> {
    let series = profiles
        .iter()
        .map(|p| {
            let scores = match (&p.errors, kind) {
                (VideoErrors::Windows(r), ScoreKind::CMu) => cross_context_scores(r).c_mu,
                (VideoErrors::Windows(r), ScoreKind::CSigma) => cross_context_scores(r).c_sigma,
                (VideoErrors::Frames(e), ScoreKind::FrameError) => e.clone(),
                _ => {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "score {kind} does not apply to {model} as a cross-context score"
                    )))
                }
            };
            Ok(VideoScores {
                video_id: p.id.clone(),
                scores,
                labels: p.labels.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(model, kind, None, series)
}

/// Per-window scores against windows labelled by the `alpha` rule.
pub fn within_context_report(
    model: &str,
    profiles: &[ErrorProfile],
    kind: ScoreKind,
    alpha: usize,
) -> Result<AggregateReport> {
    let series = profiles
        .iter()
        .map(|p| {
            let VideoErrors::Windows(r) = &p.errors else {
                return Err(Error::InvalidArgument(
                    "within-context scores need a spatio-temporal model".into(),
                ));
            };
            let w = within_context_scores(r);
            let scores = match kind {
                ScoreKind::WMu => w.w_mu,
                ScoreKind::WSigma => w.w_sigma,
                _ => {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "{kind} is not a within-context score"
                    )))
                }
            };
            Ok(VideoScores {
                video_id: p.id.clone(),
                scores,
                labels: label_windows(&p.labels, r.window_length(), alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(model, kind, Some(alpha), series)
}

/// One within-context report for every `alpha` in `1..=T`.
pub fn alpha_sweep_reports(model: &str, profiles: &[ErrorProfile], kind: ScoreKind) -> Result<Vec<AggregateReport>> {
    let t = profiles
        .iter()
        .find_map(|p| match &p.errors {
            VideoErrors::Windows(r) => Some(r.window_length()),
            VideoErrors::Frames(_) => None,
        })
        .ok_or_else(|| Error::InvalidArgument("alpha sweep needs window error profiles".into()))?;
    (1..=t).map(|a| within_context_report(model, profiles, kind, a)).collect()
}

fn profiles(spec: &ModelSpec, params: &ModelParams, videos: &[TestVideo]) -> Result<Vec<ErrorProfile>> {
    let mut out = Vec::with_capacity(videos.len());
    for v in videos {
        match error_profile(spec, params, v, 16) {
            Ok(p) => out.push(p),
            Err(Error::VideoTooShort { id, frames, window }) => {
                log::warn!("skipping video {id}: {frames} frames is shorter than the {window}-frame window");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn evaluate_cross_context(
    spec: &ModelSpec,
    params: &ModelParams,
    videos: &[TestVideo],
    kind: ScoreKind,
) -> Result<AggregateReport> {
    cross_context_report(spec.variant().name(), &profiles(spec, params, videos)?, kind)
}

pub fn evaluate_within_context(
    spec: &ModelSpec,
    params: &ModelParams,
    videos: &[TestVideo],
    kind: ScoreKind,
    alpha: usize,
) -> Result<AggregateReport> {
    if !spec.variant().is_spatio_temporal() {
        return Err(Error::InvalidArgument(alloc::format!(
            "within-context scores are only defined for spatio-temporal models, not {}",
            spec.variant()
        )));
    }
    within_context_report(spec.variant().name(), &profiles(spec, params, videos)?, kind, alpha)
}
