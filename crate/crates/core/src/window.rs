//! Sliding temporal windows over per-video frame sequences.

use alloc::string::String;
use alloc::vec::Vec;

use crate::train::SampleSet;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowConfig {
    /// Frames per window (`T`).
    pub length: usize,
    /// Frames between consecutive window starts (`B`).
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { length: 8, stride: 1 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "window length and stride must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `D = floor((V - T) / B) + 1` for a video of `frames` frames.
pub fn window_count(frames: usize, cfg: &WindowConfig) -> Result<usize> {
    cfg.validate()?;
    if frames < cfg.length {
        return Err(Error::VideoTooShort {
            id: String::new(),
            frames,
            window: cfg.length,
        });
    }
    Ok((frames - cfg.length) / cfg.stride + 1)
}

/// Number of windows containing 1-based frame `j` when the stride is 1:
/// `min(j, T, D, V - j + 1)`.
pub fn coverage(j: usize, frames: usize, length: usize) -> usize {
    let d = frames + 1 - length;
    j.min(length).min(d).min(frames + 1 - j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// 1-based index of the first frame covered.
    pub first_frame: usize,
    /// `(T, H, W, C)` copy of the covered frames.
    pub data: Tensor,
}

impl Window {
    /// 1-based index of the last frame covered.
    pub fn last_frame(&self) -> usize {
        self.first_frame + self.data.shape()[0] - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub video_id: String,
    pub windows: Vec<Window>,
}

fn frame_len(frames: &Tensor) -> Result<usize> {
    if frames.rank() < 2 {
        return Err(Error::shape("video frames", "(V, H, W, C)", frames.shape()));
    }
    Ok(frames.shape()[1..].iter().product())
}

/// Copies the window starting at 0-based frame `start` out of a
/// `(V, H, W, C)` video.
pub fn window_at(frames: &Tensor, start: usize, length: usize) -> Result<Tensor> {
    let per = frame_len(frames)?;
    let v = frames.shape()[0];
    if start + length > v {
        return Err(Error::InvalidArgument(alloc::format!(
            "window {start}+{length} exceeds {v} frames"
        )));
    }
    let mut shape = frames.shape().to_vec();
    shape[0] = length;
    Tensor::from_vec(&shape, frames.data()[start * per..(start + length) * per].to_vec())
}

/// Windows one video. Videos are always windowed independently.
pub fn make_windows(video_id: &str, frames: &Tensor, cfg: &WindowConfig) -> Result<WindowSet> {
    frame_len(frames)?;
    let d = window_count(frames.shape()[0], cfg).map_err(|e| match e {
        Error::VideoTooShort { frames, window, .. } => Error::VideoTooShort {
            id: video_id.into(),
            frames,
            window,
        },
        other => other,
    })?;
    let windows = (0..d)
        .map(|i| {
            let start = i * cfg.stride;
            Ok(Window {
                first_frame: start + 1,
                data: window_at(frames, start, cfg.length)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(WindowSet {
        video_id: video_id.into(),
        windows,
    })
}

/// Lazy view of every window of several videos, in video order then start
/// order. Windows are copied out on demand, so memory stays at the size of
/// the source frames.
pub struct WindowedVideos<'a> {
    videos: Vec<&'a Tensor>,
    cfg: WindowConfig,
    /// `(video, 0-based start)` for every window.
    index: Vec<(usize, usize)>,
    skipped: Vec<usize>,
}

impl<'a> WindowedVideos<'a> {
    /// Videos shorter than the window are skipped and listed in
    /// [`skipped`](Self::skipped).
    pub fn new(videos: impl IntoIterator<Item = &'a Tensor>, cfg: WindowConfig) -> Result<Self> {
        cfg.validate()?;
        let videos: Vec<&Tensor> = videos.into_iter().collect();
        let mut index = Vec::new();
        let mut skipped = Vec::new();
        let mut frame_shape: Option<&[usize]> = None;
        for (k, v) in videos.iter().enumerate() {
            frame_len(v)?;
            match frame_shape {
                Some(s) if s != &v.shape()[1..] => {
                    return Err(Error::shape("video frame shape", s, &v.shape()[1..]));
                }
                _ => frame_shape = Some(&v.shape()[1..]),
            }
            match window_count(v.shape()[0], &cfg) {
                Ok(d) => index.extend((0..d).map(|i| (k, i * cfg.stride))),
                Err(Error::VideoTooShort { .. }) => skipped.push(k),
                Err(e) => return Err(e),
            }
        }
        Ok(WindowedVideos {
            videos,
            cfg,
            index,
            skipped,
        })
    }

    /// Positions of input videos that were too short to window.
    pub fn skipped(&self) -> &[usize] {
        &self.skipped
    }

    /// `(video position, 0-based start frame)` of window `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        self.index[i]
    }
}

impl SampleSet for WindowedVideos<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        match self.index.first() {
            Some(&(k, _)) => {
                let mut s = self.videos[k].shape().to_vec();
                s[0] = self.cfg.length;
                s
            }
            None => Vec::new(),
        }
    }

    fn copy_sample(&self, i: usize, out: &mut [f32]) {
        let (k, start) = self.index[i];
        let v = self.videos[k];
        let per: usize = v.shape()[1..].iter().product();
        out.copy_from_slice(&v.data()[start * per..(start + self.cfg.length) * per]);
    }
}

/// Every individual frame of several `(V, H, W, C)` videos as one sample
/// set, for frame models.
pub struct FrameView<'a> {
    videos: Vec<&'a Tensor>,
    /// `(video, frame)` for every sample.
    index: Vec<(usize, usize)>,
}

impl<'a> FrameView<'a> {
    pub fn new(videos: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let videos: Vec<&Tensor> = videos.into_iter().collect();
        let mut index = Vec::new();
        for (k, v) in videos.iter().enumerate() {
            frame_len(v)?;
            if v.shape()[1..] != videos[0].shape()[1..] {
                return Err(Error::shape("video frame shape", &videos[0].shape()[1..], &v.shape()[1..]));
            }
            index.extend((0..v.shape()[0]).map(|f| (k, f)));
        }
        Ok(FrameView { videos, index })
    }
}

impl SampleSet for FrameView<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.videos.first().map(|v| v.shape()[1..].to_vec()).unwrap_or_default()
    }

    fn copy_sample(&self, i: usize, out: &mut [f32]) {
        let (k, f) = self.index[i];
        let v = self.videos[k];
        let per: usize = v.shape()[1..].iter().product();
        out.copy_from_slice(&v.data()[f * per..(f + 1) * per]);
    }
}
