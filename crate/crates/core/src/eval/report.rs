use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::RocCurve;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(rename = "C_mu")]
    CMu,
    #[serde(rename = "C_sigma")]
    CSigma,
    /// Plain per-frame reconstruction error of a frame model.
    #[serde(rename = "frame_error")]
    FrameError,
    #[serde(rename = "W_mu")]
    WMu,
    #[serde(rename = "W_sigma")]
    WSigma,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [
        ScoreKind::CMu,
        ScoreKind::CSigma,
        ScoreKind::FrameError,
        ScoreKind::WMu,
        ScoreKind::WSigma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::CMu => "C_mu",
            ScoreKind::CSigma => "C_sigma",
            ScoreKind::FrameError => "frame_error",
            ScoreKind::WMu => "W_mu",
            ScoreKind::WSigma => "W_sigma",
        }
    }

    /// Scores windows rather than frames.
    pub fn is_within_context(self) -> bool {
        matches!(self, ScoreKind::WMu | ScoreKind::WSigma)
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown score kind {s:?}")))
    }
}

/// ROC of one test video.
#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    pub video_id: String,
    pub curve: RocCurve,
    pub auc: f64,
}

/// Scores and ground truth of one video, one entry per frame or window.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScores {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub model: String,
    pub score_kind: ScoreKind,
    pub alpha: Option<usize>,
    /// Videos with both classes present.
    pub per_video: Vec<RocResult>,
    /// Every scored video, including skipped ones.
    pub series: Vec<VideoScores>,
    /// Videos left out because their labels were single-class.
    pub skipped: Vec<String>,
    pub mean_auc: f64,
    /// Population standard deviation across videos.
    pub std_auc: f64,
}

impl AggregateReport {
    pub fn new(
        model: String,
        score_kind: ScoreKind,
        alpha: Option<usize>,
        per_video: Vec<RocResult>,
        series: Vec<VideoScores>,
        skipped: Vec<String>,
    ) -> Result<Self> {
        if per_video.is_empty() {
            return Err(Error::DegenerateLabels);
        }
        let (mean_auc, std_auc) = mean_std(per_video.iter().map(|r| r.auc));
        Ok(AggregateReport {
            model,
            score_kind,
            alpha,
            per_video,
            series,
            skipped,
            mean_auc,
            std_auc,
        })
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            model: self.model.clone(),
            score_kind: self.score_kind,
            alpha: self.alpha,
            per_video: self
                .per_video
                .iter()
                .map(|r| VideoAuc {
                    id: r.video_id.clone(),
                    auc: r.auc,
                })
                .collect(),
            mean_auc: self.mean_auc,
            std_auc: self.std_auc,
        }
    }
}

pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt64(var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAuc {
    pub id: String,
    pub auc: f64,
}

/// Serialisable summary of an [`AggregateReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub model: String,
    pub score_kind: ScoreKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<usize>,
    pub per_video: Vec<VideoAuc>,
    pub mean_auc: f64,
    pub std_auc: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(id: &str, auc: f64) -> RocResult {
        RocResult {
            video_id: id.into(),
            curve: RocCurve {
                points: alloc::vec![(0.0, 0.0), (1.0, 1.0)],
                thresholds: alloc::vec![0.0],
            },
            auc,
        }
    }

    #[test]
    fn two_point_aggregate() {
        let r = AggregateReport::new(
            "m".into(),
            ScoreKind::CSigma,
            None,
            alloc::vec![result("a", 0.8), result("b", 1.0)],
            Vec::new(),
            Vec::new(),
        )
        .unwrap();
        assert!((r.mean_auc - 0.9).abs() < 1e-12);
        assert!((r.std_auc - 0.1).abs() < 1e-12);
        let s = r.summary();
        assert_eq!(s.per_video[1].id, "b");
    }

    #[test]
    fn empty_aggregate_is_degenerate() {
        let e = AggregateReport::new("m".into(), ScoreKind::CMu, None, Vec::new(), Vec::new(), Vec::new());
        assert_eq!(e.unwrap_err(), Error::DegenerateLabels);
    }

    #[test]
    fn score_kind_names() {
        for k in ScoreKind::ALL {
            assert_eq!(k.as_str().parse::<ScoreKind>().unwrap(), k);
        }
        assert!("c_sigma".parse::<ScoreKind>().is_ok());
        assert!("sigma".parse::<ScoreKind>().is_err());
    }
}
