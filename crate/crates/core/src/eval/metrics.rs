use alloc::vec::Vec;

use crate::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores vs labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    Ok((pos, neg))
}

/// Indices sorted by ascending score.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Area under the ROC curve with `true` as the positive class, via the
/// Mann-Whitney statistic on midranks. Tied positive/negative pairs count
/// one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let idx = ascending(scores);
    // Twice the rank sum keeps midranks integral.
    let mut rank_sum_x2 = 0u128;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end share the midrank (start + 1 + end) / 2.
        let mid_x2 = (start + 1 + end) as u128;
        let tied_pos = idx[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        rank_sum_x2 += mid_x2 * tied_pos;
        start = end;
    }
    let p = pos as u128;
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC operating points, one per distinct score threshold plus the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(false-positive rate, true-positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    /// Threshold of each point after the first; a sample is called positive
    /// when its score is at least the threshold.
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Trapezoidal area under the points.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
            .sum()
    }
}

pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check(scores, labels)?;
    let mut idx = ascending(scores);
    idx.reverse();
    let mut points = alloc::vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(s);
    }
    Ok(RocCurve { points, thresholds })
}
