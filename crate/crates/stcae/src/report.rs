//! Report files: a JSON summary plus ROC and score CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use stcae_core::eval::{AggregateReport, ReportSummary};

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub roc: PathBuf,
    pub scores: PathBuf,
}

/// File stem for a report, e.g. `cross_C_sigma` or `within_W_mu_alpha3`.
pub fn report_stem(report: &AggregateReport) -> String {
    match report.alpha {
        Some(a) => format!("within_{}_alpha{a}", report.score_kind),
        None => format!("cross_{}", report.score_kind),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let wrap = |source| ReportError {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(wrap)?;
    f.write_all(bytes).map_err(wrap)
}

pub fn summary_json(report: &AggregateReport) -> String {
    let mut s = serde_json::to_string_pretty(&report.summary()).expect("summary serialises");
    s.push('\n');
    s
}

pub fn parse_summary(json: &str) -> serde_json::Result<ReportSummary> {
    serde_json::from_str(json)
}

/// ROC points: `video_id,threshold,fpr,tpr`. The origin has threshold `inf`.
pub fn roc_csv(report: &AggregateReport) -> String {
    let mut s = String::from("video_id,threshold,fpr,tpr\n");
    for r in &report.per_video {
        for (k, &(fpr, tpr)) in r.curve.points.iter().enumerate() {
            let threshold = if k == 0 {
                "inf".to_string()
            } else {
                format!("{}", r.curve.thresholds[k - 1])
            };
            s.push_str(&format!("{},{threshold},{fpr},{tpr}\n", r.video_id));
        }
    }
    s
}

/// Score series: `video_id,index,score,label` with 1-based frame or window
/// index and label 0/1.
pub fn scores_csv(report: &AggregateReport) -> String {
    let mut s = String::from("video_id,index,score,label\n");
    for v in &report.series {
        for (k, (score, &label)) in v.scores.iter().zip(&v.labels).enumerate() {
            s.push_str(&format!("{},{},{score},{}\n", v.video_id, k + 1, label as u8));
        }
    }
    s
}

pub fn emit_report(report: &AggregateReport, dir: &Path) -> Result<ReportFiles, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError {
        path: dir.to_path_buf(),
        source,
    })?;
    let stem = report_stem(report);
    let files = ReportFiles {
        summary: dir.join(format!("{stem}.json")),
        roc: dir.join(format!("{stem}_roc.csv")),
        scores: dir.join(format!("{stem}_scores.csv")),
    };
    write(&files.summary, summary_json(report).as_bytes())?;
    write(&files.roc, roc_csv(report).as_bytes())?;
    write(&files.scores, scores_csv(report).as_bytes())?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stcae_core::eval::{cross_context_report, alpha_sweep_reports, ErrorProfile, VideoErrors};
    use stcae_core::score::ReconErrorMatrix;

    fn profiles() -> Vec<ErrorProfile> {
        (0..2)
            .map(|k| {
                let v = 20;
                let labels: Vec<bool> = (0..v).map(|j| j >= 10 + k).collect();
                let errors: Vec<f64> = (0..(v - 7) * 8).map(|i| ((i * 31 + k) % 17) as f64 * 0.5).collect();
                ErrorProfile {
                    id: format!("v{k}"),
                    labels,
                    errors: VideoErrors::Windows(ReconErrorMatrix::new(format!("v{k}"), 8, errors).unwrap()),
                }
            })
            .collect()
    }

    #[test]
    fn json_round_trip_and_csv_rows() {
        let report = cross_context_report("DSTCAE-C3D", &profiles(), stcae_core::eval::ScoreKind::CSigma).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&report, dir.path()).unwrap();
        let back = parse_summary(&fs::read_to_string(&files.summary).unwrap()).unwrap();
        assert_eq!(back, report.summary());
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.summary).unwrap()).unwrap();
        assert!(json.get("alpha").is_none());
        assert_eq!(json["score_kind"], "C_sigma");

        let roc = fs::read_to_string(&files.roc).unwrap();
        for r in &report.per_video {
            let rows = roc.lines().filter(|l| l.starts_with(&format!("{},", r.video_id))).count();
            assert_eq!(rows, r.curve.thresholds.len() + 1);
        }
        let scores = fs::read_to_string(&files.scores).unwrap();
        assert_eq!(scores.lines().count(), 1 + 2 * 20);
    }

    #[test]
    fn sweep_writes_one_summary_per_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let reports = alpha_sweep_reports("m", &profiles(), stcae_core::eval::ScoreKind::WMu).unwrap();
        for r in &reports {
            emit_report(r, dir.path()).unwrap();
        }
        let n = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"))
            .count();
        assert_eq!(n, reports.len());
        assert_eq!(n, 8);
    }
}
