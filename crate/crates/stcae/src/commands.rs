//! The `inspect`, `train`, `evaluate` and `synth` commands.

use std::fs;
use std::path::{Path, PathBuf};

use stcae_core::arch::{build_model, ModelParams, Variant};
use stcae_core::eval::{
    cross_context_report, error_profile, within_context_report, AggregateReport, ErrorProfile, ScoreKind, TestVideo,
};
use stcae_core::synth::{generate, SynthConfig};
use stcae_core::train::{fit_with, SampleSet};
use stcae_core::window::{window_count, FrameView, WindowConfig, WindowedVideos};
use stcae_core::{checkpoint, Error};

use crate::config::{RunConfig, ScoreContext, ScoreStat};
use crate::dataset::{load_manifest, load_video, LoadOptions, Role};
use crate::error::CliError;
use crate::report::{emit_report, ReportFiles};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn save_checkpoint(path: &Path, variant: Variant, params: &ModelParams) -> Result<(), CliError> {
    write_file(path, checkpoint::encode(variant.slug(), params))
}

/// Reads a checkpoint and checks it against the variant it names.
pub fn load_checkpoint(path: &Path) -> Result<(Variant, ModelParams), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let (name, params) =
        checkpoint::decode(&bytes).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let variant: Variant = name
        .parse()
        .map_err(|_| CliError::Checkpoint(format!("{}: unknown variant {name:?}", path.display())))?;
    params.check_against(&build_model(variant)).map_err(|e| {
        CliError::Checkpoint(format!("{}: parameters do not fit {variant}: {e}", path.display()))
    })?;
    Ok((variant, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSummary {
    pub id: String,
    pub role: Role,
    pub frames: usize,
    /// `None` when the video is shorter than the window.
    pub windows: Option<usize>,
    pub fall_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectSummary {
    pub videos: Vec<VideoSummary>,
    pub total_windows: usize,
    pub train_windows: usize,
}

pub fn inspect(root: &Path, window: usize) -> Result<InspectSummary, CliError> {
    let ds = load_manifest(root)?;
    let cfg = WindowConfig {
        length: window,
        stride: 1,
    };
    let videos: Vec<VideoSummary> = ds
        .videos
        .iter()
        .map(|v| VideoSummary {
            id: v.id.clone(),
            role: v.role,
            frames: v.frame_count(),
            windows: window_count(v.frame_count(), &cfg).ok(),
            fall_frames: ds.labels(v).iter().filter(|&&l| l).count(),
        })
        .collect();
    let total_windows = videos.iter().filter_map(|v| v.windows).sum();
    let train_windows = videos
        .iter()
        .filter(|v| v.role == Role::TrainAdl)
        .filter_map(|v| v.windows)
        .sum();
    println!("{:<24} {:<10} {:>8} {:>8} {:>6}", "id", "role", "frames", "windows", "falls");
    for v in &videos {
        let w = v.windows.map_or("-".to_string(), |w| w.to_string());
        println!("{:<24} {:<10} {:>8} {:>8} {:>6}", v.id, v.role, v.frames, w, v.fall_frames);
    }
    println!("videos: {}  windows (T={window}, B=1): {total_windows}  of which train_adl: {train_windows}", videos.len());
    Ok(InspectSummary {
        videos,
        total_windows,
        train_windows,
    })
}

fn load_role(cfg: &RunConfig, role: Role) -> Result<Vec<(String, stcae_core::Tensor, Vec<bool>)>, CliError> {
    let ds = load_manifest(cfg.data_root()?)?;
    let opts = LoadOptions {
        expect_filled: cfg.data.expect_filled,
    };
    ds.videos_with_role(role)
        .map(|v| Ok((v.id.clone(), load_video(v, opts)?, ds.labels(v))))
        .collect()
}

fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (k, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", k + 1));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub loss_history: Vec<f64>,
}

/// Trains on the `train_adl` videos and writes `model.ckpt`, `loss.csv`,
/// `config.toml` and any interval checkpoints to the output directory.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let mut cfg = cfg.clone();
    let variant = cfg.variant()?;
    cfg.model.variant = Some(variant.slug().into());
    cfg.resolve_train()?;
    let tcfg = cfg.train_config()?;
    let out = cfg.output_dir()?.to_path_buf();
    create_dir(&out)?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;

    let videos = load_role(&cfg, Role::TrainAdl)?;
    if videos.is_empty() {
        return Err(CliError::Data("the dataset has no train_adl videos".into()));
    }
    let spec = build_model(variant);
    if tcfg.augment {
        log::info!("{variant}: horizontal-flip augmentation enabled");
    }
    let tensors = videos.iter().map(|v| &v.1);
    let data: Box<dyn SampleSet + '_> = if variant.is_spatio_temporal() {
        let view = WindowedVideos::new(
            tensors,
            WindowConfig {
                length: spec.input_shape()[0],
                stride: 1,
            },
        )?;
        for &k in view.skipped() {
            log::warn!("video {} is shorter than the window and is not used", videos[k].0);
        }
        Box::new(view)
    } else {
        Box::new(FrameView::new(tensors)?)
    };
    log::info!("training {variant} on {} samples for {} epochs", data.len(), tcfg.epochs);

    let ckpt_dir = out.join("checkpoints");
    let mut history = Vec::new();
    let mut io_error = None;
    let result = fit_with(&spec, &*data, &tcfg, &mut |report, params| {
        history.push(report.mean_loss);
        log::info!("epoch {}/{}: loss {:.6}", report.epoch, tcfg.epochs, report.mean_loss);
        if report.checkpoint_due && io_error.is_none() {
            let path = ckpt_dir.join(format!("epoch_{:04}.ckpt", report.epoch));
            if let Err(e) = create_dir(&ckpt_dir).and_then(|_| save_checkpoint(&path, variant, params)) {
                io_error = Some(e);
            }
        }
    });
    let loss_path = out.join("loss.csv");
    write_file(&loss_path, loss_csv(&history))?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let outcome = result?;
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&ckpt, variant, &outcome.params)?;
    Ok(TrainSummary {
        checkpoint: ckpt,
        loss_csv: loss_path,
        loss_history: outcome.loss_history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSummary {
    pub reports: Vec<AggregateReport>,
    pub files: Vec<ReportFiles>,
}

fn score_kind(variant: Variant, context: ScoreContext, stat: ScoreStat) -> Result<ScoreKind, CliError> {
    Ok(match (variant.is_spatio_temporal(), context, stat) {
        (false, ScoreContext::Within, _) => {
            return Err(CliError::Data(format!(
                "within-context scores can only be computed for the DSTCAE variants, not {variant}"
            )))
        }
        (false, ScoreContext::Cross, _) => ScoreKind::FrameError,
        (true, ScoreContext::Cross, ScoreStat::Mu) => ScoreKind::CMu,
        (true, ScoreContext::Cross, ScoreStat::Sigma) => ScoreKind::CSigma,
        (true, ScoreContext::Within, ScoreStat::Mu) => ScoreKind::WMu,
        (true, ScoreContext::Within, ScoreStat::Sigma) => ScoreKind::WSigma,
    })
}

/// Scores the `test_fall` videos with a trained checkpoint and writes one
/// report per score kind (or per alpha in a sweep).
pub fn evaluate(cfg: &RunConfig, checkpoint_path: &Path) -> Result<EvaluateSummary, CliError> {
    let (variant, params) = load_checkpoint(checkpoint_path)?;
    if cfg.model.variant.is_some() {
        let requested = cfg.variant()?;
        if requested != variant {
            return Err(CliError::Checkpoint(format!(
                "{} holds a {variant} model, but {requested} was requested",
                checkpoint_path.display()
            )));
        }
    }
    let kind = score_kind(variant, cfg.eval.score, cfg.eval.stat)?;
    if !variant.is_spatio_temporal() && cfg.eval.stat == ScoreStat::Mu {
        log::info!("{variant} is scored by per-frame reconstruction error; --stat is ignored");
    }
    let mut cfg = cfg.clone();
    cfg.model.variant = Some(variant.slug().into());
    let out = cfg.output_dir()?.to_path_buf();
    create_dir(&out)?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;

    let spec = build_model(variant);
    let mut profiles: Vec<ErrorProfile> = Vec::new();
    for (id, frames, labels) in load_role(&cfg, Role::TestFall)? {
        let video = TestVideo { id, frames, labels };
        match error_profile(&spec, &params, &video, cfg.eval.batch_size) {
            Ok(p) => profiles.push(p),
            Err(Error::VideoTooShort { frames, window, .. }) => {
                log::warn!("skipping video {}: {frames} frames is shorter than the {window}-frame window", video.id);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if profiles.is_empty() {
        return Err(CliError::Data("no usable test_fall videos".into()));
    }

    let model = variant.name();
    let reports = if kind.is_within_context() {
        let window = spec.input_shape()[0];
        let alphas: Vec<usize> = match (cfg.eval.alpha_sweep, cfg.eval.alpha) {
            (true, _) => (1..=window).collect(),
            (false, Some(a)) => vec![a],
            (false, None) => {
                return Err(CliError::Data(
                    "within-context evaluation needs --alpha or --alpha-sweep".into(),
                ))
            }
        };
        let mut reports = Vec::new();
        for a in alphas {
            match within_context_report(model, &profiles, kind, a) {
                Ok(r) => reports.push(r),
                Err(Error::DegenerateLabels) if cfg.eval.alpha_sweep => {
                    log::warn!("alpha {a}: no video has both fall and non-fall windows; no report written");
                }
                Err(e) => return Err(e.into()),
            }
        }
        reports
    } else {
        vec![cross_context_report(model, &profiles, kind)?]
    };

    let mut files = Vec::new();
    for r in &reports {
        let alpha = r.alpha.map_or(String::new(), |a| format!(" alpha={a}"));
        println!(
            "{model} {}{alpha}: mean AUC {:.4} (std {:.4}) over {} videos",
            r.score_kind,
            r.mean_auc,
            r.std_auc,
            r.per_video.len()
        );
        files.push(emit_report(r, &out)?);
    }
    Ok(EvaluateSummary { reports, files })
}

/// Writes the synthetic dataset in the on-disk layout.
pub fn synth(out: &Path, cfg: &SynthConfig) -> Result<(), CliError> {
    let data = generate(cfg);
    let mut manifest = String::from("id,role,fps\n");
    let mut annotations = String::from("id,start,end\n");
    let videos = data
        .train
        .iter()
        .map(|v| (v, Role::TrainAdl))
        .chain(data.test.iter().map(|v| (v, Role::TestFall)));
    for (video, role) in videos {
        manifest.push_str(&format!("{},{role},10\n", video.id));
        if let Some((a, b)) = video.fall {
            annotations.push_str(&format!("{},{a},{b}\n", video.id));
        }
        let dir = out.join("videos").join(&video.id);
        create_dir(&dir)?;
        for (k, frame) in video.frames.iter().enumerate() {
            let size = stcae_core::FRAME_SIZE as u32;
            let img = image::GrayImage::from_raw(size, size, frame.clone()).expect("frame size");
            let path = dir.join(format!("frame_{:06}.png", k + 1));
            img.save(&path)
                .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        }
    }
    write_file(&out.join("manifest.csv"), manifest)?;
    write_file(&out.join("annotations.csv"), annotations)?;
    write_file(
        &out.join("synth.toml"),
        toml::to_string(cfg).expect("synth config serialises"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_format() {
        assert_eq!(loss_csv(&[1.5, 0.25]), "epoch,mean_loss\n1,1.5\n2,0.25\n");
    }

    #[test]
    fn score_kinds() {
        assert_eq!(score_kind(Variant::Dae, ScoreContext::Cross, ScoreStat::Sigma).unwrap(), ScoreKind::FrameError);
        assert!(score_kind(Variant::CaeDeconv, ScoreContext::Within, ScoreStat::Mu).is_err());
        assert_eq!(
            score_kind(Variant::DstcaeDeconv, ScoreContext::Within, ScoreStat::Sigma).unwrap(),
            ScoreKind::WSigma
        );
    }

    #[test]
    fn synth_layout_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            train_videos: 2,
            train_frames: 9,
            test_videos: 1,
            test_frames: 12,
            ..Default::default()
        };
        synth(dir.path(), &cfg).unwrap();
        let ds = load_manifest(dir.path()).unwrap();
        assert_eq!(ds.videos.len(), 3);
        let data = generate(&cfg);
        let test = &ds.videos[2];
        assert_eq!(ds.labels(test), data.test[0].labels());
        let frame = crate::dataset::decode_frame(&test.frame_paths[0]).unwrap();
        assert_eq!(frame.pixels, data.test[0].frames[0]);
        let summary = inspect(dir.path(), 8).unwrap();
        assert_eq!(summary.total_windows, 2 + 2 + 5);
        assert_eq!(summary.train_windows, 4);
    }

    #[test]
    fn checkpoint_variant_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let params = ModelParams::zeros(&build_model(Variant::CaeDeconv));
        save_checkpoint(&path, Variant::CaeDeconv, &params).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().0, Variant::CaeDeconv);
        // Parameters that do not fit the named variant.
        write_file(&path, checkpoint::encode("dae", &params)).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap_err().exit_code(), 4);
        write_file(&path, b"garbage").unwrap();
        assert_eq!(load_checkpoint(&path).unwrap_err().exit_code(), 4);
    }
}
