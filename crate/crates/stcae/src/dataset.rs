//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.csv        id,role,fps
//! <root>/annotations.csv     id,start,end   (1-based, inclusive)
//! <root>/videos/<id>/frame_000001.png | .pgm
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::DynamicImage;
use rayon::prelude::*;
use serde::Deserialize;
use stcae_core::preprocess::{luminance, prepare_frame, Plane};
use stcae_core::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: cannot decode image: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path} line {line}: {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("video {id}: {message}")]
    Video { id: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    TrainAdl,
    TestFall,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::TrainAdl => "train_adl",
            Role::TestFall => "test_fall",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train_adl" => Ok(Role::TrainAdl),
            "test_fall" => Ok(Role::TestFall),
            other => Err(format!("unknown role {other:?}, expected train_adl or test_fall")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoManifest {
    pub id: String,
    pub role: Role,
    /// Frame files in temporal order.
    pub frame_paths: Vec<PathBuf>,
    pub fps: f64,
}

impl VideoManifest {
    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }
}

/// Fall frames of one video as sorted, disjoint, 1-based inclusive ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FallAnnotation {
    pub id: String,
    pub ranges: Vec<(usize, usize)>,
}

impl FallAnnotation {
    /// One flag per frame for a video of `frames` frames.
    pub fn labels(&self, frames: usize) -> Vec<bool> {
        let mut out = vec![false; frames];
        for &(a, b) in &self.ranges {
            for flag in &mut out[a - 1..b.min(frames)] {
                *flag = true;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub videos: Vec<VideoManifest>,
    /// Keyed by video id; videos without an entry have no fall frames.
    pub annotations: BTreeMap<String, FallAnnotation>,
}

impl Dataset {
    pub fn videos_with_role(&self, role: Role) -> impl Iterator<Item = &VideoManifest> {
        self.videos.iter().filter(move |v| v.role == role)
    }

    pub fn labels(&self, video: &VideoManifest) -> Vec<bool> {
        match self.annotations.get(&video.id) {
            Some(a) => a.labels(video.frame_count()),
            None => vec![false; video.frame_count()],
        }
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    id: String,
    role: String,
    fps: f64,
}

#[derive(Deserialize)]
struct AnnotationRow {
    id: String,
    start: usize,
    end: usize,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => DataError::Csv {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: T = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            DataError::Invalid {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        // Header is line 1.
        rows.push((rows.len() + 2, row));
    }
    Ok(rows)
}

/// Frame files of one video, sorted by number. Numbering must run 1..=V.
fn list_frames(dir: &Path, id: &str) -> Result<Vec<PathBuf>, DataError> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some((stem, ext)) = name.rsplit_once('.') else {
            continue;
        };
        if !matches!(ext.to_ascii_lowercase().as_str(), "png" | "pgm") {
            continue;
        }
        if let Some(num) = stem.strip_prefix("frame_").filter(|n| n.len() == 6) {
            if let Ok(n) = num.parse::<usize>() {
                frames.push((n, path));
            }
        }
    }
    frames.sort();
    for (k, (n, path)) in frames.iter().enumerate() {
        if *n != k + 1 {
            return Err(DataError::Video {
                id: id.into(),
                message: format!("frame numbering is not contiguous from 1 at {}", path.display()),
            });
        }
    }
    if frames.is_empty() {
        return Err(DataError::Video {
            id: id.into(),
            message: format!("no frame_NNNNNN.png or .pgm files in {}", dir.display()),
        });
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Reads `manifest.csv`, lists frame files and validates `annotations.csv`
/// against the frame counts. A missing annotations file means no falls.
pub fn load_manifest(root: &Path) -> Result<Dataset, DataError> {
    let manifest_path = root.join("manifest.csv");
    let mut videos = Vec::new();
    let mut seen = BTreeMap::new();
    for (line, row) in read_csv::<ManifestRow>(&manifest_path)? {
        let invalid = |message: String| DataError::Invalid {
            path: manifest_path.clone(),
            line,
            message,
        };
        let role = row.role.parse::<Role>().map_err(invalid)?;
        if seen.insert(row.id.clone(), videos.len()).is_some() {
            return Err(invalid(format!("duplicate video id {:?}", row.id)));
        }
        let frame_paths = list_frames(&root.join("videos").join(&row.id), &row.id)?;
        videos.push(VideoManifest {
            id: row.id,
            role,
            frame_paths,
            fps: row.fps,
        });
    }

    let ann_path = root.join("annotations.csv");
    let mut annotations: BTreeMap<String, FallAnnotation> = BTreeMap::new();
    if ann_path.exists() {
        for (line, row) in read_csv::<AnnotationRow>(&ann_path)? {
            let invalid = |message: String| DataError::Invalid {
                path: ann_path.clone(),
                line,
                message,
            };
            let Some(&k) = seen.get(&row.id) else {
                return Err(invalid(format!("unknown video id {:?}", row.id)));
            };
            let frames = videos[k].frame_count();
            if row.start == 0 || row.start > row.end || row.end > frames {
                return Err(invalid(format!(
                    "range {}..{} is outside 1..={frames}",
                    row.start, row.end
                )));
            }
            annotations
                .entry(row.id.clone())
                .or_insert_with(|| FallAnnotation {
                    id: row.id.clone(),
                    ranges: Vec::new(),
                })
                .ranges
                .push((row.start, row.end));
        }
        for ann in annotations.values_mut() {
            ann.ranges.sort_unstable();
            if let Some(w) = ann.ranges.windows(2).find(|w| w[1].0 <= w[0].1) {
                return Err(DataError::Invalid {
                    path: ann_path.clone(),
                    line: 0,
                    message: format!("video {}: ranges {:?} and {:?} overlap", ann.id, w[0], w[1]),
                });
            }
        }
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        videos,
        annotations,
    })
}

/// 8-bit grayscale pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Decodes a PNG or PGM frame to 8-bit grayscale. Colour images are reduced
/// with BT.601 luma; 16-bit samples are scaled to 8 bits.
pub fn decode_frame(path: &Path) -> Result<GrayFrame, DataError> {
    let img = image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| DataError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| ((p.0[0] as u32 + 128) / 257) as u8).collect(),
        other => other.to_rgb8().pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
    };
    Ok(GrayFrame { width, height, pixels })
}

/// Fraction of pixels that are exactly zero.
pub fn zero_fraction(frame: &GrayFrame) -> f64 {
    frame.pixels.iter().filter(|&&p| p == 0).count() as f64 / frame.pixels.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadOptions {
    /// Warn about frames where more than 5% of pixels are exactly zero,
    /// which usually means unfilled depth holes.
    pub expect_filled: bool,
}

/// Decodes, resizes and normalises every frame of a video into a
/// `(V, 64, 64, 1)` tensor. Frames are processed in parallel; the result
/// does not depend on the thread count.
pub fn load_video(video: &VideoManifest, opts: LoadOptions) -> Result<Tensor, DataError> {
    let frames = video
        .frame_paths
        .par_iter()
        .map(|path| {
            let frame = decode_frame(path)?;
            if opts.expect_filled {
                let z = zero_fraction(&frame);
                if z > 0.05 {
                    log::warn!("{}: {:.1}% of pixels are 0; holes may be unfilled", path.display(), z * 100.0);
                }
            }
            let plane = Plane::from_gray8(frame.width, frame.height, &frame.pixels).map_err(|e| {
                DataError::Image {
                    path: path.clone(),
                    message: e.to_string(),
                }
            })?;
            prepare_frame(&plane).map_err(|e| DataError::Image {
                path: path.clone(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Tensor::stack(&frames).map_err(|e| DataError::Video {
        id: video.id.clone(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_png(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
        let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y)));
        img.save(path).unwrap();
    }

    fn layout(root: &Path, videos: &[(&str, &str, usize)], annotations: &str) {
        let mut manifest = String::from("id,role,fps\n");
        for &(id, role, n) in videos {
            manifest.push_str(&format!("{id},{role},25\n"));
            let dir = root.join("videos").join(id);
            fs::create_dir_all(&dir).unwrap();
            for k in 1..=n {
                let img = image::GrayImage::from_pixel(4, 4, image::Luma([k as u8 * 10]));
                img.save(dir.join(format!("frame_{k:06}.png"))).unwrap();
            }
        }
        fs::write(root.join("manifest.csv"), manifest).unwrap();
        fs::write(root.join("annotations.csv"), annotations).unwrap();
    }

    #[test]
    fn loads_layout_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        layout(dir.path(), &[("a", "train_adl", 9), ("b", "test_fall", 20)], "id,start,end\nb,5,10\n");
        let ds = load_manifest(dir.path()).unwrap();
        assert_eq!(ds.videos.len(), 2);
        assert_eq!(ds.videos[1].frame_count(), 20);
        let labels = ds.labels(&ds.videos[1]);
        let falls: Vec<usize> = (1..=20).filter(|&j| labels[j - 1]).collect();
        assert_eq!(falls, (5..=10).collect::<Vec<_>>());
        assert!(ds.labels(&ds.videos[0]).iter().all(|&l| !l));
        let t = load_video(&ds.videos[0], LoadOptions::default()).unwrap();
        assert_eq!(t.shape(), &[9, 64, 64, 1]);
        // Constant frames normalise to zero.
        assert!(t.data().iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn empty_annotations_mean_no_falls() {
        let dir = tempfile::tempdir().unwrap();
        layout(dir.path(), &[("b", "test_fall", 8)], "id,start,end\n");
        let ds = load_manifest(dir.path()).unwrap();
        assert!(ds.labels(&ds.videos[0]).iter().all(|&l| !l));
    }

    #[test]
    fn rejects_bad_annotations() {
        for (ann, needle) in [
            ("id,start,end\nb,5,10\nb,8,12\n", "overlap"),
            ("id,start,end\nb,0,3\n", "outside"),
            ("id,start,end\nb,3,30\n", "outside"),
            ("id,start,end\nzz,1,2\n", "unknown video"),
            ("id,start,end\nb,x,2\n", "line 2"),
        ] {
            let dir = tempfile::tempdir().unwrap();
            layout(dir.path(), &[("b", "test_fall", 20)], ann);
            let err = load_manifest(dir.path()).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
        }
    }

    #[test]
    fn missing_manifest_and_bad_role() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(DataError::Io { .. })));
        layout(dir.path(), &[("a", "walking", 8)], "id,start,end\n");
        let err = load_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("unknown role"), "{err}");
    }

    #[test]
    fn gaps_in_numbering_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        layout(dir.path(), &[("a", "train_adl", 9)], "id,start,end\n");
        fs::remove_file(dir.path().join("videos/a/frame_000004.png")).unwrap();
        assert!(load_manifest(dir.path()).unwrap_err().to_string().contains("contiguous"));
    }

    #[test]
    fn decodes_white_red_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let white = dir.path().join("w.png");
        write_png(&white, 5, 3, |_, _| [255, 255, 255]);
        let f = decode_frame(&white).unwrap();
        assert_eq!((f.width, f.height), (5, 3));
        assert!(f.pixels.iter().all(|&p| p == 255));

        let red = dir.path().join("r.png");
        write_png(&red, 2, 2, |_, _| [255, 0, 0]);
        assert!(decode_frame(&red).unwrap().pixels.iter().all(|&p| p == 76));

        let pixels: Vec<u8> = (0..=255).collect();
        let mut pgm = b"P5\n16 16\n255\n".to_vec();
        pgm.extend_from_slice(&pixels);
        let p = dir.path().join("g.pgm");
        fs::write(&p, pgm).unwrap();
        let g = decode_frame(&p).unwrap();
        assert_eq!(g.pixels, pixels);

        let junk = dir.path().join("j.png");
        fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(decode_frame(&junk), Err(DataError::Image { .. })));
    }

    #[test]
    fn zero_fraction_detects_holes() {
        let f = GrayFrame {
            width: 10,
            height: 10,
            pixels: (0..100).map(|i| if i < 6 { 0 } else { 90 }).collect(),
        };
        assert!((zero_fraction(&f) - 0.06).abs() < 1e-12);
    }
}
