//! Seeded synthetic fall dataset: a bright elliptical figure on a dark
//! floor scene. Training videos show walking, pausing and slow crouching.
//! Test videos walk, collapse abruptly to the floor, thrash there, get up
//! and walk on; the collapse, floor and rising frames are labelled as the
//! fall.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::preprocess::{normalize, Plane};
use crate::{Result, Tensor, FRAME_SIZE};

const FLOOR: f32 = 56.0;
const BACKGROUND: f32 = 28.0;
const FIGURE: f32 = 210.0;
const HALF_WIDTH: f32 = 4.0;
const HALF_HEIGHT: f32 = 11.0;
const COLLAPSE_FRAMES: usize = 4;
const LYING_FRAMES: usize = 8;
const RISE_FRAMES: usize = 4;
const FALL_FRAMES: usize = COLLAPSE_FRAMES + LYING_FRAMES + RISE_FRAMES;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_videos: usize,
    pub train_frames: usize,
    pub test_videos: usize,
    pub test_frames: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            train_videos: 6,
            train_frames: 24,
            test_videos: 4,
            test_frames: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub id: String,
    /// 64x64 8-bit grayscale frames, row-major.
    pub frames: Vec<Vec<u8>>,
    /// 1-based inclusive range of fall frames.
    pub fall: Option<(usize, usize)>,
}

impl SynthVideo {
    pub fn labels(&self) -> Vec<bool> {
        (1..=self.frames.len())
            .map(|j| self.fall.is_some_and(|(a, b)| a <= j && j <= b))
            .collect()
    }

    /// Normalised `(V, 64, 64, 1)` frames.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let frames = self
            .frames
            .iter()
            .map(|f| normalize(&Plane::from_gray8(FRAME_SIZE, FRAME_SIZE, f).expect("frame size")))
            .collect::<Vec<_>>();
        let stacked = Tensor::stack(&frames)?;
        Ok(stacked)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<SynthVideo>,
    pub test: Vec<SynthVideo>,
}

/// Figure pose: centre, semi-axes and tilt from vertical (radians).
#[derive(Debug, Clone, Copy)]
struct Pose {
    cx: f32,
    cy: f32,
    half_w: f32,
    half_h: f32,
    tilt: f32,
}

impl Pose {
    fn upright(cx: f32, half_h: f32, bob: f32) -> Self {
        Pose {
            cx,
            cy: FLOOR - half_h + bob,
            half_w: HALF_WIDTH,
            half_h,
            tilt: 0.0,
        }
    }

    /// Interpolates from upright at `from_x` to lying on the floor; `t` in 0..=1.
    fn falling(from_x: f32, direction: f32, t: f32) -> Self {
        Self::on_floor(from_x, direction, t, 0.0, 0.0)
    }

    /// Lying pose at progress `t` with an extra tilt and horizontal shift.
    fn on_floor(from_x: f32, direction: f32, t: f32, twist: f32, shift: f32) -> Self {
        let tilt = (t * core::f32::consts::FRAC_PI_2 + twist) * direction;
        let half_w = HALF_WIDTH + (3.5 - HALF_WIDTH) * t;
        // Height of the tilted ellipse's lowest point above its centre.
        let (s, c) = (math::sin(tilt), math::cos(tilt));
        let reach = math::sqrt(HALF_HEIGHT * HALF_HEIGHT * c * c + half_w * half_w * s * s);
        Pose {
            cx: from_x + direction * (HALF_HEIGHT * 0.9 * t + shift),
            cy: FLOOR - reach,
            half_w,
            half_h: HALF_HEIGHT,
            tilt,
        }
    }
}

fn render(pose: Pose, rng: &mut ChaCha8Rng) -> Vec<u8> {
    const SUB: usize = 3;
    let (s, c) = (math::sin(pose.tilt), math::cos(pose.tilt));
    let mut out = Vec::with_capacity(FRAME_SIZE * FRAME_SIZE);
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            let mut inside = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let px = x as f32 + (sx as f32 + 0.5) / SUB as f32 - pose.cx;
                    let py = y as f32 + (sy as f32 + 0.5) / SUB as f32 - pose.cy;
                    let u = c * px + s * py;
                    let v = -s * px + c * py;
                    let (a, b) = (u / pose.half_w, v / pose.half_h);
                    if a * a + b * b <= 1.0 {
                        inside += 1;
                    }
                }
            }
            let cover = inside as f32 / (SUB * SUB) as f32;
            let floor = if y as f32 >= FLOOR { 16.0 } else { 0.0 };
            let noise: f32 = rng.random_range(-3.0..3.0);
            let v = BACKGROUND + floor + cover * (FIGURE - BACKGROUND - floor) + noise;
            out.push(math::round64(v.clamp(0.0, 255.0) as f64) as u8);
        }
    }
    out
}

/// Walks across the scene from a random start, turning at the edges.
/// Returns the poses and the final position and heading.
fn walk(rng: &mut ChaCha8Rng, frames: usize, crouch: bool) -> (Vec<Pose>, f32, f32) {
    let x = rng.random_range(14.0..50.0);
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    walk_from(rng, frames, crouch, x, dir)
}

fn walk_from(rng: &mut ChaCha8Rng, frames: usize, crouch: bool, mut x: f32, mut dir: f32) -> (Vec<Pose>, f32, f32) {
    let speed: f32 = rng.random_range(0.6..1.6);
    let phase: f32 = rng.random_range(0.0..6.0);
    let pause_at = rng.random_range(0..frames.max(1));
    let crouch_at = rng.random_range(0..frames.saturating_sub(12).max(1));
    let mut poses = Vec::with_capacity(frames);
    for k in 0..frames {
        let paused = k >= pause_at && k < pause_at + 4;
        let mut half_h = HALF_HEIGHT;
        if crouch && k >= crouch_at && k < crouch_at + 12 {
            // Slow dip to about 60% height and back.
            let t = (k - crouch_at) as f32 / 11.0;
            half_h -= 4.5 * math::sin(t * core::f32::consts::PI);
        }
        let bob = if paused { 0.0 } else { 0.6 * math::sin(phase + k as f32 * 1.3) };
        poses.push(Pose::upright(x, half_h, bob));
        if !paused {
            x += dir * speed;
            if !(8.0..=56.0).contains(&x) {
                dir = -dir;
                x += 2.0 * dir * speed;
            }
        }
    }
    (poses, x, dir)
}

pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = (0..cfg.train_videos)
        .map(|k| {
            let (poses, ..) = walk(&mut rng, cfg.train_frames, k % 2 == 1);
            SynthVideo {
                id: format!("adl{:02}", k + 1),
                frames: poses.into_iter().map(|p| render(p, &mut rng)).collect(),
                fall: None,
            }
        })
        .collect();
    let test = (0..cfg.test_videos)
        .map(|k| {
            let frames = cfg.test_frames;
            let lo = (frames * 2 / 5).max(1);
            let hi = (frames * 11 / 20).max(lo + 1);
            let onset = rng.random_range(lo..hi).min(frames.saturating_sub(FALL_FRAMES));
            let (mut poses, x, dir) = walk(&mut rng, onset, false);
            let from_x = x.clamp(18.0, 46.0);
            for f in 0..FALL_FRAMES.min(frames - onset) {
                let pose = if f < COLLAPSE_FRAMES {
                    Pose::falling(from_x, dir, (f + 1) as f32 / COLLAPSE_FRAMES as f32)
                } else if f < COLLAPSE_FRAMES + LYING_FRAMES {
                    // Struggling on the floor: two full rocking cycles.
                    let phase = (f - COLLAPSE_FRAMES + 1) as f32 / LYING_FRAMES as f32 * core::f32::consts::TAU * 2.0;
                    Pose::on_floor(from_x, dir, 1.0, -0.8 * math::sin(phase), 4.0 * math::sin(phase * 0.5))
                } else {
                    let t = 1.0 - (f + 1 - COLLAPSE_FRAMES - LYING_FRAMES) as f32 / RISE_FRAMES as f32;
                    Pose::falling(from_x, dir, t)
                };
                poses.push(pose);
            }
            let end = poses.len();
            let (rest, ..) = walk_from(&mut rng, frames - end, false, from_x, dir);
            poses.extend(rest);
            SynthVideo {
                id: format!("fall{:02}", k + 1),
                frames: poses.into_iter().map(|p| render(p, &mut rng)).collect(),
                fall: (onset < frames).then_some((onset + 1, end)),
            }
        })
        .collect();
    SynthDataset { train, test }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_labels_and_determinism() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg);
        assert_eq!(a.train.len(), 6);
        assert_eq!(a.test.len(), 4);
        assert!(a.train.iter().all(|v| v.frames.len() == 24 && v.fall.is_none()));
        for v in &a.test {
            assert_eq!(v.frames.len(), 40);
            let labels = v.labels();
            let falls = labels.iter().filter(|&&l| l).count();
            assert_eq!(falls, FALL_FRAMES);
            assert!(!labels[0] && !*labels.last().unwrap());
            assert!(v.frames.iter().all(|f| f.len() == 4096));
        }
        assert_eq!(a, generate(&cfg));
        let other = generate(&SynthConfig { seed: 8, ..cfg });
        assert_ne!(a.train[0].frames, other.train[0].frames);
    }

    #[test]
    fn figure_is_visible_and_lies_down() {
        let d = generate(&SynthConfig::default());
        let bright_rows = |f: &[u8]| (0..64).filter(|y| f[y * 64..(y + 1) * 64].iter().any(|&p| p > 150)).count();
        let v = &d.test[0];
        let (onset, end) = v.fall.unwrap();
        assert!(bright_rows(&v.frames[0]) >= 18);
        assert!(bright_rows(&v.frames[onset + COLLAPSE_FRAMES]) <= 9);
        assert!(bright_rows(&v.frames[end]) >= 18);
        let t = v.to_tensor().unwrap();
        assert_eq!(t.shape(), &[40, 64, 64, 1]);
    }
}
