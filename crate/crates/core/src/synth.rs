//! Synthetic multi-target scenarios seen through a translating camera.
//!
//! Targets move in world coordinates. Each frame the camera offset is added
//! to every target, giving the image-plane ground truth; detections are that
//! ground truth with positional jitter, random misses and stray boxes.
//! Separate random streams drive target motion, camera, jitter, misses and
//! stray boxes, so changing one noise rate leaves the other draws intact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{parse_kv, parse_value};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection, Point2};
use crate::io::{format_det_line, format_gt_line, DetectionSet, GroundTruth, GtEntry, SeqInfo};

const MOTION_STREAM: u64 = 0;
const CAMERA_STREAM: u64 = 1;
const JITTER_STREAM: u64 = 2;
const MISS_STREAM: u64 = 3;
const STRAY_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    ConstantVelocity,
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppearanceMode {
    Distinct,
    Identical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub target_count: usize,
    pub frame_count: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub box_width: f64,
    pub box_height: f64,
    pub motion: MotionKind,
    /// Speed range in pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Sinusoid amplitude and period ranges, used by [`MotionKind::Sinusoidal`].
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub period_min: f64,
    pub period_max: f64,
    /// Side of the square, centred in the image, holding the start positions.
    /// Zero uses the whole image.
    pub spawn_size: f64,
    /// Minimum start distance between target centres, enforced by rejection.
    pub min_separation: f64,
    /// Per-frame standard deviation of the camera random walk.
    pub camera_sigma: f64,
    /// Length of an abrupt camera jump in a random direction.
    pub camera_jump: f64,
    /// A jump happens on every frame divisible by this; zero disables jumps.
    pub camera_jump_every: u32,
    pub jitter_sigma: f64,
    /// Probability of one stray box per frame.
    pub fp_rate: f64,
    /// Probability that a visible box is missed.
    pub fn_rate: f64,
    pub appearance: AppearanceMode,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            target_count: 10,
            frame_count: 100,
            image_width: 1280,
            image_height: 720,
            box_width: 30.0,
            box_height: 60.0,
            motion: MotionKind::ConstantVelocity,
            speed_min: 0.5,
            speed_max: 3.0,
            amplitude_min: 5.0,
            amplitude_max: 20.0,
            period_min: 20.0,
            period_max: 60.0,
            spawn_size: 0.0,
            min_separation: 0.0,
            camera_sigma: 0.0,
            camera_jump: 0.0,
            camera_jump_every: 0,
            jitter_sigma: 0.0,
            fp_rate: 0.0,
            fn_rate: 0.0,
            appearance: AppearanceMode::Distinct,
            seed: 0,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, rate) in [("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(config_err(key, "must lie in [0, 1]"));
            }
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(config_err("image_width", "image must be non-empty"));
        }
        if !(self.box_width > 0.0 && self.box_height > 0.0) {
            return Err(config_err("box_width", "boxes must have positive size"));
        }
        if !(self.speed_min >= 0.0 && self.speed_min <= self.speed_max) {
            return Err(config_err("speed_min", "need 0 <= speed_min <= speed_max"));
        }
        if !(self.amplitude_min >= 0.0 && self.amplitude_min <= self.amplitude_max) {
            return Err(config_err(
                "amplitude_min",
                "need 0 <= amplitude_min <= amplitude_max",
            ));
        }
        if !(self.period_min > 0.0 && self.period_min <= self.period_max) {
            return Err(config_err(
                "period_min",
                "need 0 < period_min <= period_max",
            ));
        }
        for (key, v) in [
            ("camera_sigma", self.camera_sigma),
            ("camera_jump", self.camera_jump),
            ("jitter_sigma", self.jitter_sigma),
            ("spawn_size", self.spawn_size),
            ("min_separation", self.min_separation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(key, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "target_count" => self.target_count = parse_value(key, value)?,
            "frame_count" => self.frame_count = parse_value(key, value)?,
            "image_width" => self.image_width = parse_value(key, value)?,
            "image_height" => self.image_height = parse_value(key, value)?,
            "box_width" => self.box_width = parse_value(key, value)?,
            "box_height" => self.box_height = parse_value(key, value)?,
            "motion" => {
                self.motion = match value {
                    "constant" | "constant_velocity" => MotionKind::ConstantVelocity,
                    "sinusoidal" => MotionKind::Sinusoidal,
                    _ => return Err(config_err(key, format!("unknown motion {value:?}"))),
                }
            }
            "speed_min" => self.speed_min = parse_value(key, value)?,
            "speed_max" => self.speed_max = parse_value(key, value)?,
            "amplitude_min" => self.amplitude_min = parse_value(key, value)?,
            "amplitude_max" => self.amplitude_max = parse_value(key, value)?,
            "period_min" => self.period_min = parse_value(key, value)?,
            "period_max" => self.period_max = parse_value(key, value)?,
            "spawn_size" => self.spawn_size = parse_value(key, value)?,
            "min_separation" => self.min_separation = parse_value(key, value)?,
            "camera_sigma" => self.camera_sigma = parse_value(key, value)?,
            "camera_jump" => self.camera_jump = parse_value(key, value)?,
            "camera_jump_every" => self.camera_jump_every = parse_value(key, value)?,
            "jitter_sigma" => self.jitter_sigma = parse_value(key, value)?,
            "fp_rate" => self.fp_rate = parse_value(key, value)?,
            "fn_rate" => self.fn_rate = parse_value(key, value)?,
            "appearance" => {
                self.appearance = match value {
                    "distinct" => AppearanceMode::Distinct,
                    "identical" => AppearanceMode::Identical,
                    _ => return Err(config_err(key, format!("unknown appearance {value:?}"))),
                }
            }
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value, _) in parse_kv(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    pub fn to_kv(&self) -> String {
        let motion = match self.motion {
            MotionKind::ConstantVelocity => "constant",
            MotionKind::Sinusoidal => "sinusoidal",
        };
        let appearance = match self.appearance {
            AppearanceMode::Distinct => "distinct",
            AppearanceMode::Identical => "identical",
        };
        let mut s = String::new();
        for (k, v) in [
            ("target_count", self.target_count.to_string()),
            ("frame_count", self.frame_count.to_string()),
            ("image_width", self.image_width.to_string()),
            ("image_height", self.image_height.to_string()),
            ("box_width", self.box_width.to_string()),
            ("box_height", self.box_height.to_string()),
            ("motion", motion.to_string()),
            ("speed_min", self.speed_min.to_string()),
            ("speed_max", self.speed_max.to_string()),
            ("amplitude_min", self.amplitude_min.to_string()),
            ("amplitude_max", self.amplitude_max.to_string()),
            ("period_min", self.period_min.to_string()),
            ("period_max", self.period_max.to_string()),
            ("spawn_size", self.spawn_size.to_string()),
            ("min_separation", self.min_separation.to_string()),
            ("camera_sigma", self.camera_sigma.to_string()),
            ("camera_jump", self.camera_jump.to_string()),
            ("camera_jump_every", self.camera_jump_every.to_string()),
            ("jitter_sigma", self.jitter_sigma.to_string()),
            ("fp_rate", self.fp_rate.to_string()),
            ("fn_rate", self.fn_rate.to_string()),
            ("appearance", appearance.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub ground_truth: GroundTruth,
    pub detections: DetectionSet,
    /// Camera offset for frames `1..=frame_count`, index 0 is frame 1.
    pub camera_offsets: Vec<Point2>,
    /// Nominal colour per target id, index 0 is id 1.
    pub colors: Vec<[u8; 3]>,
    pub image_size: (u32, u32),
    pub frame_count: u32,
}

impl ScenarioOutput {
    /// Writes `det/det.txt`, `gt/gt.txt` and `seqinfo.ini` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let det_dir = dir.join("det");
        let gt_dir = dir.join("gt");
        for d in [&det_dir, &gt_dir] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let mut det = String::new();
        for list in self.detections.frames.values() {
            for d in list {
                det.push_str(&format_det_line(d));
                det.push('\n');
            }
        }
        let mut gt = String::new();
        for (&frame, list) in &self.ground_truth.frames {
            for e in list {
                gt.push_str(&format_gt_line(frame, e));
                gt.push('\n');
            }
        }
        let info = SeqInfo {
            name: dir.file_name().map(|n| n.to_string_lossy().into_owned()),
            image_dir: Some("img1".into()),
            image_ext: Some(".jpg".into()),
            frame_rate: Some(30.0),
            seq_length: Some(self.frame_count),
            image_width: Some(self.image_size.0),
            image_height: Some(self.image_size.1),
        };
        let det_path = det_dir.join("det.txt");
        let gt_path = gt_dir.join("gt.txt");
        let info_path = dir.join("seqinfo.ini");
        fs::write(&det_path, det).map_err(|e| Error::io(&det_path, e))?;
        fs::write(&gt_path, gt).map_err(|e| Error::io(&gt_path, e))?;
        fs::write(&info_path, info.render()).map_err(|e| Error::io(&info_path, e))?;
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn round_box(b: BBox) -> BBox {
    BBox::new(
        round2(b.left),
        round2(b.top),
        round2(b.width),
        round2(b.height),
    )
}

/// Clips to the image and rounds to the 0.01 px precision of the file format,
/// so in-memory runs see the same numbers as runs on written files.
fn visible_box(b: BBox, width: f64, height: f64) -> Option<BBox> {
    let clipped = round_box(b.clip_to(width, height)?);
    (clipped.width > 0.0 && clipped.height > 0.0).then_some(clipped)
}

fn hue_color(k: usize, n: usize) -> [u8; 3] {
    let h = k as f64 / n.max(1) as f64 * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

struct TargetPath {
    start: Point2,
    velocity: Point2,
    amplitude: Point2,
    period: f64,
    phase: f64,
}

impl TargetPath {
    /// World position at frame `t`, folded back into `[0, w] x [0, h]` so
    /// targets bounce off the world edges instead of leaving for good.
    fn at(&self, t: f64, motion: MotionKind, w: f64, h: f64) -> Point2 {
        let mut p = self.start + self.velocity * t;
        if motion == MotionKind::Sinusoidal {
            let s = (std::f64::consts::TAU * t / self.period + self.phase).sin();
            p += self.amplitude * s;
        }
        Point2::new(reflect(p.x, w), reflect(p.y, h))
    }
}

fn reflect(v: f64, extent: f64) -> f64 {
    let period = 2.0 * extent;
    let m = v.rem_euclid(period);
    if m <= extent {
        m
    } else {
        period - m
    }
}

fn camera_series(cfg: &ScenarioConfig) -> Vec<Point2> {
    let mut rng = stream(cfg.seed, CAMERA_STREAM);
    let mut offset = Point2::ZERO;
    let mut out = Vec::with_capacity(cfg.frame_count as usize);
    let normal = Normal::new(0.0, cfg.camera_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    for frame in 1..=cfg.frame_count {
        if frame > 1 {
            if cfg.camera_sigma > 0.0 {
                offset += Point2::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
            if cfg.camera_jump_every > 0 && frame % cfg.camera_jump_every == 0 {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                offset += Point2::new(angle.cos(), angle.sin()) * cfg.camera_jump;
            }
        }
        out.push(offset);
    }
    out
}

fn spawn_paths(cfg: &ScenarioConfig) -> Vec<TargetPath> {
    let mut rng = stream(cfg.seed, MOTION_STREAM);
    let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);
    let (sx, sy) = if cfg.spawn_size > 0.0 {
        (cfg.spawn_size.min(w), cfg.spawn_size.min(h))
    } else {
        (w, h)
    };
    let origin = Point2::new((w - sx) / 2.0, (h - sy) / 2.0);
    let mut starts: Vec<Point2> = Vec::with_capacity(cfg.target_count);
    let mut paths = Vec::with_capacity(cfg.target_count);
    for _ in 0..cfg.target_count {
        let mut start = Point2::ZERO;
        for _ in 0..1000 {
            start = origin + Point2::new(rng.random_range(0.0..=sx), rng.random_range(0.0..=sy));
            if starts
                .iter()
                .all(|s| (*s - start).norm() >= cfg.min_separation)
            {
                break;
            }
        }
        starts.push(start);
        let speed = rng.random_range(cfg.speed_min..=cfg.speed_max);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(cfg.amplitude_min..=cfg.amplitude_max);
        let amp_heading = rng.random_range(0.0..std::f64::consts::TAU);
        paths.push(TargetPath {
            start,
            velocity: Point2::new(heading.cos(), heading.sin()) * speed,
            amplitude: Point2::new(amp_heading.cos(), amp_heading.sin()) * amp,
            period: rng.random_range(cfg.period_min..=cfg.period_max),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
    }
    paths
}

/// Builds the scenario; the seed fixes every random draw.
pub fn generate(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);
    let paths = spawn_paths(cfg);
    let camera = camera_series(cfg);

    let mut gt_entries = Vec::new();
    for frame in 1..=cfg.frame_count {
        let t = (frame - 1) as f64;
        let shift = camera[(frame - 1) as usize];
        for (k, path) in paths.iter().enumerate() {
            let center = path.at(t, cfg.motion, w, h) + shift;
            let bbox = BBox::centered_at(center, cfg.box_width, cfg.box_height);
            if let Some(bbox) = visible_box(bbox, w, h) {
                gt_entries.push((
                    frame,
                    GtEntry {
                        track_id: k as u64 + 1,
                        bbox,
                        considered: true,
                    },
                ));
            }
        }
    }
    let ground_truth = GroundTruth::from_entries(gt_entries);

    let mut jitter_rng = stream(cfg.seed, JITTER_STREAM);
    let mut miss_rng = stream(cfg.seed, MISS_STREAM);
    let mut stray_rng = stream(cfg.seed, STRAY_STREAM);
    let jitter = Normal::new(0.0, cfg.jitter_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut dets = Vec::new();
    for frame in 1..=cfg.frame_count {
        for e in ground_truth.frame(frame) {
            let offset = if cfg.jitter_sigma > 0.0 {
                Point2::new(
                    jitter.sample(&mut jitter_rng),
                    jitter.sample(&mut jitter_rng),
                )
            } else {
                Point2::ZERO
            };
            if miss_rng.random::<f64>() < cfg.fn_rate {
                continue;
            }
            if let Some(bbox) = visible_box(e.bbox.translate(offset), w, h) {
                dets.push(Detection {
                    frame,
                    bbox,
                    confidence: 1.0,
                    detection_id: 0,
                });
            }
        }
        if stray_rng.random::<f64>() < cfg.fp_rate {
            let center = Point2::new(
                stray_rng.random_range(0.0..=w),
                stray_rng.random_range(0.0..=h),
            );
            let bbox = BBox::centered_at(center, cfg.box_width, cfg.box_height);
            if let Some(bbox) = visible_box(bbox, w, h) {
                dets.push(Detection {
                    frame,
                    bbox,
                    confidence: 1.0,
                    detection_id: 0,
                });
            }
        }
    }

    let colors = (0..cfg.target_count)
        .map(|k| match cfg.appearance {
            AppearanceMode::Distinct => hue_color(k, cfg.target_count),
            AppearanceMode::Identical => [128, 128, 128],
        })
        .collect();

    Ok(ScenarioOutput {
        ground_truth,
        detections: DetectionSet::from_detections(dets),
        camera_offsets: camera,
        colors,
        image_size: (cfg.image_width, cfg.image_height),
        frame_count: cfg.frame_count,
    })
}
