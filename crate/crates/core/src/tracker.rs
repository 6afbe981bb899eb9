//! Frame-by-frame pipeline: raw costs, structural refinement, gated
//! assignment, missing-target recovery and lifecycle.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::assign::{solve_gated_assignment, AssignmentResult, GateConfig};
use crate::costs::{
    build_raw_cost_matrix, detection_descriptors, fit_ar_model, predict_next_location,
    AppearanceDescriptor, CostMatrix, CostWeights, TrackCue,
};
use crate::error::{Error, Result};
use crate::geometry::{Detection, Point2, Trajectory};
use crate::io::{
    load_frame, parse_det_file, sort_records, DetectionSet, FrameImage, ResultRecord,
    SequenceSource,
};
use crate::recovery::{step_lifecycle, RecoveryConfig};
use crate::structural::{gated_match_sets, modify_cost_matrix, StructuralConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub weights: CostWeights,
    pub structural: StructuralConfig,
    pub gate: GateConfig,
    pub recovery: RecoveryConfig,
    pub structural_enabled: bool,
    pub appearance_enabled: bool,
    /// Detections below this confidence are ignored.
    pub min_confidence: f64,
    pub ar_order: usize,
    pub history_window: usize,
}

impl TrackerConfig {
    /// Defaults whose pixel-scaled parameters follow the image size.
    pub fn for_image(width: f64, height: f64) -> Self {
        Self {
            weights: CostWeights::for_image(width, height),
            structural: StructuralConfig::for_image(width, height),
            gate: GateConfig::default(),
            recovery: RecoveryConfig::default(),
            structural_enabled: true,
            appearance_enabled: true,
            min_confidence: f64::NEG_INFINITY,
            ar_order: 2,
            history_window: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if !self.weights.is_valid() {
            return bad(
                "lambda_motion",
                "weights must be >= 0 with a positive sum and positive motion_scale",
            );
        }
        if self.structural.phi_s.is_nan() || self.structural.phi_s <= 0.0 {
            return bad("phi_s", "must be > 0");
        }
        if !self.gate.gate.is_finite() || self.gate.gate <= 0.0 {
            return bad("gate", "must be a finite value > 0");
        }
        if self.recovery.window < 1 {
            return bad("recovery_window", "must be >= 1");
        }
        if self.ar_order < 1 {
            return bad("ar_order", "must be >= 1");
        }
        if self.history_window < self.ar_order + 1 {
            return bad("history_window", "must be >= ar_order + 1");
        }
        Ok(())
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::for_image(1920.0, 1080.0)
    }
}

/// Accumulated wall time per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub costs: Duration,
    pub structural: Duration,
    pub assignment: Duration,
    pub lifecycle: Duration,
    pub frames: u32,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.costs + self.structural + self.assignment + self.lifecycle
    }
}

/// Everything one call to [`Tracker::process_frame`] produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameOutput {
    /// Records released this frame, sorted by `(frame, track_id)`. Besides
    /// the current observations this includes the recovered states of a
    /// trajectory that was re-matched after a gap.
    pub records: Vec<ResultRecord>,
    pub assignment: Option<AssignmentResult>,
    pub spawned: Vec<u64>,
    pub terminated: Vec<u64>,
}

/// Tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    trajectories: Vec<Trajectory>,
    appearance: BTreeMap<u64, AppearanceDescriptor>,
    next_id: u64,
    frame: u32,
    timings: StageTimings,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            trajectories: Vec::new(),
            appearance: BTreeMap::new(),
            next_id: 1,
            frame: 0,
            timings: StageTimings::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    /// Advances the tracker by one frame. Frames must arrive in order
    /// starting at 1, including frames without detections.
    pub fn process_frame(
        &mut self,
        frame: u32,
        detections: &[Detection],
        image: Option<&FrameImage>,
    ) -> Result<FrameOutput> {
        let expected = self.frame + 1;
        if frame != expected {
            return Err(Error::FrameOrder {
                expected,
                got: frame,
            });
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::InvalidInput(format!(
                "detection for frame {} passed while processing frame {frame}",
                d.frame
            )));
        }
        let cfg = self.config;
        let dets: Vec<Detection> = detections
            .iter()
            .filter(|d| d.confidence >= cfg.min_confidence)
            .enumerate()
            .map(|(k, d)| Detection {
                detection_id: k,
                ..d.clone()
            })
            .collect();

        let t0 = Instant::now();
        let predictions: Vec<Point2> = self
            .trajectories
            .iter()
            .map(|t| predict_next_location(&fit_ar_model(t, cfg.ar_order, cfg.history_window), t))
            .collect();
        let image = image.filter(|_| cfg.appearance_enabled);
        let det_desc = detection_descriptors(image, &dets);
        let cues: Vec<TrackCue> = self
            .trajectories
            .iter()
            .zip(&predictions)
            .map(|(t, &p)| TrackCue {
                predicted: p,
                appearance: if image.is_some() {
                    self.appearance.get(&t.track_id).cloned()
                } else {
                    None
                },
            })
            .collect();
        let raw = build_raw_cost_matrix(&dets, &cues, &det_desc, &cfg.weights);
        let t1 = Instant::now();

        let costs = if cfg.structural_enabled && !raw.is_empty() {
            self.structural_costs(&raw, &dets)
        } else {
            raw
        };
        let t2 = Instant::now();

        let assignment = solve_gated_assignment(&costs, &cfg.gate);
        let t3 = Instant::now();

        let step = step_lifecycle(
            &mut self.trajectories,
            &assignment,
            &dets,
            &predictions,
            frame,
            &cfg.recovery,
            &mut self.next_id,
        );
        for &(i, id) in step.matched.iter().chain(&step.spawned) {
            match det_desc.get(i).cloned().flatten() {
                Some(d) => {
                    self.appearance.insert(id, d);
                }
                None if image.is_some() => {
                    self.appearance.remove(&id);
                }
                None => {}
            }
        }
        for id in &step.terminated {
            self.appearance.remove(id);
        }
        let t4 = Instant::now();

        self.timings.costs += t1 - t0;
        self.timings.structural += t2 - t1;
        self.timings.assignment += t3 - t2;
        self.timings.lifecycle += t4 - t3;
        self.timings.frames += 1;
        self.frame = frame;

        let mut records = step.emitted;
        sort_records(&mut records);
        debug!(
            "frame {frame}: {} dets, {} matched, {} new, {} ended",
            dets.len(),
            assignment.matches.len(),
            step.spawned.len(),
            step.terminated.len()
        );
        Ok(FrameOutput {
            records,
            assignment: Some(assignment),
            spawned: step.spawned.into_iter().map(|(_, id)| id).collect(),
            terminated: step.terminated,
        })
    }

    fn structural_costs(&self, raw: &CostMatrix, dets: &[Detection]) -> CostMatrix {
        let det_points: Vec<Point2> = dets.iter().map(Detection::center).collect();
        let traj_points: Vec<Point2> = self.trajectories.iter().map(|t| t.last().center).collect();
        let sets = gated_match_sets(
            raw,
            self.config.gate.gate,
            &det_points,
            &traj_points,
            &self.config.structural,
        );
        modify_cost_matrix(raw, &sets)
    }
}

/// Output of a whole-sequence run.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    /// Sorted by `(frame, track_id)`.
    pub records: Vec<ResultRecord>,
    /// Records in the order they were released, one entry per frame.
    pub emitted: Vec<Vec<ResultRecord>>,
    pub timings: StageTimings,
}

/// Runs the tracker over frames `1..=frame_count` of a detection set.
/// `images` supplies frames for appearance when given.
pub fn run_detections(
    detections: &DetectionSet,
    frame_count: u32,
    config: &TrackerConfig,
    images: Option<&SequenceSource>,
) -> Result<SequenceRun> {
    let mut tracker = Tracker::new(*config)?;
    let last = frame_count.max(detections.last_frame().unwrap_or(0));
    let mut emitted = Vec::with_capacity(last as usize);
    let mut appearance_ok =
        config.appearance_enabled && images.is_some_and(|s| s.image_dir.is_some());
    for frame in 1..=last {
        let image = if appearance_ok {
            match load_frame(images.expect("checked above"), frame) {
                Ok(img) => Some(img),
                Err(e) => {
                    warn!("{e}; continuing with motion-only costs");
                    appearance_ok = false;
                    None
                }
            }
        } else {
            None
        };
        let out = tracker.process_frame(frame, detections.frame(frame), image.as_ref())?;
        emitted.push(out.records);
    }
    let mut records: Vec<ResultRecord> = emitted.iter().flatten().cloned().collect();
    sort_records(&mut records);
    Ok(SequenceRun {
        records,
        emitted,
        timings: *tracker.timings(),
    })
}

/// Parses the sequence's detection file and tracks it.
pub fn run_sequence(source: &SequenceSource, config: &TrackerConfig) -> Result<SequenceRun> {
    let detections = parse_det_file(&source.det_path)?;
    run_detections(&detections, source.frame_count, config, Some(source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn det(frame: u32, x: f64, y: f64) -> Detection {
        Detection {
            frame,
            bbox: BBox::centered_at(Point2::new(x, y), 20.0, 40.0),
            confidence: 1.0,
            detection_id: 0,
        }
    }

    fn config() -> TrackerConfig {
        TrackerConfig::for_image(640.0, 480.0)
    }

    #[test]
    fn cold_start_spawns_every_detection() {
        let mut t = Tracker::new(config()).unwrap();
        let out = t
            .process_frame(
                1,
                &[det(1, 50.0, 50.0), det(1, 150.0, 50.0), det(1, 250.0, 60.0)],
                None,
            )
            .unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.spawned, vec![1, 2, 3]);
        assert_eq!(t.trajectories().len(), 3);
    }

    #[test]
    fn empty_frame_increments_misses() {
        let mut t = Tracker::new(config()).unwrap();
        t.process_frame(1, &[det(1, 50.0, 50.0), det(1, 150.0, 50.0)], None)
            .unwrap();
        let out = t.process_frame(2, &[], None).unwrap();
        assert!(out.records.is_empty());
        assert!(t.trajectories().iter().all(|tr| tr.miss_count() == 1));
    }

    #[test]
    fn rejects_out_of_order_frames() {
        let mut t = Tracker::new(config()).unwrap();
        assert!(matches!(
            t.process_frame(2, &[], None),
            Err(Error::FrameOrder {
                expected: 1,
                got: 2
            })
        ));
        t.process_frame(1, &[], None).unwrap();
        assert!(matches!(
            t.process_frame(1, &[], None),
            Err(Error::FrameOrder {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn rejects_detection_from_another_frame() {
        let mut t = Tracker::new(config()).unwrap();
        assert!(matches!(
            t.process_frame(1, &[det(3, 0.0, 0.0)], None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn follows_moving_targets() {
        let mut t = Tracker::new(config()).unwrap();
        for f in 1..=20u32 {
            let x = f as f64 * 3.0;
            let out = t
                .process_frame(
                    f,
                    &[det(f, 50.0 + x, 100.0), det(f, 300.0 - x, 200.0)],
                    None,
                )
                .unwrap();
            assert_eq!(out.records.len(), 2);
        }
        assert_eq!(t.next_id(), 3);
    }

    #[test]
    fn confidence_threshold_filters() {
        let mut cfg = config();
        cfg.min_confidence = 0.5;
        let mut t = Tracker::new(cfg).unwrap();
        let mut weak = det(1, 10.0, 10.0);
        weak.confidence = 0.2;
        let out = t
            .process_frame(1, &[weak, det(1, 100.0, 100.0)], None)
            .unwrap();
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = config();
        cfg.gate.gate = 0.0;
        assert!(matches!(Tracker::new(cfg), Err(Error::Config { .. })));
        let mut cfg = config();
        cfg.history_window = 2;
        assert!(Tracker::new(cfg).is_err());
    }

    #[test]
    fn appearance_overrides_motion_on_swap() {
        // two stationary targets trade places between frames 5 and 6
        let red = [220u8, 20, 20];
        let blue = [20u8, 20, 220];
        let mut cfg = config();
        cfg.structural_enabled = false;
        cfg.weights.lambda_motion = 0.2;
        cfg.weights.lambda_appearance = 0.8;
        let mut t = Tracker::new(cfg).unwrap();
        let mut red_ids = Vec::new();
        for f in 1..=8u32 {
            let (xr, xb) = if f <= 5 {
                (100.0, 140.0)
            } else {
                (140.0, 100.0)
            };
            let img = FrameImage::from_fn(640, 480, |x, y| {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if (py - 100.0).abs() >= 20.0 {
                    [0, 0, 0]
                } else if (px - xr).abs() < 10.0 {
                    red
                } else if (px - xb).abs() < 10.0 {
                    blue
                } else {
                    [0, 0, 0]
                }
            });
            let out = t
                .process_frame(f, &[det(f, xr, 100.0), det(f, xb, 100.0)], Some(&img))
                .unwrap();
            let r = out
                .records
                .iter()
                .find(|r| (r.bbox.center().x - xr).abs() < 1e-9)
                .unwrap();
            red_ids.push(r.track_id);
        }
        assert!(red_ids.iter().all(|&id| id == red_ids[0]), "{red_ids:?}");

        // the same swap without appearance follows motion and flips ids
        let mut cfg = config();
        cfg.structural_enabled = false;
        let mut t = Tracker::new(cfg).unwrap();
        let mut ids = Vec::new();
        for f in 1..=8u32 {
            let (xr, xb) = if f <= 5 {
                (100.0, 140.0)
            } else {
                (140.0, 100.0)
            };
            let out = t
                .process_frame(f, &[det(f, xr, 100.0), det(f, xb, 100.0)], None)
                .unwrap();
            ids.push(
                out.records
                    .iter()
                    .find(|r| (r.bbox.center().x - xr).abs() < 1e-9)
                    .unwrap()
                    .track_id,
            );
        }
        assert_ne!(ids[0], ids[7]);
    }
}
