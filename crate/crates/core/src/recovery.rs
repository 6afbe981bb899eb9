//! Missing-target recovery and track lifecycle.
//!
//! A trajectory without a detection in the current frame is placed where
//! it best preserves the group's relative layout from the previous frame
//! while staying close to its own motion prediction. With per-target
//! frame-to-frame moves `r_i`, the objective
//!
//! ```text
//! sum_{i in matched+missing} ||r_i - mean(r)||^2 + sum_{j in missing} ||r_j - r~_j||^2
//! ```
//!
//! is quadratic in the unknown moves of the missing targets. Its normal
//! equations are `(2 I - J / N) r = r~ + s / N` per axis, where `J` is the
//! all-ones matrix, `N` the total number of targets and `s` the summed moves
//! of the matched targets.

use crate::assign::AssignmentResult;
use crate::geometry::{BBox, Detection, Point2, TrackState, Trajectory};
use crate::io::ResultRecord;
use crate::linalg::{solve_spd, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryConfig {
    /// Frames a target may stay unmatched before it is terminated.
    pub window: u32,
    /// Relative pivot floor for the normal-equation solve.
    pub tolerance: f64,
    /// When false, unmatched trajectories end immediately and nothing is
    /// predicted or back-filled.
    pub enabled: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            window: 10,
            tolerance: 1e-8,
            enabled: true,
        }
    }
}

/// A matched target: where it is now and where it was one frame earlier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedMotion {
    pub current: Point2,
    pub previous: Point2,
}

/// A target with no detection this frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingTarget {
    pub track_id: u64,
    /// Location one frame earlier (observed or already predicted).
    pub previous: Point2,
    /// Motion-only prediction for this frame.
    pub motion_prediction: Point2,
    /// Frames since the last match, counting this one.
    pub age: u32,
}

/// Value of the joint structure and motion objective for candidate
/// locations of the missing targets, with displacements taken about the
/// centroid of all targets in each frame.
pub fn recovery_objective(
    matched: &[MatchedMotion],
    missing: &[MissingTarget],
    candidates: &[Point2],
) -> f64 {
    assert_eq!(missing.len(), candidates.len());
    let now: Vec<Point2> = matched
        .iter()
        .map(|m| m.current)
        .chain(candidates.iter().copied())
        .collect();
    let before: Vec<Point2> = matched
        .iter()
        .map(|m| m.previous)
        .chain(missing.iter().map(|m| m.previous))
        .collect();
    let Some(c_now) = Point2::mean(now.iter().copied()) else {
        return 0.0;
    };
    let c_before = Point2::mean(before.iter().copied()).unwrap_or(Point2::ZERO);
    let structure: f64 = now
        .iter()
        .zip(&before)
        .map(|(&a, &b)| ((a - c_now) - (b - c_before)).norm_squared())
        .sum();
    let motion: f64 = candidates
        .iter()
        .zip(missing)
        .map(|(&c, m)| (c - m.motion_prediction).norm_squared())
        .sum();
    structure + motion
}

/// Unique minimizer of [`recovery_objective`], one location per missing
/// target in input order.
pub fn predict_missing_targets(
    matched: &[MatchedMotion],
    missing: &[MissingTarget],
    tolerance: f64,
) -> Vec<Point2> {
    let m = missing.len();
    if m == 0 {
        return Vec::new();
    }
    let n = (matched.len() + m) as f64;
    let mut a = SquareMatrix::zeros(m);
    for r in 0..m {
        for c in 0..m {
            a.set(r, c, if r == c { 2.0 } else { 0.0 } - 1.0 / n);
        }
    }
    let s = matched
        .iter()
        .fold(Point2::ZERO, |acc, mm| acc + (mm.current - mm.previous));
    let rhs_x: Vec<f64> = missing
        .iter()
        .map(|t| (t.motion_prediction - t.previous).x + s.x / n)
        .collect();
    let rhs_y: Vec<f64> = missing
        .iter()
        .map(|t| (t.motion_prediction - t.previous).y + s.y / n)
        .collect();
    match (
        solve_spd(&a, &rhs_x, tolerance),
        solve_spd(&a, &rhs_y, tolerance),
    ) {
        (Some(dx), Some(dy)) => missing
            .iter()
            .zip(dx.iter().zip(&dy))
            .map(|(t, (&x, &y))| t.previous + Point2::new(x, y))
            .collect(),
        _ => missing.iter().map(|t| t.motion_prediction).collect(),
    }
}

/// What one lifecycle step changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LifecycleStep {
    /// Records released this step: current observations plus the recovered
    /// gap of any trajectory that was re-matched.
    pub emitted: Vec<ResultRecord>,
    /// `(detection index, new track id)` for each spawned track.
    pub spawned: Vec<(usize, u64)>,
    pub terminated: Vec<u64>,
    /// `(detection index, track id)` for each matched trajectory.
    pub matched: Vec<(usize, u64)>,
}

fn record(s: &TrackState) -> ResultRecord {
    ResultRecord {
        frame: s.frame,
        track_id: s.track_id,
        bbox: s.bbox,
        confidence: s.confidence,
    }
}

/// Applies one frame's assignment to the trajectories.
///
/// `motion_predictions[j]` is the motion-only location of trajectory `j`
/// for `frame`; `assignment` indexes `detections` (rows) and
/// `trajectories` (columns).
pub fn step_lifecycle(
    trajectories: &mut Vec<Trajectory>,
    assignment: &AssignmentResult,
    detections: &[Detection],
    motion_predictions: &[Point2],
    frame: u32,
    cfg: &RecoveryConfig,
    next_id: &mut u64,
) -> LifecycleStep {
    assert_eq!(motion_predictions.len(), trajectories.len());
    let mut step = LifecycleStep::default();

    let mut matched_motion = Vec::with_capacity(assignment.matches.len());
    for &(i, j) in &assignment.matches {
        let det = &detections[i];
        let traj = &mut trajectories[j];
        matched_motion.push(MatchedMotion {
            current: det.center(),
            previous: traj.last().center,
        });
        step.emitted
            .extend(traj.trailing_predicted().iter().map(record));
        traj.push(TrackState {
            track_id: traj.track_id,
            center: det.center(),
            bbox: det.bbox,
            frame,
            matched: true,
            confidence: det.confidence,
        });
        step.emitted.push(record(traj.last()));
        step.matched.push((i, traj.track_id));
    }

    let mut dead = vec![false; trajectories.len()];
    if cfg.enabled {
        let missing: Vec<MissingTarget> = assignment
            .unmatched_trajectories
            .iter()
            .map(|&j| {
                let t = &trajectories[j];
                MissingTarget {
                    track_id: t.track_id,
                    previous: t.last().center,
                    motion_prediction: motion_predictions[j],
                    age: t.miss_count() + 1,
                }
            })
            .collect();
        let predicted = predict_missing_targets(&matched_motion, &missing, cfg.tolerance);
        for (&j, p) in assignment.unmatched_trajectories.iter().zip(predicted) {
            let traj = &mut trajectories[j];
            let last = traj.last().clone();
            traj.push(TrackState {
                track_id: traj.track_id,
                center: p,
                bbox: BBox::centered_at(p, last.bbox.width, last.bbox.height),
                frame,
                matched: false,
                confidence: last.confidence,
            });
            if traj.miss_count() > cfg.window {
                dead[j] = true;
            }
        }
    } else {
        for &j in &assignment.unmatched_trajectories {
            dead[j] = true;
        }
    }

    let mut k = 0;
    trajectories.retain(|t| {
        let keep = !dead[k];
        k += 1;
        if !keep {
            step.terminated.push(t.track_id);
        }
        keep
    });

    for &i in &assignment.unmatched_detections {
        let det = &detections[i];
        let id = *next_id;
        *next_id += 1;
        let state = TrackState {
            track_id: id,
            center: det.center(),
            bbox: det.bbox,
            frame,
            matched: true,
            confidence: det.confidence,
        };
        step.emitted.push(record(&state));
        trajectories.push(Trajectory::new(id, state));
        step.spawned.push((i, id));
    }
    step
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn miss(prev: (f64, f64), pred: (f64, f64)) -> MissingTarget {
        MissingTarget {
            track_id: 1,
            previous: Point2::new(prev.0, prev.1),
            motion_prediction: Point2::new(pred.0, pred.1),
            age: 1,
        }
    }

    #[test]
    fn lone_missing_target_follows_motion() {
        let m = [miss((3.0, 4.0), (5.0, 9.0))];
        let p = predict_missing_targets(&[], &m, 1e-8);
        assert!((p[0] - Point2::new(5.0, 9.0)).norm() < 1e-12);
    }

    #[test]
    fn consistent_translation_has_zero_objective() {
        let v = Point2::new(4.0, -2.0);
        let matched: Vec<MatchedMotion> = [(0.0, 0.0), (10.0, 5.0), (20.0, -3.0)]
            .iter()
            .map(|&(x, y)| MatchedMotion {
                previous: Point2::new(x, y),
                current: Point2::new(x, y) + v,
            })
            .collect();
        let m = [miss((7.0, 7.0), (11.0, 5.0))];
        let p = predict_missing_targets(&matched, &m, 1e-8);
        assert!((p[0] - Point2::new(11.0, 5.0)).norm() < 1e-12);
        assert!(recovery_objective(&matched, &m, &p) < 1e-20);
    }

    /// Plain gradient descent on the directly evaluated objective, using
    /// central finite differences.
    fn numeric_minimizer(matched: &[MatchedMotion], missing: &[MissingTarget]) -> Vec<Point2> {
        let mut x: Vec<Point2> = missing.iter().map(|m| m.motion_prediction).collect();
        let h = 1e-4;
        for _ in 0..20_000 {
            let mut grad = vec![Point2::ZERO; x.len()];
            for k in 0..x.len() {
                for axis in 0..2 {
                    let mut plus = x.clone();
                    let mut minus = x.clone();
                    let d = if axis == 0 {
                        Point2::new(h, 0.0)
                    } else {
                        Point2::new(0.0, h)
                    };
                    plus[k] += d;
                    minus[k] -= d;
                    let g = (recovery_objective(matched, missing, &plus)
                        - recovery_objective(matched, missing, &minus))
                        / (2.0 * h);
                    if axis == 0 {
                        grad[k].x = g;
                    } else {
                        grad[k].y = g;
                    }
                }
            }
            let gn: f64 = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
            if gn < 1e-10 {
                break;
            }
            for (xi, g) in x.iter_mut().zip(&grad) {
                *xi -= *g * 0.2;
            }
        }
        x
    }

    #[test]
    fn conflicting_cues_match_numeric_minimizer() {
        let matched = [
            MatchedMotion {
                previous: Point2::new(0.0, 0.0),
                current: Point2::new(5.0, 1.0),
            },
            MatchedMotion {
                previous: Point2::new(30.0, 2.0),
                current: Point2::new(36.0, 2.5),
            },
            MatchedMotion {
                previous: Point2::new(12.0, 25.0),
                current: Point2::new(16.5, 26.0),
            },
        ];
        // motion says "stand still", structure says "move with the group"
        let missing = [miss((20.0, 10.0), (20.0, 10.0))];
        let p = predict_missing_targets(&matched, &missing, 1e-8);
        let oracle = numeric_minimizer(&matched, &missing);
        assert!((p[0] - oracle[0]).norm() < 1e-4, "{:?} vs {:?}", p, oracle);
        assert!(
            recovery_objective(&matched, &missing, &p)
                <= recovery_objective(&matched, &missing, &[Point2::new(20.0, 10.0)])
        );
    }

    #[test]
    fn random_instances_beat_motion_guess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let pt = |rng: &mut rand_chacha::ChaCha8Rng| {
            Point2::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0))
        };
        for _ in 0..50 {
            let matched: Vec<MatchedMotion> = (0..rng.random_range(0..5))
                .map(|_| {
                    let p = pt(&mut rng);
                    MatchedMotion {
                        previous: p,
                        current: p + Point2::new(
                            rng.random_range(-9.0..9.0),
                            rng.random_range(-9.0..9.0),
                        ),
                    }
                })
                .collect();
            let missing: Vec<MissingTarget> = (0..rng.random_range(1..4))
                .map(|_| {
                    let p = pt(&mut rng);
                    MissingTarget {
                        track_id: 0,
                        previous: p,
                        motion_prediction: p + Point2::new(
                            rng.random_range(-9.0..9.0),
                            rng.random_range(-9.0..9.0),
                        ),
                        age: 1,
                    }
                })
                .collect();
            let p = predict_missing_targets(&matched, &missing, 1e-8);
            let guess: Vec<Point2> = missing.iter().map(|m| m.motion_prediction).collect();
            assert!(
                recovery_objective(&matched, &missing, &p)
                    <= recovery_objective(&matched, &missing, &guess) + 1e-12
            );
        }
    }

    fn det(frame: u32, x: f64) -> Detection {
        Detection {
            frame,
            bbox: BBox::centered_at(Point2::new(x, 50.0), 10.0, 20.0),
            confidence: 0.9,
            detection_id: 0,
        }
    }

    fn assignment(matches: Vec<(usize, usize)>, rows: usize, cols: usize) -> AssignmentResult {
        let ud = (0..rows)
            .filter(|i| !matches.iter().any(|m| m.0 == *i))
            .collect();
        let ut = (0..cols)
            .filter(|j| !matches.iter().any(|m| m.1 == *j))
            .collect();
        AssignmentResult {
            matches,
            unmatched_detections: ud,
            unmatched_trajectories: ut,
            total_cost: 0.0,
        }
    }

    #[test]
    fn all_matched_changes_nothing_structural() {
        let mut trajs = Vec::new();
        let mut next = 1;
        let first = [det(1, 10.0), det(1, 40.0)];
        step_lifecycle(
            &mut trajs,
            &assignment(vec![], 2, 0),
            &first,
            &[],
            1,
            &RecoveryConfig::default(),
            &mut next,
        );
        assert_eq!(trajs.len(), 2);
        let second = [det(2, 11.0), det(2, 41.0)];
        let preds: Vec<Point2> = trajs.iter().map(|t| t.last().center).collect();
        let s = step_lifecycle(
            &mut trajs,
            &assignment(vec![(0, 0), (1, 1)], 2, 2),
            &second,
            &preds,
            2,
            &RecoveryConfig::default(),
            &mut next,
        );
        assert!(s.spawned.is_empty());
        assert!(s.terminated.is_empty());
        assert_eq!(s.emitted.len(), 2);
    }

    #[test]
    fn terminates_after_window_exceeded() {
        let cfg = RecoveryConfig {
            window: 3,
            ..Default::default()
        };
        let mut trajs = Vec::new();
        let mut next = 1;
        step_lifecycle(
            &mut trajs,
            &assignment(vec![], 1, 0),
            &[det(1, 10.0)],
            &[],
            1,
            &cfg,
            &mut next,
        );
        let mut ended_at = None;
        for f in 2..10 {
            let preds: Vec<Point2> = trajs.iter().map(|t| t.last().center).collect();
            let a = assignment(vec![], 0, trajs.len());
            let s = step_lifecycle(&mut trajs, &a, &[], &preds, f, &cfg, &mut next);
            assert!(s.emitted.is_empty());
            if !s.terminated.is_empty() {
                ended_at = Some(f);
                break;
            }
        }
        // last match at frame 1, window 3 -> terminated at frame 1 + 3 + 1
        assert_eq!(ended_at, Some(5));
        assert!(trajs.is_empty());
    }

    #[test]
    fn rematch_after_gap_keeps_id_and_backfills() {
        let cfg = RecoveryConfig::default();
        let mut trajs = Vec::new();
        let mut next = 1;
        step_lifecycle(
            &mut trajs,
            &assignment(vec![], 1, 0),
            &[det(1, 10.0)],
            &[],
            1,
            &cfg,
            &mut next,
        );
        for f in 2..=4 {
            let preds: Vec<Point2> = trajs.iter().map(|t| t.last().center).collect();
            step_lifecycle(
                &mut trajs,
                &assignment(vec![], 0, 1),
                &[],
                &preds,
                f,
                &cfg,
                &mut next,
            );
        }
        assert_eq!(trajs[0].miss_count(), 3);
        let preds: Vec<Point2> = trajs.iter().map(|t| t.last().center).collect();
        let s = step_lifecycle(
            &mut trajs,
            &assignment(vec![(0, 0)], 1, 1),
            &[det(5, 10.0)],
            &preds,
            5,
            &cfg,
            &mut next,
        );
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].track_id, 1);
        assert_eq!(trajs[0].miss_count(), 0);
        let frames: Vec<u32> = s.emitted.iter().map(|r| r.frame).collect();
        assert_eq!(frames, vec![2, 3, 4, 5]);
        assert!(s.emitted.iter().all(|r| r.track_id == 1));
    }

    #[test]
    fn disabled_recovery_ends_tracks_at_first_miss() {
        let cfg = RecoveryConfig {
            enabled: false,
            ..Default::default()
        };
        let mut trajs = Vec::new();
        let mut next = 1;
        step_lifecycle(
            &mut trajs,
            &assignment(vec![], 1, 0),
            &[det(1, 10.0)],
            &[],
            1,
            &cfg,
            &mut next,
        );
        let s = step_lifecycle(
            &mut trajs,
            &assignment(vec![], 0, 1),
            &[],
            &[Point2::ZERO],
            2,
            &cfg,
            &mut next,
        );
        assert_eq!(s.terminated, vec![1]);
        assert!(trajs.is_empty());
    }
}
