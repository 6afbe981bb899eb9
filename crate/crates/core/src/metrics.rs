//! CLEAR-MOT evaluation of tracker output against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::assign::{solve_gated_assignment, GateConfig};
use crate::costs::CostMatrix;
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::io::{GroundTruth, ResultRecord};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Coverage at or above which a ground-truth track counts as mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage at or below which a ground-truth track counts as mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mota: f64,
    /// Mean IoU over matched pairs, 0 when nothing matched.
    pub motp: f64,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub faf: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub gt_boxes: usize,
    pub matches: usize,
    pub gt_tracks: usize,
    pub frames: u32,
    iou_sum: f64,
}

impl MetricsReport {
    fn from_counts(c: Counts) -> Self {
        let errors = (c.fp + c.fn_ + c.idsw) as f64;
        Self {
            mota: 1.0 - errors / c.gt as f64,
            motp: if c.matches == 0 {
                0.0
            } else {
                c.iou_sum / c.matches as f64
            },
            mostly_tracked: c.mt,
            mostly_lost: c.ml,
            faf: if c.frames == 0 {
                0.0
            } else {
                c.fp as f64 / c.frames as f64
            },
            false_positives: c.fp,
            false_negatives: c.fn_,
            id_switches: c.idsw,
            gt_boxes: c.gt,
            matches: c.matches,
            gt_tracks: c.gt_tracks,
            frames: c.frames,
            iou_sum: c.iou_sum,
        }
    }

    fn counts(&self) -> Counts {
        Counts {
            fp: self.false_positives,
            fn_: self.false_negatives,
            idsw: self.id_switches,
            gt: self.gt_boxes,
            matches: self.matches,
            mt: self.mostly_tracked,
            ml: self.mostly_lost,
            gt_tracks: self.gt_tracks,
            frames: self.frames,
            iou_sum: self.iou_sum,
        }
    }

    /// Totals over several sequences: counts are summed and ratios recomputed.
    pub fn combine(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let mut total = Counts::default();
        for r in reports {
            let c = r.counts();
            total.fp += c.fp;
            total.fn_ += c.fn_;
            total.idsw += c.idsw;
            total.gt += c.gt;
            total.matches += c.matches;
            total.mt += c.mt;
            total.ml += c.ml;
            total.gt_tracks += c.gt_tracks;
            total.frames += c.frames;
            total.iou_sum += c.iou_sum;
        }
        (total.gt > 0).then(|| MetricsReport::from_counts(total))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>7} {:>7} {:>5} {:>5} {:>7} {:>7} {:>7} {:>6} {:>7}",
            "MOTA", "MOTP", "MT", "ML", "FAF", "FP", "FN", "IDSW", "GT"
        );
        let _ = writeln!(
            s,
            "{:>7.3} {:>7.3} {:>5} {:>5} {:>7.3} {:>7} {:>7} {:>6} {:>7}",
            self.mota,
            self.motp,
            self.mostly_tracked,
            self.mostly_lost,
            self.faf,
            self.false_positives,
            self.false_negatives,
            self.id_switches,
            self.gt_boxes
        );
        s
    }

    pub fn to_kv(&self) -> String {
        format!(
            "mota={:.6}\nmotp={:.6}\nmt={}\nml={}\nfaf={:.6}\nfp={}\nfn={}\nidsw={}\ngt={}\nmatches={}\ngt_tracks={}\nframes={}\n",
            self.mota,
            self.motp,
            self.mostly_tracked,
            self.mostly_lost,
            self.faf,
            self.false_positives,
            self.false_negatives,
            self.id_switches,
            self.gt_boxes,
            self.matches,
            self.gt_tracks,
            self.frames
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    fp: usize,
    fn_: usize,
    idsw: usize,
    gt: usize,
    matches: usize,
    mt: usize,
    ml: usize,
    gt_tracks: usize,
    frames: u32,
    iou_sum: f64,
}

/// Correspondence bookkeeping carried from frame to frame.
#[derive(Debug, Clone, Default)]
pub struct FrameMatchState {
    /// Most recent hypothesis matched to each ground-truth id.
    last_match: BTreeMap<u64, u64>,
}

impl FrameMatchState {
    pub fn last_match(&self, gt_id: u64) -> Option<u64> {
        self.last_match.get(&gt_id).copied()
    }
}

/// Per-frame result of the correspondence step, as `(gt index, hyp index)`.
fn match_frame(
    gt: &[(u64, crate::geometry::BBox)],
    hyp: &[(u64, crate::geometry::BBox)],
    state: &FrameMatchState,
    threshold: f64,
) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];

    for (g, (gid, gbox)) in gt.iter().enumerate() {
        let Some(prev) = state.last_match(*gid) else {
            continue;
        };
        if let Some(h) = hyp.iter().position(|(hid, _)| *hid == prev) {
            let o = iou(gbox, &hyp[h].1);
            if !hyp_used[h] && o >= threshold {
                gt_used[g] = true;
                hyp_used[h] = true;
                pairs.push((g, h, o));
            }
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|&g| !gt_used[g]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&h| !hyp_used[h]).collect();
    if !free_gt.is_empty() && !free_hyp.is_empty() {
        // Every admissible pair costs at most 1, so a gate above the largest
        // possible match count makes the solver maximize matches first and
        // minimize the summed distance second.
        let gate = (free_gt.len().min(free_hyp.len()) + 2) as f64;
        let costs = CostMatrix::from_fn(free_gt.len(), free_hyp.len(), |i, j| {
            let o = iou(&gt[free_gt[i]].1, &hyp[free_hyp[j]].1);
            if o >= threshold {
                1.0 - o
            } else {
                gate
            }
        });
        let result = solve_gated_assignment(&costs, &GateConfig { gate });
        for &(i, j) in &result.matches {
            let (g, h) = (free_gt[i], free_hyp[j]);
            pairs.push((g, h, iou(&gt[g].1, &hyp[h].1)));
        }
    }
    pairs
}

/// Scores `results` against the considered boxes of `gt`.
pub fn evaluate(
    gt: &GroundTruth,
    results: &[ResultRecord],
    iou_threshold: f64,
) -> Result<MetricsReport> {
    let total_gt = gt.considered_count();
    if total_gt == 0 {
        return Err(Error::NotEvaluable(
            "ground truth has no considered boxes".into(),
        ));
    }
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "iou threshold {iou_threshold} outside (0, 1]"
        )));
    }

    let mut hyp_frames: BTreeMap<u32, Vec<(u64, crate::geometry::BBox)>> = BTreeMap::new();
    for r in results {
        hyp_frames
            .entry(r.frame)
            .or_default()
            .push((r.track_id, r.bbox));
    }
    let mut frames: BTreeSet<u32> = gt.frames.keys().copied().collect();
    frames.extend(hyp_frames.keys().copied());

    let mut c = Counts {
        frames: frames.iter().next_back().copied().unwrap_or(0),
        gt: total_gt,
        ..Counts::default()
    };
    let mut state = FrameMatchState::default();
    // (frames present, frames matched) per ground-truth id.
    let mut coverage: BTreeMap<u64, (usize, usize)> = BTreeMap::new();

    for frame in frames {
        let mut g: Vec<(u64, crate::geometry::BBox)> = gt
            .frame(frame)
            .iter()
            .filter(|e| e.considered)
            .map(|e| (e.track_id, e.bbox))
            .collect();
        g.sort_by_key(|e| e.0);
        let mut h = hyp_frames.remove(&frame).unwrap_or_default();
        // Input order must not matter.
        h.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.left.total_cmp(&b.1.left))
                .then(a.1.top.total_cmp(&b.1.top))
                .then(a.1.width.total_cmp(&b.1.width))
                .then(a.1.height.total_cmp(&b.1.height))
        });

        let pairs = match_frame(&g, &h, &state, iou_threshold);
        for (gid, _) in &g {
            coverage.entry(*gid).or_default().0 += 1;
        }
        for &(gi, hi, o) in &pairs {
            let gid = g[gi].0;
            let hid = h[hi].0;
            if state.last_match.get(&gid).is_some_and(|&prev| prev != hid) {
                c.idsw += 1;
            }
            state.last_match.insert(gid, hid);
            coverage.entry(gid).or_default().1 += 1;
            c.iou_sum += o;
        }
        c.matches += pairs.len();
        c.fn_ += g.len() - pairs.len();
        c.fp += h.len() - pairs.len();
    }

    c.gt_tracks = coverage.len();
    for (present, matched) in coverage.values() {
        let ratio = *matched as f64 / *present as f64;
        if ratio >= MOSTLY_TRACKED {
            c.mt += 1;
        } else if ratio <= MOSTLY_LOST {
            c.ml += 1;
        }
    }
    Ok(MetricsReport::from_counts(c))
}
