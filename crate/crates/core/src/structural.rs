//! Inter-target structural constraints.
//!
//! Relative displacements are taken about the mean of the points that take
//! part in a pairing, so for a pairing `{(p, q)}` the structural cost is the
//! spread of the offsets `d_p - T_q` around their mean. A pure camera
//! translation shifts every offset equally and leaves the cost at zero.
//!
//! For each seed pair the heuristic search grows a one-to-one match set by
//! repeatedly predicting where every remaining trajectory should appear
//! under the current set, snapping that prediction to the nearest free
//! detection, and admitting the cheapest resulting pair while the total
//! cost stays under `phi_s * |set|`. The size of the resulting set then
//! rescales the raw association cost of the seed.

use crate::assign::hungarian;
use crate::costs::CostMatrix;
use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Index of one detection/trajectory pair in the current frame's matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairId {
    pub detection: usize,
    pub trajectory: usize,
}

impl PairId {
    pub const fn new(detection: usize, trajectory: usize) -> Self {
        Self {
            detection,
            trajectory,
        }
    }
}

/// One-to-one set of pairs grown from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    seed: PairId,
    pairs: Vec<PairId>,
    admission_costs: Vec<f64>,
}

impl MatchSet {
    pub fn seed(&self) -> PairId {
        self.seed
    }

    /// Pairs in admission order; the seed comes first.
    pub fn pairs(&self) -> &[PairId] {
        &self.pairs
    }

    /// Structural cost of the set right after each admission (seed excluded).
    pub fn admission_costs(&self) -> &[f64] {
        &self.admission_costs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains_detection(&self, i: usize) -> bool {
        self.pairs.iter().any(|p| p.detection == i)
    }

    pub fn contains_trajectory(&self, j: usize) -> bool {
        self.pairs.iter().any(|p| p.trajectory == j)
    }

    /// Pairs sorted by `(detection, trajectory)`.
    pub fn sorted_pairs(&self) -> Vec<PairId> {
        let mut p = self.pairs.clone();
        p.sort_unstable();
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralConfig {
    /// Admission threshold per pair, squared pixels. A candidate is admitted
    /// when the set's total cost with it stays below `phi_s * (|set| + 1)`.
    pub phi_s: f64,
    /// Cap on set size; `None` means the number of trajectories.
    pub max_set_size: Option<usize>,
}

impl StructuralConfig {
    /// Fraction of the squared image diagonal used as the default `phi_s`.
    pub const DEFAULT_PHI_FRACTION: f64 = 0.005;

    pub fn for_image(width: f64, height: f64) -> Self {
        Self {
            phi_s: Self::DEFAULT_PHI_FRACTION * (width * width + height * height),
            max_set_size: None,
        }
    }
}

/// Centroid-relative coordinates of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementFrame {
    pub points: Vec<Point2>,
    pub centroid: Point2,
    pub displacements: Vec<Point2>,
}

/// Displacement of every point from the mean of the set.
///
/// Panics on an empty slice.
pub fn relative_displacements(points: &[Point2]) -> DisplacementFrame {
    let centroid = Point2::mean(points.iter().copied()).expect("at least one point");
    DisplacementFrame {
        points: points.to_vec(),
        centroid,
        displacements: points.iter().map(|&p| p - centroid).collect(),
    }
}

/// `sum ||o_k - mean(o)||^2` over `offsets` plus an optional extra offset.
fn offset_spread(offsets: &[Point2], extra: Option<Point2>) -> f64 {
    let n = offsets.len() + usize::from(extra.is_some());
    if n == 0 {
        return 0.0;
    }
    let mut sum = Point2::ZERO;
    for &o in offsets {
        sum += o;
    }
    if let Some(o) = extra {
        sum += o;
    }
    let mean = sum / n as f64;
    let mut cost = 0.0;
    for &o in offsets {
        cost += (o - mean).norm_squared();
    }
    if let Some(o) = extra {
        cost += (o - mean).norm_squared();
    }
    cost
}

fn offset(dets: &[Point2], trajs: &[Point2], p: PairId) -> Point2 {
    dets[p.detection] - trajs[p.trajectory]
}

/// Structural cost of a one-to-one pairing, with displacements taken over
/// the paired detections and the paired trajectories respectively.
pub fn structural_cost(dets: &[Point2], trajs: &[Point2], pairing: &[PairId]) -> f64 {
    let offsets: Vec<Point2> = pairing.iter().map(|&p| offset(dets, trajs, p)).collect();
    offset_spread(&offsets, None)
}

/// Location that minimizes the set's structural cost once trajectory
/// `target` joins it: `T_target` plus the mean detection-minus-trajectory
/// offset of the set.
pub fn predict_candidate_location(
    pairs: &[PairId],
    dets: &[Point2],
    trajs: &[Point2],
    target: usize,
) -> Point2 {
    let mean = Point2::mean(pairs.iter().map(|&p| offset(dets, trajs, p))).unwrap_or(Point2::ZERO);
    trajs[target] + mean
}

/// Nearest detection not yet claimed; ties go to the lowest index.
fn nearest_free(dets: &[Point2], claimed: &[bool], to: Point2) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &d) in dets.iter().enumerate() {
        if claimed[i] {
            continue;
        }
        let dist = (d - to).norm_squared();
        if best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Grows the match set of `seed` one admission at a time.
///
/// Panics if the seed indices are out of range.
pub fn heuristic_search(
    seed: PairId,
    dets: &[Point2],
    trajs: &[Point2],
    cfg: &StructuralConfig,
) -> MatchSet {
    assert!(
        seed.detection < dets.len() && seed.trajectory < trajs.len(),
        "seed out of range"
    );
    let limit = cfg
        .max_set_size
        .unwrap_or(trajs.len())
        .min(trajs.len())
        .min(dets.len())
        .max(1);

    let mut det_claimed = vec![false; dets.len()];
    let mut traj_claimed = vec![false; trajs.len()];
    det_claimed[seed.detection] = true;
    traj_claimed[seed.trajectory] = true;

    let mut pairs = vec![seed];
    let mut offsets = vec![offset(dets, trajs, seed)];
    let mut sum = offsets[0];
    let mut admission_costs = Vec::new();

    while pairs.len() < limit {
        let shift = sum / pairs.len() as f64;
        let mut best: Option<(f64, PairId)> = None;
        for (j, &t) in trajs.iter().enumerate() {
            if traj_claimed[j] {
                continue;
            }
            let Some(i) = nearest_free(dets, &det_claimed, t + shift) else {
                break;
            };
            let cost = offset_spread(&offsets, Some(dets[i] - t));
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, PairId::new(i, j)));
            }
        }
        let Some((cost, pair)) = best else {
            break;
        };
        if cost >= cfg.phi_s * (pairs.len() + 1) as f64 {
            break;
        }
        det_claimed[pair.detection] = true;
        traj_claimed[pair.trajectory] = true;
        let o = offset(dets, trajs, pair);
        offsets.push(o);
        sum += o;
        pairs.push(pair);
        admission_costs.push(cost);
    }

    MatchSet {
        seed,
        pairs,
        admission_costs,
    }
}

/// Minimum-structural-cost complete assignment that contains `fixed`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStructuralAssignment {
    /// Sorted by detection index.
    pub pairs: Vec<PairId>,
    pub cost: f64,
}

/// Exact solution for the equal-count case: displacements over all
/// detections and all trajectories, the fixed pair removed, Hungarian on
/// the remaining squared displacement differences.
pub fn fixed_pair_global_assignment(
    dets: &[Point2],
    trajs: &[Point2],
    fixed: PairId,
) -> Result<GlobalStructuralAssignment> {
    if dets.len() != trajs.len() || dets.is_empty() {
        return Err(Error::CardinalityMismatch {
            detections: dets.len(),
            targets: trajs.len(),
        });
    }
    if fixed.detection >= dets.len() || fixed.trajectory >= trajs.len() {
        return Err(Error::InvalidInput(format!(
            "fixed pair {fixed:?} out of range"
        )));
    }
    let dd = relative_displacements(dets).displacements;
    let dt = relative_displacements(trajs).displacements;
    let rows: Vec<usize> = (0..dets.len()).filter(|&i| i != fixed.detection).collect();
    let cols: Vec<usize> = (0..trajs.len())
        .filter(|&j| j != fixed.trajectory)
        .collect();
    let sub = CostMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        (dd[rows[a]] - dt[cols[b]]).norm_squared()
    });
    let assignment = hungarian(&sub);

    let mut pairs = vec![fixed];
    pairs.extend(
        assignment
            .iter()
            .enumerate()
            .map(|(a, &b)| PairId::new(rows[a], cols[b])),
    );
    pairs.sort_unstable();
    let cost = pairs
        .iter()
        .map(|p| (dd[p.detection] - dt[p.trajectory]).norm_squared())
        .sum();
    Ok(GlobalStructuralAssignment { pairs, cost })
}

/// Rescales raw costs by match-set size:
/// `C_st(i,j) = n_max / n_ij^2 * sum_{(p,q) in set_ij} C_init(p,q)`,
/// with `n_max` the largest set in this frame. `sets` is row-major over the
/// matrix; entries without a set keep their raw cost.
///
/// Panics if `sets.len()` differs from the matrix size.
pub fn modify_cost_matrix(raw: &CostMatrix, sets: &[Option<MatchSet>]) -> CostMatrix {
    assert_eq!(
        sets.len(),
        raw.rows() * raw.cols(),
        "one slot per matrix entry"
    );
    let n_max = sets.iter().flatten().map(MatchSet::len).max().unwrap_or(1) as f64;
    CostMatrix::from_fn(raw.rows(), raw.cols(), |i, j| {
        match &sets[i * raw.cols() + j] {
            Some(set) => {
                let n = set.len() as f64;
                let total: f64 = set
                    .pairs()
                    .iter()
                    .map(|p| raw.get(p.detection, p.trajectory))
                    .sum();
                n_max / (n * n) * total
            }
            None => raw.get(i, j),
        }
    })
}

/// Match sets for every pair whose raw cost is below `gate`; the rest stay
/// `None`. Row-major, ready for [`modify_cost_matrix`].
pub fn gated_match_sets(
    raw: &CostMatrix,
    gate: f64,
    dets: &[Point2],
    trajs: &[Point2],
    cfg: &StructuralConfig,
) -> Vec<Option<MatchSet>> {
    let mut out = Vec::with_capacity(raw.rows() * raw.cols());
    for i in 0..raw.rows() {
        for j in 0..raw.cols() {
            out.push(
                (raw.get(i, j) < gate)
                    .then(|| heuristic_search(PairId::new(i, j), dets, trajs, cfg)),
            );
        }
    }
    out
}
