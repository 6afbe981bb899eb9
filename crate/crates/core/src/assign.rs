//! Per-frame data association with explicit non-assignment.
//!
//! Every detection/trajectory pair is worth `gate - cost` when matched; not
//! matching a pair costs `gate`. The solver realizes this exactly with a
//! Hungarian solve on a square matrix augmented by dummy rows and columns.

use crate::costs::CostMatrix;
use crate::error::{Error, Result};

/// Largest `min(rows, cols)` the brute-force oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Pairs costing this much or more are never matched.
    pub gate: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { gate: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// `(detection, trajectory)` pairs sorted by detection index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_trajectories: Vec<usize>,
    pub total_cost: f64,
}

impl AssignmentResult {
    fn from_matches(costs: &CostMatrix, mut matches: Vec<(usize, usize)>) -> Self {
        matches.sort_unstable();
        let mut row_used = vec![false; costs.rows()];
        let mut col_used = vec![false; costs.cols()];
        for &(i, j) in &matches {
            row_used[i] = true;
            col_used[j] = true;
        }
        let total_cost = matches.iter().map(|&(i, j)| costs.get(i, j)).sum();
        Self {
            unmatched_detections: (0..costs.rows()).filter(|&i| !row_used[i]).collect(),
            unmatched_trajectories: (0..costs.cols()).filter(|&j| !col_used[j]).collect(),
            matches,
            total_cost,
        }
    }

    /// Trajectory matched to `detection`, if any.
    pub fn trajectory_for(&self, detection: usize) -> Option<usize> {
        self.matches
            .iter()
            .find(|&&(i, _)| i == detection)
            .map(|&(_, j)| j)
    }
}

/// Minimum-cost perfect matching on a square matrix (shortest augmenting
/// paths with potentials, O(n^3)). Returns the column assigned to each row.
///
/// Panics if `costs` is not square.
pub fn hungarian(costs: &CostMatrix) -> Vec<usize> {
    let n = costs.rows();
    assert_eq!(n, costs.cols(), "hungarian needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact gated assignment where any detection or trajectory may stay
/// unmatched.
///
/// The augmented `(n + m)` square matrix holds the real costs top-left
/// (forbidden when `>= gate`), `gate` on the diagonal of the row-dummy
/// block, zero on the diagonal of the column-dummy block and zeros in the
/// dummy-dummy block. Any perfect matching then costs
/// `sum(matched) + gate * unmatched_rows`, i.e. `sum(cost - gate)` plus a
/// constant.
pub fn solve_gated_assignment(costs: &CostMatrix, gate: &GateConfig) -> AssignmentResult {
    let (n, m) = (costs.rows(), costs.cols());
    if n == 0 || m == 0 {
        return AssignmentResult::from_matches(costs, Vec::new());
    }
    let theta = gate.gate;
    let admissible = |c: f64| c.is_finite() && c < theta;
    let max_abs = costs
        .values()
        .iter()
        .filter(|c| admissible(**c))
        .fold(theta.abs(), |acc, c| acc.max(c.abs()));
    let forbidden = (max_abs + 1.0) * 4.0 * (n + m + 1) as f64;

    let size = n + m;
    let aug = CostMatrix::from_fn(size, size, |r, c| match (r < n, c < m) {
        (true, true) => {
            let v = costs.get(r, c);
            if admissible(v) {
                v
            } else {
                forbidden
            }
        }
        (true, false) => {
            if c - m == r {
                theta
            } else {
                forbidden
            }
        }
        (false, true) => {
            if r - n == c {
                0.0
            } else {
                forbidden
            }
        }
        (false, false) => 0.0,
    });

    let assignment = hungarian(&aug);
    let matches = assignment
        .iter()
        .take(n)
        .enumerate()
        .filter(|&(i, &j)| j < m && admissible(costs.get(i, j)))
        .map(|(i, &j)| (i, j))
        .collect();
    AssignmentResult::from_matches(costs, matches)
}

/// Exhaustive search over all gated partial matchings, minimizing
/// `sum(cost - gate)`. Ties resolve to the lexicographically smallest
/// sorted pair list.
pub fn brute_force_assignment(costs: &CostMatrix, gate: &GateConfig) -> Result<AssignmentResult> {
    let (n, m) = (costs.rows(), costs.cols());
    let small = n.min(m);
    if small > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(small, BRUTE_FORCE_LIMIT));
    }
    // enumerate over the smaller side so depth stays bounded
    let transposed = m < n;
    let (outer, inner) = if transposed { (m, n) } else { (n, m) };
    let entry = |a: usize, b: usize| {
        if transposed {
            costs.get(b, a)
        } else {
            costs.get(a, b)
        }
    };

    struct Search<'a> {
        outer: usize,
        inner: usize,
        entry: &'a dyn Fn(usize, usize) -> f64,
        theta: f64,
        used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Option<(f64, Vec<(usize, usize)>)>,
        transposed: bool,
    }

    impl Search<'_> {
        fn pairs(&self) -> Vec<(usize, usize)> {
            let mut p: Vec<_> = self
                .current
                .iter()
                .map(|&(a, b)| if self.transposed { (b, a) } else { (a, b) })
                .collect();
            p.sort_unstable();
            p
        }

        fn visit(&mut self, a: usize, score: f64) {
            if a == self.outer {
                let pairs = self.pairs();
                let better = match &self.best {
                    None => true,
                    Some((s, p)) => score < *s || (score == *s && pairs < *p),
                };
                if better {
                    self.best = Some((score, pairs));
                }
                return;
            }
            self.visit(a + 1, score);
            for b in 0..self.inner {
                if self.used[b] {
                    continue;
                }
                let c = (self.entry)(a, b);
                if !(c.is_finite() && c < self.theta) {
                    continue;
                }
                self.used[b] = true;
                self.current.push((a, b));
                self.visit(a + 1, score + (c - self.theta));
                self.current.pop();
                self.used[b] = false;
            }
        }
    }

    let mut search = Search {
        outer,
        inner,
        entry: &entry,
        theta: gate.gate,
        used: vec![false; inner],
        current: Vec::new(),
        best: None,
        transposed,
    };
    search.visit(0, 0.0);
    let (_, pairs) = search.best.unwrap_or_default();
    Ok(AssignmentResult::from_matches(costs, pairs))
}
