//! Raw pairwise association costs: a per-axis velocity autoregressive
//! motion model and HSV colour-histogram appearance, coupled into one
//! matrix with rows = detections and columns = trajectories.

use crate::geometry::{euclidean_distance, BBox, Detection, Point2, Trajectory};
use crate::io::FrameImage;
use crate::linalg::{solve_spd, SquareMatrix};

/// Pivot floor used when solving the AR normal equations.
const AR_SINGULAR_TOL: f64 = 1e-10;

pub const HUE_BINS: usize = 8;
pub const SAT_BINS: usize = 8;
pub const VAL_BINS: usize = 4;
pub const DESCRIPTOR_BINS: usize = HUE_BINS * SAT_BINS * VAL_BINS;

/// Velocity autoregressive model, one coefficient vector per axis.
///
/// The predicted next velocity on an axis is
/// `sum_k coeff[k] * v[last - k]`. A constant-velocity model is AR(1) with
/// coefficient 1; an empty velocity history predicts zero motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ArMotionModel {
    pub order: usize,
    pub history_window: usize,
    pub coefficients: [Vec<f64>; 2],
    pub velocities: Vec<Point2>,
}

impl ArMotionModel {
    pub fn zero_velocity(order: usize, history_window: usize) -> Self {
        Self {
            order,
            history_window,
            coefficients: [vec![1.0], vec![1.0]],
            velocities: Vec::new(),
        }
    }

    /// Next velocity, clamped per axis to the range seen in the fitting
    /// window so that predicted-only histories stay bounded.
    pub fn predicted_velocity(&self) -> Point2 {
        let axis = |coeffs: &[f64], pick: fn(&Point2) -> f64| -> f64 {
            let v: f64 = coeffs
                .iter()
                .zip(self.velocities.iter().rev())
                .map(|(a, v)| a * pick(v))
                .sum();
            let lo = self
                .velocities
                .iter()
                .map(pick)
                .fold(f64::INFINITY, f64::min);
            let hi = self
                .velocities
                .iter()
                .map(pick)
                .fold(f64::NEG_INFINITY, f64::max);
            if lo <= hi {
                v.clamp(lo, hi)
            } else {
                v
            }
        };
        Point2::new(
            axis(&self.coefficients[0], |p| p.x),
            axis(&self.coefficients[1], |p| p.y),
        )
    }

    pub fn is_constant_velocity(&self) -> bool {
        self.coefficients.iter().all(|c| c.as_slice() == [1.0])
    }
}

/// Least-squares AR(`order`) coefficients for one axis of a velocity series,
/// or `None` when the normal equations are singular.
pub fn fit_ar_axis(series: &[f64], order: usize) -> Option<Vec<f64>> {
    if order == 0 || series.len() < order + 1 {
        return None;
    }
    let mut gram = SquareMatrix::zeros(order);
    let mut rhs = vec![0.0; order];
    for t in order..series.len() {
        for a in 0..order {
            let xa = series[t - 1 - a];
            rhs[a] += xa * series[t];
            for b in 0..order {
                gram.add(a, b, xa * series[t - 1 - b]);
            }
        }
    }
    solve_spd(&gram, &rhs, AR_SINGULAR_TOL)
}

/// Fits the motion model over the last `history_window` velocities of a
/// trajectory (predicted states included).
pub fn fit_ar_model(trajectory: &Trajectory, order: usize, history_window: usize) -> ArMotionModel {
    let order = order.max(1);
    let positions: Vec<Point2> = trajectory.positions().collect();
    let mut model = ArMotionModel::zero_velocity(order, history_window);
    if positions.len() < 2 {
        return model;
    }
    let velocities: Vec<Point2> = positions.windows(2).map(|w| w[1] - w[0]).collect();
    let skip = velocities.len().saturating_sub(history_window.max(1));
    model.velocities = velocities[skip..].to_vec();

    if model.velocities.len() > order {
        let xs: Vec<f64> = model.velocities.iter().map(|v| v.x).collect();
        let ys: Vec<f64> = model.velocities.iter().map(|v| v.y).collect();
        for (axis, series) in [xs, ys].iter().enumerate() {
            if let Some(c) = fit_ar_axis(series, order) {
                model.coefficients[axis] = c;
            }
        }
    }
    model
}

pub fn predict_next_location(model: &ArMotionModel, trajectory: &Trajectory) -> Point2 {
    trajectory.last().center + model.predicted_velocity()
}

/// Distance from the predicted location to the detection center, divided
/// by `motion_scale`.
pub fn motion_cost(predicted: Point2, detection: &Detection, motion_scale: f64) -> f64 {
    euclidean_distance(predicted, detection.center()) / motion_scale
}

/// Normalized 8x8x4 HSV histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceDescriptor {
    bins: Box<[f64; DESCRIPTOR_BINS]>,
}

impl AppearanceDescriptor {
    /// Normalizes raw counts; `None` if every count is zero.
    pub fn from_counts(counts: &[f64; DESCRIPTOR_BINS]) -> Option<Self> {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut bins = Box::new([0.0; DESCRIPTOR_BINS]);
        for (b, c) in bins.iter_mut().zip(counts) {
            *b = c / total;
        }
        Some(Self { bins })
    }

    pub fn bins(&self) -> &[f64; DESCRIPTOR_BINS] {
        &self.bins
    }
}

pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

pub fn hsv_bin(rgb: [u8; 3]) -> usize {
    let (h, s, v) = rgb_to_hsv(rgb);
    let hb = ((h / 360.0 * HUE_BINS as f64) as usize).min(HUE_BINS - 1);
    let sb = ((s * SAT_BINS as f64) as usize).min(SAT_BINS - 1);
    let vb = ((v * VAL_BINS as f64) as usize).min(VAL_BINS - 1);
    (hb * SAT_BINS + sb) * VAL_BINS + vb
}

/// Pixel index range `[start, end)` whose centers fall inside `[lo, hi)`.
fn pixel_span(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    let start = (lo - 0.5).ceil().max(0.0) as u32;
    let end = ((hi - 0.5).ceil().max(0.0) as u32).min(limit);
    (start.min(end), end)
}

/// Histogram over the pixels whose centers lie inside `bbox` clipped to the
/// image. Returns `None` if no pixel remains.
pub fn extract_descriptor(image: &FrameImage, bbox: &BBox) -> Option<AppearanceDescriptor> {
    let clipped = bbox.clip_to(image.width as f64, image.height as f64)?;
    let (x0, x1) = pixel_span(clipped.left, clipped.right(), image.width);
    let (y0, y1) = pixel_span(clipped.top, clipped.bottom(), image.height);
    let mut counts = [0.0; DESCRIPTOR_BINS];
    for y in y0..y1 {
        for x in x0..x1 {
            counts[hsv_bin(image.pixel(x, y))] += 1.0;
        }
    }
    AppearanceDescriptor::from_counts(&counts)
}

/// Bhattacharyya distance `1 - sum sqrt(a_i b_i)`, clamped to `[0, 1]`.
pub fn appearance_cost(a: &AppearanceDescriptor, b: &AppearanceDescriptor) -> f64 {
    let bc: f64 = a
        .bins
        .iter()
        .zip(b.bins.iter())
        .map(|(x, y)| (x * y).sqrt())
        .sum();
    (1.0 - bc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub lambda_motion: f64,
    pub lambda_appearance: f64,
    /// Pixel distance that maps to one unit of motion cost.
    pub motion_scale: f64,
}

impl CostWeights {
    /// Equal weights with the motion scale set to a tenth of the image diagonal.
    pub fn for_image(width: f64, height: f64) -> Self {
        Self {
            lambda_motion: 0.5,
            lambda_appearance: 0.5,
            motion_scale: width.hypot(height) / 10.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lambda_motion >= 0.0
            && self.lambda_appearance >= 0.0
            && self.lambda_motion + self.lambda_appearance > 0.0
            && self.motion_scale > 0.0
            && self.motion_scale.is_finite()
    }

    /// Couples the two cues. Without appearance the motion term carries the
    /// full weight.
    pub fn combine(&self, motion: f64, appearance: Option<f64>) -> f64 {
        match appearance {
            Some(a) if self.lambda_appearance > 0.0 => {
                (self.lambda_motion * motion + self.lambda_appearance * a)
                    / (self.lambda_motion + self.lambda_appearance)
            }
            _ => motion,
        }
    }
}

/// Dense row-major cost matrix, rows = detections, columns = trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Panics if `rows` are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// What the cost builder needs to know about one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackCue {
    pub predicted: Point2,
    pub appearance: Option<AppearanceDescriptor>,
}

/// Raw association costs `C_init`. `det_appearance` may be empty (no image
/// for this frame); any pair lacking a descriptor uses motion only.
pub fn build_raw_cost_matrix(
    detections: &[Detection],
    tracks: &[TrackCue],
    det_appearance: &[Option<AppearanceDescriptor>],
    weights: &CostWeights,
) -> CostMatrix {
    CostMatrix::from_fn(detections.len(), tracks.len(), |i, j| {
        let motion = motion_cost(tracks[j].predicted, &detections[i], weights.motion_scale);
        let appearance = match (
            det_appearance.get(i).and_then(Option::as_ref),
            &tracks[j].appearance,
        ) {
            (Some(a), Some(b)) => Some(appearance_cost(a, b)),
            _ => None,
        };
        weights.combine(motion, appearance)
    })
}

/// Descriptors for every detection, or an empty list without an image.
pub fn detection_descriptors(
    image: Option<&FrameImage>,
    detections: &[Detection],
) -> Vec<Option<AppearanceDescriptor>> {
    match image {
        Some(img) => detections
            .iter()
            .map(|d| extract_descriptor(img, &d.bbox))
            .collect(),
        None => Vec::new(),
    }
}
