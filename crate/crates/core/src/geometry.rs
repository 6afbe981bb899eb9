//! Image-space geometry and identity primitives.
//!
//! Coordinates are pixels with a top-left origin and `y` growing downward,
//! the MOTChallenge convention. Every structural computation uses the box
//! center as the target location.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// A point (or 2-vector) in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Arithmetic mean of a point set; `None` when empty.
    pub fn mean<I: IntoIterator<Item = Point2>>(points: I) -> Option<Point2> {
        let mut sum = Point2::ZERO;
        let mut n = 0usize;
        for p in points {
            sum += p;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, rhs: Point2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Point2 {
    fn sub_assign(&mut self, rhs: Point2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    fn div(self, rhs: f64) -> Point2 {
        Point2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Axis-aligned box as `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub const fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    /// Box of the given size centered on `center`.
    pub fn centered_at(center: Point2, width: f64, height: f64) -> Self {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            width,
            height,
        )
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0
            && self.height > 0.0
            && self.left.is_finite()
            && self.top.is_finite()
            && self.width.is_finite()
            && self.height.is_finite()
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Point2 {
        bbox_center(self)
    }

    pub fn translate(&self, by: Point2) -> BBox {
        BBox::new(self.left + by.x, self.top + by.y, self.width, self.height)
    }

    /// Intersection with `[0, width) x [0, height)`; `None` if nothing remains.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<BBox> {
        let left = self.left.max(0.0);
        let top = self.top.max(0.0);
        let right = self.right().min(width);
        let bottom = self.bottom().min(height);
        (right > left && bottom > top).then(|| BBox::new(left, top, right - left, bottom - top))
    }
}

pub fn bbox_center(b: &BBox) -> Point2 {
    Point2::new(b.left + b.width / 2.0, b.top + b.height / 2.0)
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.left.max(b.left);
    let ih = a.bottom().min(b.bottom()) - a.top.max(b.top);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn euclidean_distance(a: Point2, b: Point2) -> f64 {
    (a - b).norm()
}

/// One detector output in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    /// Ordinal within the frame, unique per frame.
    pub detection_id: usize,
}

impl Detection {
    pub fn center(&self) -> Point2 {
        self.bbox.center()
    }
}

/// State of an identified target at one frame, either observed or predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub track_id: u64,
    pub center: Point2,
    pub bbox: BBox,
    pub frame: u32,
    pub matched: bool,
    pub confidence: f64,
}

/// Time-ordered state history of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub track_id: u64,
    states: Vec<TrackState>,
    miss_count: u32,
}

impl Trajectory {
    pub fn new(track_id: u64, first: TrackState) -> Self {
        let miss_count = u32::from(!first.matched);
        Self {
            track_id,
            states: vec![TrackState { track_id, ..first }],
            miss_count,
        }
    }

    /// Appends a state, keeping frames strictly increasing and the
    /// miss counter equal to the trailing run of predicted states.
    ///
    /// Panics if `state.frame` does not come after the last frame.
    pub fn push(&mut self, state: TrackState) {
        let last = self.last().frame;
        assert!(
            state.frame > last,
            "track {} state for frame {} does not follow frame {}",
            self.track_id,
            state.frame,
            last
        );
        self.miss_count = if state.matched {
            0
        } else {
            self.miss_count + 1
        };
        self.states.push(TrackState {
            track_id: self.track_id,
            ..state
        });
    }

    pub fn states(&self) -> &[TrackState] {
        &self.states
    }

    pub fn last(&self) -> &TrackState {
        self.states.last().expect("trajectory always holds a state")
    }

    pub fn miss_count(&self) -> u32 {
        self.miss_count
    }

    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.states.iter().map(|s| s.center)
    }

    /// The most recent observed state, if any.
    pub fn last_matched(&self) -> Option<&TrackState> {
        self.states.iter().rev().find(|s| s.matched)
    }

    /// Predicted states since the last observation, oldest first.
    pub fn trailing_predicted(&self) -> &[TrackState] {
        let n = self.states.len();
        &self.states[n - self.miss_count as usize..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn center_examples() {
        assert_eq!(
            bbox_center(&BBox::new(0.0, 0.0, 10.0, 20.0)),
            Point2::new(5.0, 10.0)
        );
        assert_eq!(
            bbox_center(&BBox::new(-5.0, -5.0, 10.0, 10.0)),
            Point2::new(0.0, 0.0)
        );
        assert_eq!(
            bbox_center(&BBox::new(100.0, 200.0, 30.0, 60.0)),
            Point2::new(115.0, 230.0)
        );
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20.0, 20.0, 5.0, 5.0)), 0.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        // touching edges share no area
        assert_eq!(iou(&a, &BBox::new(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            euclidean_distance(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)),
            5.0
        );
        let p = Point2::new(2.5, -1.0);
        assert_eq!(euclidean_distance(p, p), 0.0);
        assert_eq!(
            euclidean_distance(Point2::new(1.0, 1.0), Point2::new(-2.0, 5.0)),
            5.0
        );
    }

    #[test]
    fn clip_keeps_inside_part() {
        let b = BBox::new(-5.0, 10.0, 20.0, 20.0);
        assert_eq!(
            b.clip_to(100.0, 25.0),
            Some(BBox::new(0.0, 10.0, 15.0, 15.0))
        );
        assert_eq!(BBox::new(200.0, 0.0, 5.0, 5.0).clip_to(100.0, 100.0), None);
    }

    #[test]
    fn trajectory_miss_count_tracks_trailing_predictions() {
        let s = |frame, matched| TrackState {
            track_id: 0,
            center: Point2::ZERO,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            frame,
            matched,
            confidence: 1.0,
        };
        let mut t = Trajectory::new(4, s(1, true));
        t.push(s(2, false));
        t.push(s(3, false));
        assert_eq!(t.miss_count(), 2);
        assert_eq!(t.trailing_predicted().len(), 2);
        assert_eq!(t.last_matched().unwrap().frame, 1);
        t.push(s(4, true));
        assert_eq!(t.miss_count(), 0);
        assert!(t.states().iter().all(|s| s.track_id == 4));
    }

    #[test]
    #[should_panic]
    fn trajectory_rejects_out_of_order_frames() {
        let s = TrackState {
            track_id: 1,
            center: Point2::ZERO,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            frame: 3,
            matched: true,
            confidence: 1.0,
        };
        let mut t = Trajectory::new(1, s.clone());
        t.push(s);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (
            -500.0..500.0f64,
            -500.0..500.0f64,
            0.5..200.0f64,
            0.5..200.0f64,
        )
            .prop_map(|(l, t, w, h)| BBox::new(l, t, w, h))
    }

    fn arb_point() -> impl Strategy<Value = Point2> {
        (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let lhs = euclidean_distance(a, c);
            let rhs = euclidean_distance(a, b) + euclidean_distance(b, c);
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn center_commutes_with_translation(b in arb_box(), v in arb_point()) {
            let lhs = bbox_center(&b.translate(v));
            let rhs = bbox_center(&b) + v;
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
