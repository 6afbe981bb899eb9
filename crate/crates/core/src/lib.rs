//! Online multi-object tracking by detection with structural-constraint
//! refinement of association costs.
//!
//! Per frame the tracker builds raw detection/trajectory costs from a
//! velocity autoregressive motion model and colour histograms, grows a
//! structurally consistent match set around every plausible pair and uses
//! its size to rescale that pair's cost, solves a gated assignment, and
//! places unmatched targets by a joint structure and motion least-squares
//! fit. MOTChallenge I/O, CLEAR-MOT metrics and a synthetic scenario
//! generator are included for evaluation.

pub mod assign;
pub mod config;
pub mod costs;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod recovery;
pub mod structural;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{BBox, Detection, Point2, TrackState, Trajectory};
pub use tracker::{run_detections, run_sequence, Tracker, TrackerConfig};
