//! Two-stage motion distortion compensation.
//!
//! Scan poses refer to the sensor frame at the *end* of the sweep. A point
//! captured at azimuth fraction `s` was measured from a frame lagging the
//! reference by `(1 - s)` of the scan's motion `xi`, so it is moved into the
//! reference frame with `exp(-(1 - s) * xi)`. Points captured last are left
//! untouched; points captured first receive the full correction.
//!
//! Stage 1 uses the constant-velocity twist predicted from the two previous
//! poses. Stage 2 recomputes the twist from the optimised pose and re-applies
//! the correction to the raw, uncorrected coordinates before map insertion.

use nalgebra::Vector3;

use crate::features::FeaturePoint;
use crate::geometry::{exp_se3, log_se3, GeometryError, Pose, Twist};
use crate::pointcloud::IndexedPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompensationMode {
    None,
    #[default]
    TwoStage,
}

impl CompensationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompensationMode::None => "none",
            CompensationMode::TwoStage => "two-stage",
        }
    }
}

impl std::str::FromStr for CompensationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(CompensationMode::None),
            "two-stage" => Ok(CompensationMode::TwoStage),
            other => Err(format!("unknown compensation mode `{other}` (none|two-stage)")),
        }
    }
}

/// A point that knows when in the sweep it was captured.
pub trait TimedPoint: Clone {
    fn position(&self) -> Vector3<f64>;
    fn set_position(&mut self, p: Vector3<f64>);
    fn azimuth_fraction(&self) -> f64;
}

impl TimedPoint for FeaturePoint {
    fn position(&self) -> Vector3<f64> {
        self.position
    }

    fn set_position(&mut self, p: Vector3<f64>) {
        self.position = p;
    }

    fn azimuth_fraction(&self) -> f64 {
        self.azimuth_fraction
    }
}

impl TimedPoint for IndexedPoint {
    fn position(&self) -> Vector3<f64> {
        self.position
    }

    fn set_position(&mut self, p: Vector3<f64>) {
        self.position = p;
    }

    fn azimuth_fraction(&self) -> f64 {
        self.azimuth_fraction
    }
}

/// Poses of the two previous scans and the twist they imply for the next one.
#[derive(Debug, Clone, Default)]
pub struct MotionState {
    pub prev2: Option<Pose>,
    pub prev: Option<Pose>,
    pub predicted_twist: Twist,
}

impl MotionState {
    /// Records the pose of the scan just processed and refreshes the prediction.
    pub fn push(&mut self, pose: Pose) -> Result<(), GeometryError> {
        self.prev2 = self.prev.replace(pose);
        self.predicted_twist = match (&self.prev2, &self.prev) {
            (Some(a), Some(b)) => predict_twist(a, b)?,
            _ => Twist::zero(),
        };
        Ok(())
    }
}

/// Constant-velocity prediction: the motion between the two previous scans.
pub fn predict_twist(t_prev2: &Pose, t_prev: &Pose) -> Result<Twist, GeometryError> {
    log_se3(&(t_prev2.inverse() * *t_prev))
}

/// Moves every point into the end-of-sweep frame given the sweep's motion `xi`.
pub fn undistort<P: TimedPoint>(points: &[P], xi: &Twist) -> Vec<P> {
    let zero = xi.to_vector().iter().all(|&v| v == 0.0);
    points
        .iter()
        .map(|p| {
            let lag = 1.0 - p.azimuth_fraction();
            if zero || lag == 0.0 {
                return p.clone();
            }
            let correction = exp_se3(&xi.scaled(-lag));
            let mut q = p.clone();
            q.set_position(correction.transform_point(&p.position()));
            q
        })
        .collect()
}

/// Stage 2: recompute the sweep's motion from the optimised pose and re-correct the raw points.
pub fn recompute_undistort<P: TimedPoint>(
    raw: &[P],
    t_prev: &Pose,
    t_star: &Pose,
) -> Result<Vec<P>, GeometryError> {
    let delta = log_se3(&(t_prev.inverse() * *t_star))?;
    Ok(undistort(raw, &delta))
}
