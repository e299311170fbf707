//! Scan data model, KITTI velodyne ingestion and the ray-casting scan simulator.

mod kitti;
pub mod presets;
mod scene;
mod sequence;
mod simulate;

use std::f64::consts::TAU;

use nalgebra::Vector3;
use thiserror::Error;

pub use kitti::{read_kitti_bin, write_kitti_bin, IngestStats};
pub use scene::{Primitive, Scene};
pub use sequence::{simulate_sequence, MotionSchedule};
pub use simulate::{simulate_scan, NoiseModel, SimulatedScan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointCloudError {
    #[error("velodyne buffer length {0} is not a multiple of 16 bytes")]
    Format(usize),
    #[error("point ({x}, {y}) lies on the rotation axis; azimuth undefined")]
    DegeneratePoint { x: f64, y: f64 },
    #[error("scene line {line}: {message}")]
    Scene { line: usize, message: String },
    #[error("invalid sensor configuration: {0}")]
    Sensor(String),
}

/// One return as stored on disk, in the sensor frame at capture time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl RawPoint {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x as f64, self.y as f64, self.z as f64)
    }
}

/// A return placed in the ring/column grid of its scan.
///
/// Rings and columns are zero-based. `azimuth_fraction` is the fraction of
/// the scan period elapsed when the point was captured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedPoint {
    pub position: Vector3<f64>,
    pub ring: usize,
    pub column: usize,
    pub azimuth_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ring {
    /// Points ordered by strictly increasing azimuth fraction.
    pub points: Vec<IndexedPoint>,
    /// Number of column slots in this ring (`N_m`).
    pub column_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scan {
    pub index: usize,
    pub rings: Vec<Ring>,
}

impl Scan {
    pub fn empty(index: usize, ring_count: usize) -> Self {
        Self {
            index,
            rings: vec![Ring::default(); ring_count],
        }
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn len(&self) -> usize {
        self.rings.iter().map(|r| r.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = &IndexedPoint> {
        self.rings.iter().flat_map(|r| r.points.iter())
    }

    /// Points in capture order (by azimuth fraction, then ring), ready for serialization.
    pub fn to_raw_points(&self) -> Vec<RawPoint> {
        let mut pts: Vec<&IndexedPoint> = self.points().collect();
        pts.sort_by(|a, b| {
            a.azimuth_fraction
                .total_cmp(&b.azimuth_fraction)
                .then(a.ring.cmp(&b.ring))
        });
        pts.iter()
            .map(|p| RawPoint {
                x: p.position.x as f32,
                y: p.position.y as f32,
                z: p.position.z as f32,
                intensity: 0.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rotation {
    Clockwise,
    #[default]
    CounterClockwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Elevation of each ring in radians, strictly monotonic.
    pub vertical_angles: Vec<f64>,
    pub columns_per_rev: usize,
    pub min_range: f64,
    pub max_range: f64,
    pub rotation: Rotation,
}

impl SensorConfig {
    /// Rings evenly spaced between two elevations (inclusive), given in degrees.
    pub fn uniform(rings: usize, min_deg: f64, max_deg: f64, columns_per_rev: usize) -> Self {
        let vertical_angles = if rings == 1 {
            vec![min_deg.to_radians()]
        } else {
            (0..rings)
                .map(|i| {
                    (min_deg + (max_deg - min_deg) * i as f64 / (rings - 1) as f64).to_radians()
                })
                .collect()
        };
        Self {
            vertical_angles,
            columns_per_rev,
            min_range: 0.5,
            max_range: 100.0,
            rotation: Rotation::CounterClockwise,
        }
    }

    /// 16 rings from -15 to +15 degrees.
    pub fn vlp16(columns_per_rev: usize) -> Self {
        Self::uniform(16, -15.0, 15.0, columns_per_rev)
    }

    /// 64 rings approximating the HDL-64E vertical field of view.
    pub fn hdl64(columns_per_rev: usize) -> Self {
        let mut cfg = Self::uniform(64, -24.9, 2.0, columns_per_rev);
        cfg.max_range = 120.0;
        cfg.min_range = 3.0;
        cfg
    }

    pub fn ring_count(&self) -> usize {
        self.vertical_angles.len()
    }

    pub fn validate(&self) -> Result<(), PointCloudError> {
        let bad = |m: &str| Err(PointCloudError::Sensor(m.to_string()));
        if self.vertical_angles.is_empty() {
            return bad("at least one ring is required");
        }
        let w = &self.vertical_angles;
        let increasing = w.windows(2).all(|p| p[1] > p[0]);
        let decreasing = w.windows(2).all(|p| p[1] < p[0]);
        if !(increasing || decreasing) {
            return bad("vertical angles must be strictly monotonic");
        }
        if !(self.min_range > 0.0 && self.min_range < self.max_range) {
            return bad("ranges must satisfy 0 < min_range < max_range");
        }
        if self.columns_per_rev == 0 {
            return bad("columns_per_rev must be positive");
        }
        Ok(())
    }

    /// Ring whose elevation is nearest; ties go to the lower ring index.
    pub fn nearest_ring(&self, elevation: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.vertical_angles.iter().enumerate() {
            let d = (a - elevation).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Beam azimuth of a column, measured counterclockwise from +x.
    pub fn column_azimuth(&self, column: usize) -> f64 {
        let a = TAU * column as f64 / self.columns_per_rev as f64;
        match self.rotation {
            Rotation::CounterClockwise => a,
            Rotation::Clockwise => -a,
        }
    }
}

fn wrap_turn(angle: f64) -> f64 {
    let f = angle.rem_euclid(TAU) / TAU;
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Fraction of a revolution from the +x axis in the direction of rotation.
pub fn azimuth_fraction(p: &Vector3<f64>, rotation: Rotation) -> Result<f64, PointCloudError> {
    azimuth_fraction_from(p, 0.0, rotation)
}

/// Fraction of a revolution from `start_azimuth` (radians, counterclockwise from +x).
pub fn azimuth_fraction_from(
    p: &Vector3<f64>,
    start_azimuth: f64,
    rotation: Rotation,
) -> Result<f64, PointCloudError> {
    if p.x == 0.0 && p.y == 0.0 {
        return Err(PointCloudError::DegeneratePoint { x: p.x, y: p.y });
    }
    let a = p.y.atan2(p.x);
    Ok(match rotation {
        Rotation::CounterClockwise => wrap_turn(a - start_azimuth),
        Rotation::Clockwise => wrap_turn(start_azimuth - a),
    })
}
