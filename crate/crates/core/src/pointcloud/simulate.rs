//! Motion-distorted scan simulator.
//!
//! The sensor moves with a constant twist during the sweep: column `n` of `N`
//! is fired from `start_pose * exp((n / N) * twist)`. Each return is stored in
//! the sensor frame at its own capture time, which is exactly what a spinning
//! LiDAR reports and what the distortion compensation has to undo.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{IndexedPoint, PointCloudError, Scan, Scene, SensorConfig};
use crate::geometry::{exp_se3, Pose, Twist};

/// Isotropic Gaussian range noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulatedScan {
    pub scan: Scan,
    /// Ground-truth sensor pose at each column's firing time.
    pub column_poses: Vec<Pose>,
    /// Sensor pose at the end of the sweep, `start_pose * exp(twist)`.
    pub end_pose: Pose,
    /// Beams with no hit inside the sensor's range window.
    pub misses: usize,
}

pub fn simulate_scan(
    scene: &Scene,
    start_pose: &Pose,
    twist_per_scan: &Twist,
    config: &SensorConfig,
    noise: Option<&NoiseModel>,
) -> Result<SimulatedScan, PointCloudError> {
    config.validate()?;
    if scene.is_empty() {
        return Err(PointCloudError::Sensor("scene has no primitives".into()));
    }
    if !twist_per_scan.is_finite() || twist_per_scan.phi.norm() >= std::f64::consts::PI {
        return Err(PointCloudError::Sensor(
            "twist per scan must be finite with rotation below pi".into(),
        ));
    }

    let n_cols = config.columns_per_rev;
    let beams: Vec<Vec<Vector3<f64>>> = (0..n_cols)
        .map(|n| {
            let (sa, ca) = config.column_azimuth(n).sin_cos();
            config
                .vertical_angles
                .iter()
                .map(|e| {
                    let (se, ce) = e.sin_cos();
                    Vector3::new(ce * ca, ce * sa, se)
                })
                .collect()
        })
        .collect();

    let column_poses: Vec<Pose> = (0..n_cols)
        .map(|n| start_pose * &exp_se3(&twist_per_scan.scaled(n as f64 / n_cols as f64)))
        .collect();

    let hits: Vec<Vec<Option<f64>>> = (0..n_cols)
        .into_par_iter()
        .map(|n| {
            let pose = &column_poses[n];
            beams[n]
                .iter()
                .map(|d| scene.cast(&pose.translation, &(pose.rotation * d)))
                .collect()
        })
        .collect();

    let mut rng = noise.map(|m| (m.sigma, ChaCha8Rng::seed_from_u64(m.seed)));
    let mut scan = Scan::empty(0, config.ring_count());
    for ring in scan.rings.iter_mut() {
        ring.column_count = n_cols;
    }
    let mut misses = 0;
    for (n, col) in hits.iter().enumerate() {
        for (m, hit) in col.iter().enumerate() {
            let Some(mut t) = *hit else {
                misses += 1;
                continue;
            };
            if let Some((sigma, rng)) = rng.as_mut() {
                let z: f64 = StandardNormal.sample(rng);
                t += *sigma * z;
            }
            if t < config.min_range || t > config.max_range {
                misses += 1;
                continue;
            }
            scan.rings[m].points.push(IndexedPoint {
                position: beams[n][m] * t,
                ring: m,
                column: n,
                azimuth_fraction: n as f64 / n_cols as f64,
            });
        }
    }
    let end_pose = start_pose * &exp_se3(twist_per_scan);
    Ok(SimulatedScan {
        scan,
        column_poses,
        end_pose,
        misses,
    })
}

impl SimulatedScan {
    /// Ring-major copy of the scan with every point moved into the world frame by its true column pose.
    pub fn world_points(&self) -> Vec<Vector3<f64>> {
        self.scan
            .points()
            .map(|p| self.column_poses[p.column].transform_point(&p.position))
            .collect()
    }
}
