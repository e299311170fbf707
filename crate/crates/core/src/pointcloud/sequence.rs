//! Multi-scan simulation under a piecewise-constant motion schedule.

use super::{simulate_scan, NoiseModel, PointCloudError, Scene, SensorConfig, SimulatedScan};
use crate::geometry::{exp_se3, Pose, Twist};

/// Per-scan twists: `(scan count, twist per scan)` segments in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionSchedule {
    pub segments: Vec<(usize, Twist)>,
}

impl MotionSchedule {
    pub fn constant(scans: usize, twist: Twist) -> Self {
        Self {
            segments: vec![(scans, twist)],
        }
    }

    /// Twist per scan from body-frame linear (m/s) and angular (rad/s) rates.
    pub fn from_rates(
        scans: usize,
        velocity: nalgebra::Vector3<f64>,
        angular: nalgebra::Vector3<f64>,
        period: f64,
    ) -> Self {
        Self::constant(scans, Twist::new(velocity * period, angular * period))
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|(n, _)| n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn twists(&self) -> impl Iterator<Item = Twist> + '_ {
        self.segments
            .iter()
            .flat_map(|(n, t)| std::iter::repeat_n(*t, *n))
    }

    /// End-of-sweep poses: `T_0 = end_of_first`, `T_k = T_{k-1} exp(xi_k)`.
    pub fn poses(&self, end_of_first: &Pose) -> Vec<Pose> {
        let mut out: Vec<Pose> = Vec::with_capacity(self.len());
        for xi in self.twists() {
            let pose = match out.last() {
                None => *end_of_first,
                Some(prev) => *prev * exp_se3(&xi),
            };
            out.push(pose);
        }
        out
    }
}

/// Simulates each scan of `schedule`; scan `k` ends at `poses(end_of_first)[k]`.
///
/// Noise seeds are derived from `noise.seed` and the scan index.
pub fn simulate_sequence<'a>(
    scene: &'a Scene,
    end_of_first: &Pose,
    schedule: &'a MotionSchedule,
    config: &'a SensorConfig,
    noise: Option<NoiseModel>,
) -> impl Iterator<Item = Result<SimulatedScan, PointCloudError>> + 'a {
    let ends = schedule.poses(end_of_first);
    schedule.twists().zip(ends).enumerate().map(move |(k, (xi, end))| {
        let start = end * exp_se3(&-xi);
        let scan_noise = noise.map(|m| NoiseModel {
            sigma: m.sigma,
            seed: m.seed.wrapping_add(k as u64),
        });
        let mut sim = simulate_scan(scene, &start, &xi, config, scan_noise.as_ref())?;
        sim.scan.index = k;
        sim.end_pose = end;
        Ok(sim)
    })
}

#[cfg(test)]
mod tests {
    use super::super::presets::hall;
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn poses_follow_the_recurrence() {
        let xi = Twist::new(Vector3::new(0.4, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.1));
        let schedule = MotionSchedule {
            segments: vec![(3, xi), (0, Twist::zero()), (2, -xi)],
        };
        assert_eq!(schedule.len(), 5);
        let poses = schedule.poses(&Pose::identity());
        assert_eq!(poses[0], Pose::identity());
        assert_eq!(poses[2], poses[1] * exp_se3(&xi));
        assert_eq!(poses[4], poses[3] * exp_se3(&-xi));
    }

    #[test]
    fn scans_end_at_schedule_poses() {
        let scene = hall();
        let cfg = SensorConfig::vlp16(360);
        let schedule = MotionSchedule::from_rates(3, Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.5), 0.2);
        let poses = schedule.poses(&Pose::identity());
        let sims: Vec<_> = simulate_sequence(&scene, &Pose::identity(), &schedule, &cfg, None)
            .collect::<Result<_, _>>()
            .unwrap();
        for (k, sim) in sims.iter().enumerate() {
            assert_eq!(sim.scan.index, k);
            assert_eq!(sim.end_pose, poses[k]);
            let last = sim.column_poses.last().unwrap();
            // last column fires one column period before the end of the sweep
            assert!((last.translation - poses[k].translation).norm() < 0.4 / 360.0 * 1.01);
        }
    }
}
