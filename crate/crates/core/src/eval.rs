//! Segment-based relative pose error (KITTI odometry style).

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{rotation_angle, Pose};
use crate::pipeline::Trajectory;

pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("trajectories differ in length: {est} estimated vs {gt} ground truth")]
    LengthMismatch { est: usize, gt: usize },
    #[error("scan index mismatch at position {position}: {est} vs {gt}")]
    IndexMismatch { position: usize, est: usize, gt: usize },
    #[error("no segment length fits the ground-truth path ({path:.3} m)")]
    NoSegments { path: f64 },
    #[error("segment lengths must be positive and finite")]
    BadLength,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentError {
    /// Percent.
    pub ate: f64,
    /// Degrees per meter.
    pub are: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    /// Percent.
    pub ate: f64,
    /// Degrees per meter.
    pub are: f64,
    pub pairs: usize,
    /// Ascending segment length in meters.
    pub per_length: Vec<(f64, SegmentError)>,
    /// Lengths longer than the ground-truth path.
    pub skipped: Vec<f64>,
}

fn cumulative_distance(gt: &[&Pose]) -> Vec<f64> {
    let mut d = Vec::with_capacity(gt.len());
    let mut acc = 0.0;
    for (k, p) in gt.iter().enumerate() {
        if k > 0 {
            acc += (p.translation - gt[k - 1].translation).norm();
        }
        d.push(acc);
    }
    d
}

/// Relative error of the motion `i -> j`, estimated against ground truth.
fn pair_error(est: &[&Pose], gt: &[&Pose], i: usize, j: usize) -> (f64, f64) {
    let rel_est = est[i].inverse() * *est[j];
    let rel_gt = gt[i].inverse() * *gt[j];
    let delta = rel_est.inverse() * rel_gt;
    (delta.translation.norm(), rotation_angle(&delta.rotation))
}

pub fn evaluate(est: &Trajectory, gt: &Trajectory, lengths: &[f64]) -> Result<ErrorReport, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    for (position, (a, b)) in est.indices().zip(gt.indices()).enumerate() {
        if a != b {
            return Err(EvalError::IndexMismatch { position, est: a, gt: b });
        }
    }
    if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(EvalError::BadLength);
    }
    let est: Vec<&Pose> = est.poses().collect();
    let gt: Vec<&Pose> = gt.poses().collect();
    let dist = cumulative_distance(&gt);
    let path = dist.last().copied().unwrap_or(0.0);

    let mut sorted: Vec<f64> = lengths.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut report = ErrorReport::default();
    let (mut t_sum, mut r_sum) = (0.0, 0.0);
    for &len in &sorted {
        // per start frame: first frame whose path distance reaches `len`
        let errors: Vec<(f64, f64)> = (0..gt.len())
            .into_par_iter()
            .filter_map(|i| {
                let target = dist[i] + len;
                let j = i + dist[i..].partition_point(|&d| d < target);
                (j < gt.len()).then(|| pair_error(&est, &gt, i, j))
            })
            .collect();
        if errors.is_empty() {
            report.skipped.push(len);
            continue;
        }
        let (mut t, mut r) = (0.0, 0.0);
        for (dt, dr) in &errors {
            t += dt / len;
            r += dr / len;
        }
        t_sum += t;
        r_sum += r;
        report.pairs += errors.len();
        let n = errors.len() as f64;
        report.per_length.push((
            len,
            SegmentError {
                ate: 100.0 * t / n,
                are: (r / n).to_degrees(),
                pairs: errors.len(),
            },
        ));
    }
    if report.pairs == 0 {
        return Err(EvalError::NoSegments { path });
    }
    report.ate = 100.0 * t_sum / report.pairs as f64;
    report.are = (r_sum / report.pairs as f64).to_degrees();
    Ok(report)
}

/// Root-mean-square translation error, meters, with both trajectories expressed relative to their first pose.
pub fn translation_rmse(est: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    let (Some(e0), Some(g0)) = (est.poses().next(), gt.poses().next()) else {
        return Ok(0.0);
    };
    let (e0, g0) = (e0.inverse(), g0.inverse());
    let sum: f64 = est
        .poses()
        .zip(gt.poses())
        .map(|(e, g)| ((e0 * *e).translation - (g0 * *g).translation).norm_squared())
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

/// Parses KITTI pose text: twelve numbers per nonempty line, scans numbered from 0.
pub fn read_kitti_poses(text: &str) -> Result<Trajectory, EvalError> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: n + 1, message };
        if fields.len() != 12 {
            return Err(err(format!("expected 12 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 12];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| err(format!("'{f}' is not a number")))?;
            if !slot.is_finite() {
                return Err(err(format!("'{f}' is not finite")));
            }
        }
        poses.push(Pose::from_rows(&v));
    }
    Ok(Trajectory::from_poses(poses))
}

impl ErrorReport {
    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ate_percent={}", self.ate);
        let _ = writeln!(out, "are_deg_per_m={}", self.are);
        let _ = writeln!(out, "pairs={}", self.pairs);
        for (len, e) in &self.per_length {
            let _ = writeln!(out, "length_{len}.ate_percent={}", e.ate);
            let _ = writeln!(out, "length_{len}.are_deg_per_m={}", e.are);
            let _ = writeln!(out, "length_{len}.pairs={}", e.pairs);
        }
        for len in &self.skipped {
            let _ = writeln!(out, "length_{len}.skipped=true");
        }
        out
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ate: {:.3}%", self.ate)?;
        writeln!(f, "are: {:.4} deg/m", self.are)?;
        writeln!(f, "pairs: {}", self.pairs)?;
        writeln!(f, "{:>10} {:>10} {:>12} {:>8}", "length_m", "ate_%", "are_deg/m", "pairs")?;
        for (len, e) in &self.per_length {
            writeln!(f, "{:>10} {:>10.3} {:>12.4} {:>8}", len, e.ate, e.are, e.pairs)?;
        }
        for len in &self.skipped {
            writeln!(f, "note: {len} m exceeds the ground-truth path, skipped")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_se3, Twist};
    use crate::pipeline::write_trajectory;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wandering(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        let mut pose = Pose::identity();
        let mut poses = vec![pose];
        for _ in 1..n {
            let step = Twist::new(
                Vector3::new(1.0 + rng.random_range(0.0..0.5), rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05)),
                Vector3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.1..0.1)),
            );
            pose = pose * exp_se3(&step);
            poses.push(pose);
        }
        Trajectory::from_poses(poses)
    }

    fn perturbed(traj: &Trajectory, rng: &mut ChaCha8Rng) -> Trajectory {
        Trajectory::from_poses(traj.poses().map(|p| {
            let noise = Twist::new(
                Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05)),
                Vector3::from_fn(|_, _| rng.random_range(-0.005..0.005)),
            );
            *p * exp_se3(&noise)
        }))
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = wandering(&mut rng, 60);
        let r = evaluate(&t, &t, &[5.0, 10.0, 20.0]).unwrap();
        assert_eq!((r.ate, r.are), (0.0, 0.0));
        assert!(r.pairs > 0);
    }

    #[test]
    fn common_gauge_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = wandering(&mut rng, 60);
        let g = exp_se3(&Twist::new(Vector3::new(10.0, -3.0, 2.0), Vector3::new(0.3, -0.2, 1.1)));
        let shifted = Trajectory::from_poses(gt.poses().map(|p| g * *p));
        let r = evaluate(&shifted, &gt, &[5.0, 10.0]).unwrap();
        assert!(r.ate < 1e-9 && r.are < 1e-9);

        let est = perturbed(&gt, &mut rng);
        let base = evaluate(&est, &gt, &[5.0, 10.0, 20.0]).unwrap();
        let g2 = exp_se3(&Twist::new(Vector3::new(-4.0, 7.0, 1.0), Vector3::new(-0.7, 0.1, 0.4)));
        let both = evaluate(
            &Trajectory::from_poses(est.poses().map(|p| g2 * *p)),
            &Trajectory::from_poses(gt.poses().map(|p| g2 * *p)),
            &[5.0, 10.0, 20.0],
        )
        .unwrap();
        assert!((base.ate - both.ate).abs() < 1e-9);
        assert!((base.are - both.are).abs() < 1e-9);
    }

    #[test]
    fn one_percent_overshoot() {
        let gt = Trajectory::from_poses([Pose::identity(), Pose::from_translation(Vector3::new(100.0, 0.0, 0.0))]);
        let est = Trajectory::from_poses([Pose::identity(), Pose::from_translation(Vector3::new(101.0, 0.0, 0.0))]);
        let r = evaluate(&est, &gt, &[100.0]).unwrap();
        assert!((r.ate - 1.0).abs() < 1e-12);
        assert_eq!(r.are, 0.0);
        assert_eq!(r.pairs, 1);
    }

    #[test]
    fn doubling_deviation_doubles_ate() {
        let n = 41;
        let gt = Trajectory::from_poses((0..n).map(|k| Pose::from_translation(Vector3::new(k as f64, 0.0, 0.0))));
        let drift = |scale: f64| {
            Trajectory::from_poses((0..n).map(|k| {
                let k = k as f64;
                Pose::from_translation(Vector3::new(k * (1.0 + 0.01 * scale), 0.002 * scale * k, 0.0))
            }))
        };
        let a = evaluate(&drift(1.0), &gt, &[5.0, 10.0, 20.0]).unwrap();
        let b = evaluate(&drift(2.0), &gt, &[5.0, 10.0, 20.0]).unwrap();
        assert!((b.ate / a.ate - 2.0).abs() < 1e-6);
    }

    #[test]
    fn long_lengths_are_skipped() {
        let gt = Trajectory::from_poses((0..11).map(|k| Pose::from_translation(Vector3::new(k as f64, 0.0, 0.0))));
        let r = evaluate(&gt, &gt, &[5.0, 100.0]).unwrap();
        assert_eq!(r.skipped, vec![100.0]);
        assert_eq!(r.per_length.len(), 1);
        assert_eq!(r.per_length[0].1.pairs, 6);
        assert!(r.to_string().contains("100 m exceeds"));
        assert_eq!(evaluate(&gt, &gt, &[50.0]), Err(EvalError::NoSegments { path: 10.0 }));
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = Trajectory::from_poses([Pose::identity(); 3]);
        let b = Trajectory::from_poses([Pose::identity(); 4]);
        assert_eq!(evaluate(&a, &b, &[1.0]), Err(EvalError::LengthMismatch { est: 3, gt: 4 }));
        assert_eq!(evaluate(&a, &a, &[0.0]), Err(EvalError::BadLength));
    }

    #[test]
    fn rmse_of_a_constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = wandering(&mut rng, 30);
        assert_eq!(translation_rmse(&gt, &gt).unwrap(), 0.0);
        // shifting every pose but the first by 0.3 m along the first pose's x axis
        let shifted = Trajectory::from_poses(gt.poses().enumerate().map(|(k, p)| {
            let mut q = *p;
            if k > 0 {
                q.translation += gt.poses().next().unwrap().rotation * Vector3::new(0.3, 0.0, 0.0);
            }
            q
        }));
        let expected = (0.09 * 29.0 / 30.0f64).sqrt();
        assert!((translation_rmse(&shifted, &gt).unwrap() - expected).abs() < 1e-12);
        let g = exp_se3(&Twist::new(Vector3::new(4.0, -1.0, 2.0), Vector3::new(0.3, 0.2, -1.0)));
        let moved = Trajectory::from_poses(shifted.poses().map(|p| g * *p));
        assert!((translation_rmse(&moved, &gt).unwrap() - expected).abs() < 1e-9);
        let short = Trajectory::from_poses(gt.poses().take(3).copied());
        assert!(translation_rmse(&short, &gt).is_err());
    }

    #[test]
    fn parse_cases() {
        let t = read_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(*t.last().unwrap(), Pose::identity());
        match read_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n") {
            Err(EvalError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("11"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_kitti_poses("1 0 0 x 0 1 0 0 0 0 1 0"), Err(EvalError::Parse { line: 1, .. })));
    }

    #[test]
    fn write_then_read_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = wandering(&mut rng, 30);
        let back = read_kitti_poses(&write_trajectory(&t)).unwrap();
        for (a, b) in t.poses().zip(back.poses()) {
            assert!((a.rotation - b.rotation).amax() < 1e-9);
            assert!((a.translation - b.translation).amax() < 1e-9);
        }
    }

    #[test]
    fn report_formats() {
        let gt = Trajectory::from_poses((0..11).map(|k| Pose::from_translation(Vector3::new(k as f64, 0.0, 0.0))));
        let r = evaluate(&gt, &gt, &[5.0]).unwrap();
        let text = r.to_string();
        assert!(text.starts_with("ate: 0.000%\nare: 0.0000 deg/m\n"));
        assert!(r.key_values().contains("length_5.pairs=6\n"));
    }
}
