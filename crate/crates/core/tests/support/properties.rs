//! Seeded property suites over the public API, one function per module.
//!
//! Each suite returns the first violated property as an error message.

#![allow(dead_code)]

use std::collections::HashSet;

use lidar_odometry::compensation::undistort;
use lidar_odometry::eval::evaluate;
use lidar_odometry::features::{smoothness, FeatureCloud, FeatureConfig, FeaturePoint, SmoothnessForm};
use lidar_odometry::geometry::{exp_se3, log_se3, point_jacobian, Pose, Twist};
use lidar_odometry::localmap::{fit_line, fit_plane, voxel_downsample, FeatureMap, KdTree, MapConfig};
use lidar_odometry::pipeline::Trajectory;
use lidar_odometry::pointcloud::{simulate_scan, IndexedPoint, Scene, SensorConfig};
use lidar_odometry::registration::{
    align, edge_jacobian, edge_residual, plane_jacobian, plane_residual, AlignError, GnConfig,
};
use lidar_odometry::localmap::{LineLandmark, PlaneLandmark};
use nalgebra::{RowVector6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub type Check = Result<(), String>;

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if (0.1..=1.0).contains(&v.norm()) {
            return v.normalize();
        }
    }
}

fn point(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Pose {
    let rho = unit(rng) * rng.random_range(0.0..trans);
    let phi = unit(rng) * rng.random_range(0.0..rot);
    exp_se3(&Twist::new(rho, phi))
}

fn pose_error(a: &Pose, b: &Pose) -> (f64, f64) {
    let d = a.inverse() * *b;
    (d.translation.norm(), d.rotation_angle().to_degrees())
}

/// Central differences of a scalar function under a left perturbation.
fn fd_row(f: impl Fn(&Pose) -> f64, t: &Pose) -> RowVector6<f64> {
    let eps = 1e-6;
    RowVector6::from_fn(|_, k| {
        let mut d = Vector6::zeros();
        d[k] = eps;
        let plus = exp_se3(&Twist::from_vector(&d)) * *t;
        let minus = exp_se3(&Twist::from_vector(&-d)) * *t;
        (f(&plus) - f(&minus)) / (2.0 * eps)
    })
}

pub fn geometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..1000 {
        let xi = Twist::new(point(&mut rng, 10.0), unit(&mut rng) * rng.random_range(0.0..3.0));
        let back = log_se3(&exp_se3(&xi)).map_err(|e| e.to_string())?;
        let err = (back.to_vector() - xi.to_vector()).amax();
        ensure!(err < 1e-9, "exp/log roundtrip case {case}: error {err:e}");
    }
    let eps = 1e-6;
    for case in 0..100 {
        let t = pose(&mut rng, 3.0, 10.0);
        let p = unit(&mut rng) * rng.random_range(0.0..100.0);
        let j = point_jacobian(&t, &p);
        for col in 0..6 {
            let mut d = Vector6::zeros();
            d[col] = eps;
            let plus = exp_se3(&Twist::from_vector(&d)) * t;
            let minus = exp_se3(&Twist::from_vector(&-d)) * t;
            let fd = (plus.transform_point(&p) - minus.transform_point(&p)) / (2.0 * eps);
            let err = (fd - j.column(col)).amax();
            ensure!(err < 1e-5, "point jacobian case {case} column {col}: error {err:e}");
        }
    }
    Ok(())
}

pub fn features() -> Check {
    let cfg = FeatureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for case in 0..100 {
        let start = point(&mut rng, 20.0);
        let dir = unit(&mut rng);
        let step = rng.random_range(0.01..0.5);
        let ring: Vec<Vector3<f64>> = (0..11).map(|i| start + dir * (step * i as f64)).collect();
        let s = smoothness(&ring, 5, &cfg).ok_or("no smoothness for a full neighbourhood")?;
        ensure!(s < 1e-12, "collinear case {case}: smoothness {s:e}");
    }
    let axis: Vec<Vector3<f64>> = (0..11).map(|i| Vector3::new(0.25 * i as f64, 0.0, 0.0)).collect();
    ensure!(smoothness(&axis, 5, &cfg) == Some(0.0), "axis-aligned line is not exactly smooth");
    for case in 0..1000 {
        let ring: Vec<Vector3<f64>> = (0..11).map(|_| point(&mut rng, 20.0)).collect();
        let t = pose(&mut rng, 3.0, 10.0);
        let moved: Vec<Vector3<f64>> = ring.iter().map(|p| t.transform_point(p)).collect();
        for form in [SmoothnessForm::NormOfSum, SmoothnessForm::MeanOfNorms] {
            let c = FeatureConfig {
                smoothness_form: form,
                ..Default::default()
            };
            let (a, b) = (smoothness(&ring, 5, &c).unwrap(), smoothness(&moved, 5, &c).unwrap());
            ensure!((a - b).abs() < 1e-9, "isometry case {case} {form:?}: {a} vs {b}");
        }
    }
    Ok(())
}

fn feature(p: Vector3<f64>, sigma: f64) -> FeaturePoint {
    FeaturePoint {
        position: p,
        smoothness: sigma,
        azimuth_fraction: 0.0,
        ring: 0,
        column: 0,
    }
}

fn grid_axis(a: f64, b: f64) -> impl Iterator<Item = f64> {
    let n = ((b - a) / 0.25).round() as usize;
    (0..=n).map(move |i| a + i as f64 * 0.25)
}

/// Walls, floor and ceiling of a 12 x 10 x 4 m room sampled every 0.25 m.
fn room_faces() -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for u in grid_axis(-6.0, 6.0) {
        for v in grid_axis(-5.0, 5.0) {
            out.push(Vector3::new(u, v, -1.5));
            out.push(Vector3::new(u, v, 2.5));
        }
        for z in grid_axis(-1.5, 2.5) {
            out.push(Vector3::new(u, -5.0, z));
            out.push(Vector3::new(u, 5.0, z));
        }
    }
    for v in grid_axis(-5.0, 5.0) {
        for z in grid_axis(-1.5, 2.5) {
            out.push(Vector3::new(-6.0, v, z));
            out.push(Vector3::new(6.0, v, z));
        }
    }
    out
}

/// Vertical edges: room corners and the corners of two 2 x 2 m pillars.
fn room_edges() -> Vec<Vector3<f64>> {
    let mut corners = vec![(-6.0, -5.0), (6.0, -5.0), (6.0, 5.0), (-6.0, 5.0)];
    for (cx, cy) in [(2.0, 1.5), (-3.0, -2.0)] {
        for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            corners.push((cx + dx, cy + dy));
        }
    }
    corners
        .into_iter()
        .flat_map(|(x, y)| grid_axis(-1.5, 2.5).map(move |z| Vector3::new(x, y, z)))
        .collect()
}

/// Face points at least 1.2 m from every other surface of the room.
fn interior(p: &Vector3<f64>) -> bool {
    let inside = |v: f64, lo: f64, hi: f64| v >= lo + 1.2 && v <= hi - 1.2;
    if p.z == -1.5 || p.z == 2.5 {
        inside(p.x, -6.0, 6.0) && inside(p.y, -5.0, 5.0)
    } else if p.y.abs() == 5.0 {
        inside(p.x, -6.0, 6.0) && inside(p.z, -1.5, 2.5)
    } else {
        inside(p.y, -5.0, 5.0) && inside(p.z, -1.5, 2.5)
    }
}

fn fine_map() -> FeatureMap {
    let cfg = MapConfig {
        edge_leaf: 0.1,
        plane_leaf: 0.1,
        ..Default::default()
    };
    let mut map = FeatureMap::new(cfg);
    let cloud = FeatureCloud {
        edges: room_edges().into_iter().map(|p| feature(p, 0.0)).collect(),
        planars: room_faces().into_iter().map(|p| feature(p, 0.0)).collect(),
    };
    map.insert(&cloud, &Pose::identity());
    map
}

/// Features slid along their surfaces, seen from `truth`.
fn room_scan(rng: &mut ChaCha8Rng, truth: &Pose) -> FeatureCloud {
    let edges = room_edges();
    let faces: Vec<_> = room_faces().into_iter().filter(interior).collect();
    let inv = truth.inverse();
    let edge_feats = (0..120)
        .map(|_| {
            let p = edges[rng.random_range(0..edges.len())] + Vector3::z() * rng.random_range(-0.1..0.1);
            feature(inv.transform_point(&p), rng.random_range(0.1..1.0))
        })
        .collect();
    let plane_feats = (0..400)
        .map(|_| {
            let mut q = faces[rng.random_range(0..faces.len())];
            let normal_axis = if q.z == -1.5 || q.z == 2.5 {
                2
            } else if q.y.abs() == 5.0 {
                1
            } else {
                0
            };
            for k in (0..3).filter(|&k| k != normal_axis) {
                q[k] += rng.random_range(-0.1..0.1);
            }
            feature(inv.transform_point(&q), rng.random_range(0.0..0.03))
        })
        .collect();
    FeatureCloud {
        edges: edge_feats,
        planars: plane_feats,
    }
}

pub fn registration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let id = Pose::identity();
    let z_line = LineLandmark {
        center: Vector3::zeros(),
        direction: Vector3::z(),
    };
    let ground = PlaneLandmark {
        center: Vector3::zeros(),
        normal: Vector3::z(),
    };
    ensure!(edge_residual(&id, &Vector3::new(0.0, 0.0, 7.0), &z_line) == 0.0, "point on line has residual");
    ensure!(plane_residual(&id, &Vector3::new(4.0, -1.0, 0.0), &ground) == 0.0, "point on plane has residual");
    for _ in 0..100 {
        let t = pose(&mut rng, 3.0, 10.0);
        let s = rng.random_range(-5.0..5.0);
        let on_line = t.inverse().transform_point(&(z_line.center + z_line.direction * s));
        let r = edge_residual(&t, &on_line, &z_line);
        ensure!(r.abs() < 1e-9, "moved point on line has residual {r:e}");
        let on_plane = t.inverse().transform_point(&Vector3::new(s, -s, 0.0));
        let r = plane_residual(&t, &on_plane, &ground);
        ensure!(r.abs() < 1e-9, "moved point on plane has residual {r:e}");
    }

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = pose(&mut rng, 2.0, 5.0);
        let p = point(&mut rng, 10.0);
        let w = rng.random_range(0.1..2.0);
        let line = LineLandmark {
            center: point(&mut rng, 10.0),
            direction: unit(&mut rng),
        };
        let plane = PlaneLandmark {
            center: point(&mut rng, 10.0),
            normal: unit(&mut rng),
        };
        let je = edge_jacobian(&t, &p, &line, w) - fd_row(|x| w * edge_residual(x, &p, &line), &t);
        let jp = plane_jacobian(&t, &p, &plane, w) - fd_row(|x| w * plane_residual(x, &p, &plane), &t);
        worst = worst.max(je.amax()).max(jp.amax());
    }
    ensure!(worst < 1e-5, "jacobian differs from finite differences by {worst:e}");

    let map = fine_map();
    let mut recovered = 0;
    for _ in 0..100 {
        let truth = pose(&mut rng, 0.2, 1.0);
        let cloud = room_scan(&mut rng, &truth);
        let init = pose(&mut rng, 10f64.to_radians(), 0.5) * truth;
        if let Ok((t, _)) = align(&cloud, &map, &init, &GnConfig::default()) {
            let (dt, dr) = pose_error(&t, &truth);
            if dt < 1e-3 && dr < 0.01 {
                recovered += 1;
            }
        }
    }
    ensure!(recovered >= 95, "recovered {recovered} of 100 perturbations");

    let mut planars = Vec::new();
    for i in 0..30 {
        for j in 0..30 {
            let (x, y) = (i as f64 * 0.5 - 7.5, j as f64 * 0.5 - 7.5);
            planars.push(feature(Vector3::new(x, y, -1.5), 0.0));
            planars.push(feature(Vector3::new(x, y, 2.0), 0.0));
        }
    }
    let cloud = FeatureCloud { edges: vec![], planars };
    let mut flat = FeatureMap::new(MapConfig::default());
    flat.insert(&cloud, &Pose::identity());
    let init = Pose::from_translation(Vector3::new(0.1, 0.0, 0.05));
    match align(&cloud, &flat, &init, &GnConfig::default()) {
        Err(AlignError::Degenerate { .. }) => Ok(()),
        other => Err(format!("parallel planes: expected degeneracy, got {other:?}")),
    }
}

pub fn localmap() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let cloud: Vec<Vector3<f64>> = (0..10_000)
        .map(|_| Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-5.0..5.0)))
        .collect();
    let tree = KdTree::new(cloud.clone());
    for _ in 0..200 {
        let q = Vector3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(-8.0..8.0));
        let mut exhaustive: Vec<(f64, usize)> = cloud.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
        exhaustive.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for k in [1, 5, 12] {
            let got: Vec<(f64, usize)> = tree.knn(&q, k).iter().map(|n| (n.distance_sq, n.index)).collect();
            ensure!(got == exhaustive[..k], "knn({k}) differs from exhaustive search at {q:?}");
        }
    }

    let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
    let line_pts: Vec<Vector3<f64>> = (0..7).map(|i| Vector3::new(1.0, 1.0, 1.0) + dir * (0.3 * i as f64)).collect();
    let line = fit_line(&line_pts, 3.0).ok_or("collinear points gave no line")?;
    ensure!(line.direction.cross(&dir).norm() < 1e-9, "line direction {:?}", line.direction);
    let plane_pts: Vec<Vector3<f64>> = (0..5)
        .flat_map(|i| (0..5).map(move |j| Vector3::new(i as f64 * 0.2, j as f64 * 0.2, 0.0)))
        .collect();
    let plane = fit_plane(&plane_pts, 3.0).ok_or("planar grid gave no plane")?;
    ensure!((plane.normal.z.abs() - 1.0).abs() < 1e-9, "plane normal {:?}", plane.normal);
    ensure!(fit_line(&plane_pts, 3.0).is_none(), "planar grid accepted as a line");

    for case in 0..100 {
        let t = pose(&mut rng, 3.0, 10.0);
        let moved_line: Vec<_> = line_pts.iter().map(|p| t.transform_point(p)).collect();
        let moved_plane: Vec<_> = plane_pts.iter().map(|p| t.transform_point(p)).collect();
        let l = fit_line(&moved_line, 3.0).ok_or("moved line rejected")?;
        let p = fit_plane(&moved_plane, 3.0).ok_or("moved plane rejected")?;
        ensure!(
            l.direction.cross(&(t.rotation * line.direction)).norm() < 1e-9
                && (l.center - t.transform_point(&line.center)).norm() < 1e-9,
            "line fit not rigid-invariant in case {case}"
        );
        ensure!(
            p.normal.cross(&(t.rotation * plane.normal)).norm() < 1e-9
                && (p.center - t.transform_point(&plane.center)).norm() < 1e-9,
            "plane fit not rigid-invariant in case {case}"
        );
    }

    for leaf in [0.1, 0.4, 0.8, 2.5] {
        let occupied: HashSet<[i64; 3]> = cloud.iter().map(|p| [0, 1, 2].map(|i| (p[i] / leaf).floor() as i64)).collect();
        let n = voxel_downsample(&cloud, leaf).len();
        ensure!(n == occupied.len(), "leaf {leaf}: {n} voxels, oracle {}", occupied.len());
    }
    Ok(())
}

fn plane_fit_residual(points: &[Vector3<f64>]) -> f64 {
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let cov: nalgebra::Matrix3<f64> = points.iter().map(|p| (p - c) * (p - c).transpose()).sum();
    let eig = cov.symmetric_eigen();
    let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    points.iter().map(|p| (p - c).dot(&normal).abs()).fold(0.0, f64::max)
}

pub fn compensation() -> Check {
    let scene = Scene::new(Scene::box_room(Vector3::new(-5.0, -5.0, -2.0), Vector3::new(5.0, 5.0, 2.0)));
    let twist = Twist::new(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.1));
    let sim = simulate_scan(&scene, &Pose::identity(), &twist, &SensorConfig::vlp16(1800), None)
        .map_err(|e| e.to_string())?;
    let raw: Vec<IndexedPoint> = sim.scan.points().copied().collect();
    let on_wall: Vec<bool> = raw
        .iter()
        .map(|p| {
            let w = sim.column_poses[p.column].transform_point(&p.position);
            (w.x - 5.0).abs() < 1e-6 && w.y.abs() < 4.5 && w.z.abs() < 1.5
        })
        .collect();
    let wall = |pts: &[IndexedPoint]| -> Vec<Vector3<f64>> {
        pts.iter().zip(&on_wall).filter(|(_, w)| **w).map(|(p, _)| p.position).collect()
    };
    let before = plane_fit_residual(&wall(&raw));
    let after = plane_fit_residual(&wall(&undistort(&raw, &twist)));
    ensure!(before > 1e-3, "skewed wall residual only {before:e}");
    ensure!(after < 1e-6, "deskewed wall residual {after:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for case in 0..1000 {
        let xi = Twist::new(point(&mut rng, 1.0), point(&mut rng, 0.5));
        let mut p = feature(point(&mut rng, 50.0), 0.0);
        p.azimuth_fraction = rng.random_range(0.0..1.0);
        let back = undistort(&undistort(&[p], &xi), &-xi);
        let err = (back[0].position - p.position).amax();
        ensure!(err < 1e-9, "negated undistort case {case}: error {err:e}");
    }
    Ok(())
}

pub fn eval() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut poses = vec![Pose::identity()];
    for _ in 0..80 {
        let step = Twist::new(Vector3::new(rng.random_range(0.3..0.8), 0.0, 0.0), Vector3::new(0.0, 0.0, rng.random_range(-0.1..0.1)));
        poses.push(*poses.last().unwrap() * exp_se3(&step));
    }
    let gt = Trajectory::from_poses(poses.iter().copied());
    let lengths = [5.0, 10.0, 20.0];
    let same = evaluate(&gt, &gt, &lengths).map_err(|e| e.to_string())?;
    ensure!(same.ate == 0.0 && same.are == 0.0, "evaluate(T, T) = ({}, {})", same.ate, same.are);

    let est = Trajectory::from_poses(poses.iter().map(|p| *p * exp_se3(&Twist::new(point(&mut rng, 0.05), point(&mut rng, 0.01)))));
    let base = evaluate(&est, &gt, &lengths).map_err(|e| e.to_string())?;
    let g = exp_se3(&Twist::new(Vector3::new(-4.0, 7.0, 1.0), Vector3::new(-0.7, 0.1, 0.4)));
    let moved = |t: &Trajectory| Trajectory::from_poses(t.poses().map(|p| g * *p));
    let both = evaluate(&moved(&est), &moved(&gt), &lengths).map_err(|e| e.to_string())?;
    ensure!(
        (base.ate - both.ate).abs() < 1e-9 && (base.are - both.are).abs() < 1e-9,
        "gauge changed ({}, {}) to ({}, {})",
        base.ate,
        base.are,
        both.ate,
        both.are
    );

    let line = |end: f64| Trajectory::from_poses([Pose::identity(), Pose::from_translation(Vector3::new(end, 0.0, 0.0))]);
    let over = evaluate(&line(101.0), &line(100.0), &[100.0]).map_err(|e| e.to_string())?;
    ensure!((over.ate - 1.0).abs() < 1e-12, "1% overshoot scored {}%", over.ate);
    Ok(())
}

/// Every suite with its name, in module order.
pub const SUITES: [(&str, fn() -> Check); 6] = [
    ("geometry", geometry),
    ("features", features),
    ("registration", registration),
    ("localmap", localmap),
    ("compensation", compensation),
    ("eval", eval),
];
