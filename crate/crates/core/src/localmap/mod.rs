//! Global edge and planar feature maps with landmark fitting and keyframe-gated insertion.

mod kdtree;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

pub use kdtree::{KdTree, Neighbor};

use crate::features::{FeatureCloud, FeaturePoint};
use crate::geometry::{rotation_angle, Pose};

/// Eigenvalues (m²) below this are treated as zero spread.
const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineLandmark {
    pub center: Vector3<f64>,
    pub direction: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneLandmark {
    pub center: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSide {
    Edge,
    Plane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyframePolicy {
    /// Meters.
    pub translation_threshold: f64,
    /// Radians.
    pub rotation_threshold: f64,
    pub every_frame: bool,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self {
            translation_threshold: 0.5,
            rotation_threshold: 0.175,
            every_frame: false,
        }
    }
}

impl KeyframePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.translation_threshold > 0.0 && self.rotation_threshold > 0.0) {
            return Err("keyframe thresholds must be positive".into());
        }
        Ok(())
    }

    pub fn is_keyframe(&self, pose: &Pose, last_keyframe: &Pose) -> bool {
        if self.every_frame {
            return true;
        }
        let dt = (pose.translation - last_keyframe.translation).norm();
        let dr = rotation_angle(&(last_keyframe.rotation.transpose() * pose.rotation));
        dt > self.translation_threshold || dr > self.rotation_threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    /// Voxel edge length for the edge map, meters.
    pub edge_leaf: f64,
    /// Voxel edge length for the plane map, meters.
    pub plane_leaf: f64,
    /// Map points used to fit each landmark.
    pub neighbors: usize,
    pub line_ratio: f64,
    pub plane_ratio: f64,
    /// Meters.
    pub max_edge_distance: f64,
    /// Meters.
    pub max_plane_distance: f64,
    /// Largest distance of a fitted point from its line, meters.
    pub max_line_residual: f64,
    /// Largest distance of a fitted point from its plane, meters.
    pub max_plane_residual: f64,
    /// Farthest allowed neighbour of a landmark query, meters.
    pub max_neighbor_spread: f64,
    /// Largest distance of the query itself from its landmark, meters.
    pub max_match_residual: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            edge_leaf: 0.4,
            plane_leaf: 0.8,
            neighbors: 5,
            line_ratio: 3.0,
            plane_ratio: 3.0,
            max_edge_distance: 1.0,
            max_plane_distance: 1.0,
            max_line_residual: 0.05,
            max_plane_residual: 0.05,
            max_neighbor_spread: 2.0,
            max_match_residual: 0.5,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            self.edge_leaf,
            self.plane_leaf,
            self.line_ratio,
            self.plane_ratio,
            self.max_edge_distance,
            self.max_plane_distance,
            self.max_line_residual,
            self.max_plane_residual,
            self.max_neighbor_spread,
            self.max_match_residual,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("map leaves, ratios and distances must be positive".into());
        }
        if self.neighbors < 3 {
            return Err("landmark fitting needs at least 3 neighbors".into());
        }
        Ok(())
    }
}

fn mean_and_covariance(points: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let center = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points
        .iter()
        .map(|p| {
            let d = p - center;
            d * d.transpose()
        })
        .sum::<Matrix3<f64>>()
        / n;
    (center, cov)
}

/// Eigenpairs sorted by descending eigenvalue.
fn sorted_eigen(cov: &Matrix3<f64>) -> [(f64, Vector3<f64>); 3] {
    let eig = SymmetricEigen::new(*cov);
    let mut pairs: [(f64, Vector3<f64>); 3] =
        std::array::from_fn(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).normalize()));
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Flips `v` so its largest-magnitude component is positive.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    if v[v.iamax()] < 0.0 {
        -v
    } else {
        v
    }
}

pub fn fit_line(points: &[Vector3<f64>], ratio: f64) -> Option<LineLandmark> {
    if points.len() < 3 {
        return None;
    }
    let (center, cov) = mean_and_covariance(points);
    let [(l1, v1), (l2, _), _] = sorted_eigen(&cov);
    if l1 <= EIGEN_FLOOR || l1 < ratio * l2 {
        return None;
    }
    Some(LineLandmark {
        center,
        direction: canonical_sign(v1),
    })
}

pub fn fit_plane(points: &[Vector3<f64>], ratio: f64) -> Option<PlaneLandmark> {
    if points.len() < 3 {
        return None;
    }
    let (center, cov) = mean_and_covariance(points);
    let [_, (l2, _), (l3, v3)] = sorted_eigen(&cov);
    if l2 <= EIGEN_FLOOR || l2 < ratio * l3 {
        return None;
    }
    Some(PlaneLandmark {
        center,
        normal: canonical_sign(v3),
    })
}

fn voxel_key(p: &Vector3<f64>, leaf: f64) -> [i64; 3] {
    [0, 1, 2].map(|i| (p[i] / leaf).floor() as i64)
}

/// One centroid per occupied voxel, ordered by voxel key.
pub fn voxel_downsample(points: &[Vector3<f64>], leaf: f64) -> Vec<Vector3<f64>> {
    let mut cells: BTreeMap<[i64; 3], (Vector3<f64>, usize)> = BTreeMap::new();
    for p in points {
        let cell = cells.entry(voxel_key(p, leaf)).or_insert((Vector3::zeros(), 0));
        cell.0 += p;
        cell.1 += 1;
    }
    cells.into_values().map(|(sum, n)| sum / n as f64).collect()
}

#[derive(Debug, Clone)]
pub struct FeatureMap {
    config: MapConfig,
    edges: KdTree,
    planes: KdTree,
}

impl FeatureMap {
    pub fn new(config: MapConfig) -> Self {
        Self {
            config,
            edges: KdTree::default(),
            planes: KdTree::default(),
        }
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    fn side(&self, side: MapSide) -> &KdTree {
        match side {
            MapSide::Edge => &self.edges,
            MapSide::Plane => &self.planes,
        }
    }

    pub fn points(&self, side: MapSide) -> &[Vector3<f64>] {
        self.side(side).points()
    }

    pub fn len(&self, side: MapSide) -> usize {
        self.side(side).len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.planes.is_empty()
    }

    /// Up to `k` stored points with their distances, nearest first.
    pub fn knn(&self, side: MapSide, query: &Vector3<f64>, k: usize) -> Vec<(Vector3<f64>, f64)> {
        let tree = self.side(side);
        tree.knn(query, k)
            .into_iter()
            .map(|n| (tree.points()[n.index], n.distance_sq.sqrt()))
            .collect()
    }

    fn gated_neighbors(&self, side: MapSide, query: &Vector3<f64>, max_distance: f64) -> Option<Vec<Vector3<f64>>> {
        let tree = self.side(side);
        let found = tree.knn(query, self.config.neighbors);
        let spread = self.config.max_neighbor_spread;
        if found.len() < self.config.neighbors
            || found[0].distance_sq > max_distance * max_distance
            || found[found.len() - 1].distance_sq > spread * spread
        {
            return None;
        }
        Some(found.iter().map(|n| tree.points()[n.index]).collect())
    }

    /// Line through the map edge points around a world-frame query.
    pub fn edge_landmark(&self, query: &Vector3<f64>) -> Option<LineLandmark> {
        let pts = self.gated_neighbors(MapSide::Edge, query, self.config.max_edge_distance)?;
        let line = fit_line(&pts, self.config.line_ratio)?;
        let worst = pts
            .iter()
            .map(|p| (p - line.center).cross(&line.direction).norm())
            .fold(0.0, f64::max);
        let off = (query - line.center).cross(&line.direction).norm();
        (worst <= self.config.max_line_residual && off <= self.config.max_match_residual).then_some(line)
    }

    /// Plane through the map planar points around a world-frame query.
    pub fn plane_landmark(&self, query: &Vector3<f64>) -> Option<PlaneLandmark> {
        let pts = self.gated_neighbors(MapSide::Plane, query, self.config.max_plane_distance)?;
        let plane = fit_plane(&pts, self.config.plane_ratio)?;
        let worst = pts
            .iter()
            .map(|p| plane.normal.dot(&(p - plane.center)).abs())
            .fold(0.0, f64::max);
        let off = plane.normal.dot(&(query - plane.center)).abs();
        (worst <= self.config.max_plane_residual && off <= self.config.max_match_residual).then_some(plane)
    }

    /// Moves `features` into the world by `pose`, merges them and re-indexes both sides.
    pub fn insert(&mut self, features: &FeatureCloud, pose: &Pose) {
        let merge = |tree: &KdTree, add: &[FeaturePoint], leaf: f64| {
            let mut all = tree.points().to_vec();
            all.extend(add.iter().map(|f| pose.transform_point(&f.position)));
            KdTree::new(voxel_downsample(&all, leaf))
        };
        if !features.edges.is_empty() {
            self.edges = merge(&self.edges, &features.edges, self.config.edge_leaf);
        }
        if !features.planars.is_empty() {
            self.planes = merge(&self.planes, &features.planars, self.config.plane_leaf);
        }
    }

    /// Inserts only when `pose` has moved far enough from the last keyframe.
    pub fn maybe_insert(
        &mut self,
        features: &FeatureCloud,
        pose: &Pose,
        last_keyframe: &Pose,
        policy: &KeyframePolicy,
    ) -> bool {
        let insert = policy.is_keyframe(pose, last_keyframe);
        if insert {
            self.insert(features, pose);
        }
        insert
    }

    /// One `E x y z` or `S x y z` line per stored point.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (tag, tree) in [("E", &self.edges), ("S", &self.planes)] {
            for p in tree.points() {
                let _ = writeln!(out, "{tag} {} {} {}", p.x, p.y, p.z);
            }
        }
        out
    }
}
