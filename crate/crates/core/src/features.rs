//! Local smoothness and edge/planar feature selection along each ring.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::pointcloud::{IndexedPoint, Ring, Scan};

/// How the neighbourhood differences are reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothnessForm {
    /// `||sum_j (p_j - p_n)|| / |S|`: zero on straight, uniformly sampled segments.
    #[default]
    NormOfSum,
    /// `sum_j ||p_j - p_n|| / |S|`.
    MeanOfNorms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Neighbours taken on each side of a point.
    pub neighbor_half_width: usize,
    /// Meters.
    pub edge_sigma_min: f64,
    /// Meters.
    pub planar_sigma_max: f64,
    pub sectors_per_ring: usize,
    pub max_edges_per_sector: usize,
    pub max_planars_per_sector: usize,
    /// Caps for the denser set that is inserted into the map.
    pub map_edges_per_sector: usize,
    pub map_planars_per_sector: usize,
    pub smoothness_form: SmoothnessForm,
    /// A gap longer than this multiple of the median neighbourhood spacing is a range discontinuity.
    pub discontinuity_ratio: f64,
    /// Points whose beam makes a smaller angle (radians) with the local surface are skipped.
    pub min_incidence: f64,
    /// Block the neighbourhood of each selected feature from further selection.
    pub suppress_neighbors: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            neighbor_half_width: 5,
            edge_sigma_min: 0.1,
            planar_sigma_max: 0.03,
            sectors_per_ring: 6,
            max_edges_per_sector: 2,
            max_planars_per_sector: 4,
            map_edges_per_sector: 10,
            map_planars_per_sector: 100,
            smoothness_form: SmoothnessForm::NormOfSum,
            discontinuity_ratio: 1.5,
            min_incidence: 0.2,
            suppress_neighbors: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.neighbor_half_width < 1 {
            return Err("neighbor_half_width must be at least 1".into());
        }
        if !(self.planar_sigma_max > 0.0 && self.edge_sigma_min > self.planar_sigma_max) {
            return Err("thresholds must satisfy 0 < planar_sigma_max < edge_sigma_min".into());
        }
        if self.sectors_per_ring == 0 {
            return Err("sectors_per_ring must be positive".into());
        }
        if self.map_edges_per_sector < self.max_edges_per_sector
            || self.map_planars_per_sector < self.max_planars_per_sector
        {
            return Err("map caps must be at least the matching caps".into());
        }
        if self.discontinuity_ratio <= 1.0 {
            return Err("discontinuity_ratio must exceed 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    /// Sensor frame, meters.
    pub position: Vector3<f64>,
    pub smoothness: f64,
    pub azimuth_fraction: f64,
    pub ring: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureCloud {
    pub edges: Vec<FeaturePoint>,
    pub planars: Vec<FeaturePoint>,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.edges.len() + self.planars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Smoothness of point `n` of a ring, or `None` when it lacks a full neighbourhood.
pub fn smoothness(ring: &[Vector3<f64>], n: usize, cfg: &FeatureConfig) -> Option<f64> {
    let w = cfg.neighbor_half_width;
    if n < w || n + w >= ring.len() {
        return None;
    }
    let center = ring[n];
    let neighbors = (n - w..n).chain(n + 1..=n + w).map(|j| ring[j] - center);
    let count = (2 * w) as f64;
    Some(match cfg.smoothness_form {
        SmoothnessForm::NormOfSum => neighbors.sum::<Vector3<f64>>().norm() / count,
        SmoothnessForm::MeanOfNorms => neighbors.map(|d| d.norm()).sum::<f64>() / count,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    }
}

/// True when `n` sits on the far (occluded) side of a range jump inside its neighbourhood.
fn behind_discontinuity(pts: &[Vector3<f64>], n: usize, cfg: &FeatureConfig) -> bool {
    let w = cfg.neighbor_half_width;
    let gaps: Vec<f64> = (n - w..n + w).map(|j| (pts[j + 1] - pts[j]).norm()).collect();
    let mut sorted = gaps.clone();
    let limit = cfg.discontinuity_ratio * median(&mut sorted);
    gaps.iter().enumerate().any(|(k, &g)| {
        if g <= limit {
            return false;
        }
        let j = n - w + k;
        let far_is_after = pts[j + 1].norm() > pts[j].norm();
        if far_is_after {
            n > j
        } else {
            n <= j
        }
    })
}

fn grazing(pts: &[Vector3<f64>], n: usize, min_incidence: f64) -> bool {
    // the shorter one-sided step stays on the point's own surface at a silhouette
    let (back, ahead) = (pts[n] - pts[n - 1], pts[n + 1] - pts[n]);
    let tangent = if back.norm_squared() <= ahead.norm_squared() { back } else { ahead };
    let (tn, pn) = (tangent.norm(), pts[n].norm());
    if tn == 0.0 || pn == 0.0 {
        return true;
    }
    let cos = (tangent.dot(&pts[n]) / (tn * pn)).abs().min(1.0);
    cos.acos() < min_incidence
}

#[derive(Clone, Copy)]
struct Candidate {
    idx: usize,
    sigma: f64,
    edge_ok: bool,
    planar_ok: bool,
}

type Split = (Vec<FeaturePoint>, Vec<FeaturePoint>);

fn ring_features(ring: &Ring, cfg: &FeatureConfig) -> (Split, Split) {
    let pts: Vec<Vector3<f64>> = ring.points.iter().map(|p| p.position).collect();
    let sectors = cfg.sectors_per_ring;
    let mut by_sector: Vec<Vec<Candidate>> = vec![Vec::new(); sectors];
    for n in 0..pts.len() {
        let Some(sigma) = smoothness(&pts, n, cfg) else {
            continue;
        };
        if cfg.min_incidence > 0.0 && grazing(&pts, n, cfg.min_incidence) {
            continue;
        }
        let edge_ok = sigma >= cfg.edge_sigma_min && !behind_discontinuity(&pts, n, cfg);
        let planar_ok = sigma <= cfg.planar_sigma_max;
        if !(edge_ok || planar_ok) {
            continue;
        }
        let s = ring.points[n].azimuth_fraction;
        let sector = ((s * sectors as f64) as usize).min(sectors - 1);
        by_sector[sector].push(Candidate {
            idx: n,
            sigma,
            edge_ok,
            planar_ok,
        });
    }
    for cands in &mut by_sector {
        // sharpest first; ties go to the lower column
        cands.sort_by(|a, b| b.sigma.total_cmp(&a.sigma).then(a.idx.cmp(&b.idx)));
    }

    let query = select(ring, &by_sector, cfg, cfg.max_edges_per_sector, cfg.max_planars_per_sector);
    let map = select(ring, &by_sector, cfg, cfg.map_edges_per_sector, cfg.map_planars_per_sector);
    (query, map)
}

fn select(
    ring: &Ring,
    by_sector: &[Vec<Candidate>],
    cfg: &FeatureConfig,
    edge_cap: usize,
    planar_cap: usize,
) -> Split {
    let len = ring.points.len();
    let w = cfg.neighbor_half_width;
    let mut blocked = vec![false; len];
    let mut edges = Vec::new();
    let mut planars = Vec::new();
    let to_feature = |c: &Candidate| {
        let p: &IndexedPoint = &ring.points[c.idx];
        FeaturePoint {
            position: p.position,
            smoothness: c.sigma,
            azimuth_fraction: p.azimuth_fraction,
            ring: p.ring,
            column: p.column,
        }
    };
    let block = |blocked: &mut Vec<bool>, idx: usize| {
        if cfg.suppress_neighbors {
            for b in &mut blocked[idx.saturating_sub(w)..=(idx + w).min(len - 1)] {
                *b = true;
            }
        }
    };
    for cands in by_sector {
        let mut taken = 0;
        for c in cands.iter().filter(|c| c.edge_ok) {
            if taken == edge_cap {
                break;
            }
            if blocked[c.idx] {
                continue;
            }
            edges.push(to_feature(c));
            taken += 1;
            block(&mut blocked, c.idx);
        }
        let mut taken = 0;
        for c in cands.iter().rev().filter(|c| c.planar_ok) {
            if taken == planar_cap {
                break;
            }
            if blocked[c.idx] {
                continue;
            }
            planars.push(to_feature(c));
            taken += 1;
            block(&mut blocked, c.idx);
        }
    }
    edges.sort_by_key(|f| f.column);
    planars.sort_by_key(|f| f.column);
    (edges, planars)
}

/// Sparse features for matching and the denser set used to grow the map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSets {
    pub query: FeatureCloud,
    pub map: FeatureCloud,
}

pub fn extract_feature_sets(scan: &Scan, cfg: &FeatureConfig) -> FeatureSets {
    let per_ring: Vec<_> = scan
        .rings
        .par_iter()
        .map(|ring| ring_features(ring, cfg))
        .collect();
    let mut sets = FeatureSets::default();
    for ((qe, qp), (me, mp)) in per_ring {
        sets.query.edges.extend(qe);
        sets.query.planars.extend(qp);
        sets.map.edges.extend(me);
        sets.map.planars.extend(mp);
    }
    sets
}

/// The matching set alone.
pub fn extract_features(scan: &Scan, cfg: &FeatureConfig) -> FeatureCloud {
    extract_feature_sets(scan, cfg).query
}
