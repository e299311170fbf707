//! Weighted point-to-line / point-to-plane Gauss-Newton scan-to-map alignment.

use nalgebra::{Cholesky, Matrix6, RowVector6, SymmetricEigen, Vector3, Vector6, U6};
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureCloud, FeaturePoint};
use crate::geometry::{exp_se3, point_jacobian, skew, Pose, Twist};
use crate::localmap::{FeatureMap, LineLandmark, PlaneLandmark};

/// Below this a point-to-line residual has no defined gradient direction.
const ZERO_RESIDUAL: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 4;

/// Which way the smoothness weighting leans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightOrientation {
    /// Edges `exp(-sigma)`, planars `exp(sigma)`.
    #[default]
    AsPrinted,
    /// Edges `exp(sigma)`, planars `exp(-sigma)`.
    AsText,
}

impl WeightOrientation {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightOrientation::AsPrinted => "as-printed",
            WeightOrientation::AsText => "as-text",
        }
    }
}

impl std::str::FromStr for WeightOrientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-printed" => Ok(WeightOrientation::AsPrinted),
            "as-text" => Ok(WeightOrientation::AsText),
            other => Err(format!("unknown weight orientation '{other}' (expected as-printed or as-text)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnConfig {
    pub max_iterations: usize,
    /// Stop once the update's 6-vector norm drops below this.
    pub epsilon: f64,
    /// Meters; `None` disables the robust loss.
    pub huber_delta: Option<f64>,
    pub weight_orientation: WeightOrientation,
    pub min_correspondences: usize,
    /// Largest allowed ratio of extreme Cholesky pivots of the normal matrix.
    pub max_condition: f64,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            epsilon: 1e-5,
            huber_delta: None,
            weight_orientation: WeightOrientation::AsPrinted,
            min_correspondences: 10,
            max_condition: 1e6,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 || !(self.epsilon > 0.0) || !(self.max_condition > 1.0) {
            return Err("iterations, epsilon and condition gate must be positive".into());
        }
        if matches!(self.huber_delta, Some(d) if !(d > 0.0)) {
            return Err("huber delta must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Landmark {
    Line(LineLandmark),
    Plane(PlaneLandmark),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub feature: FeaturePoint,
    pub landmark: Landmark,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignDiagnostics {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub edge_matches: usize,
    pub plane_matches: usize,
    pub converged: bool,
    pub backtracks: usize,
    pub weight_orientation: WeightOrientation,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("too few correspondences: {edges} edge + {planes} plane < {required}")]
    InsufficientCorrespondences {
        edges: usize,
        planes: usize,
        required: usize,
    },
    #[error("degenerate geometry: condition {condition:.3e}, weak direction {direction:?}")]
    Degenerate {
        condition: f64,
        /// Unit 6-vector `[rho; phi]` of the least constrained motion.
        direction: [f64; 6],
        edges: usize,
        planes: usize,
    },
}

/// Point-to-line distance of `T p` from the landmark's infinite line.
pub fn edge_residual(t: &Pose, p: &Vector3<f64>, line: &LineLandmark) -> f64 {
    (t.transform_point(p) - line.center).cross(&line.direction).norm()
}

/// Signed distance of `T p` from the landmark plane.
pub fn plane_residual(t: &Pose, p: &Vector3<f64>, plane: &PlaneLandmark) -> f64 {
    (t.transform_point(p) - plane.center).dot(&plane.normal)
}

/// Derivative of `w * edge_residual` under a left perturbation of `t`.
pub fn edge_jacobian(t: &Pose, p: &Vector3<f64>, line: &LineLandmark, w: f64) -> RowVector6<f64> {
    let u = (t.transform_point(p) - line.center).cross(&line.direction);
    let f = u.norm();
    if f < ZERO_RESIDUAL {
        return RowVector6::zeros();
    }
    let p_n = u / f;
    // d/dq [(q - c) x d] = -[d]x
    (p_n.transpose() * (-skew(&line.direction)) * point_jacobian(t, p)) * w
}

/// Derivative of `w * plane_residual` under a left perturbation of `t`.
pub fn plane_jacobian(t: &Pose, p: &Vector3<f64>, plane: &PlaneLandmark, w: f64) -> RowVector6<f64> {
    (plane.normal.transpose() * point_jacobian(t, p)) * w
}

fn softmax(sigmas: &[f64], sign: f64) -> Vec<f64> {
    let shift = sigmas.iter().map(|s| sign * s).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = sigmas.iter().map(|s| (sign * s - shift).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Per-class normalised smoothness weights for edge and planar features.
pub fn compute_weights(
    edge_sigmas: &[f64],
    planar_sigmas: &[f64],
    orientation: WeightOrientation,
) -> (Vec<f64>, Vec<f64>) {
    let s = match orientation {
        WeightOrientation::AsPrinted => 1.0,
        WeightOrientation::AsText => -1.0,
    };
    (softmax(edge_sigmas, -s), softmax(planar_sigmas, s))
}

/// Matches every feature (moved by `t`) against the map and weights the matches.
pub fn build_correspondences(
    features: &FeatureCloud,
    map: &FeatureMap,
    t: &Pose,
    orientation: WeightOrientation,
) -> Vec<Correspondence> {
    let edges: Vec<(FeaturePoint, Landmark)> = features
        .edges
        .par_iter()
        .filter_map(|f| {
            map.edge_landmark(&t.transform_point(&f.position))
                .map(|l| (*f, Landmark::Line(l)))
        })
        .collect();
    let planes: Vec<(FeaturePoint, Landmark)> = features
        .planars
        .par_iter()
        .filter_map(|f| {
            map.plane_landmark(&t.transform_point(&f.position))
                .map(|l| (*f, Landmark::Plane(l)))
        })
        .collect();
    let sig = |v: &[(FeaturePoint, Landmark)]| v.iter().map(|(f, _)| f.smoothness).collect::<Vec<_>>();
    let (we, wp) = compute_weights(&sig(&edges), &sig(&planes), orientation);
    edges
        .into_iter()
        .zip(we)
        .chain(planes.into_iter().zip(wp))
        .map(|((feature, landmark), weight)| Correspondence {
            feature,
            landmark,
            weight,
        })
        .collect()
}

impl Correspondence {
    pub fn residual(&self, t: &Pose) -> f64 {
        match &self.landmark {
            Landmark::Line(l) => edge_residual(t, &self.feature.position, l),
            Landmark::Plane(l) => plane_residual(t, &self.feature.position, l),
        }
    }

    pub fn jacobian(&self, t: &Pose) -> RowVector6<f64> {
        match &self.landmark {
            Landmark::Line(l) => edge_jacobian(t, &self.feature.position, l, self.weight),
            Landmark::Plane(l) => plane_jacobian(t, &self.feature.position, l, self.weight),
        }
    }
}

/// `rho(f) / f^2` scaling of the squared residual under the Huber loss.
fn huber_scale(f: f64, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) if f.abs() > d => (2.0 * d * f.abs() - d * d) / (f * f),
        _ => 1.0,
    }
}

/// IRLS weight `rho'(f) / (2 f)`.
fn huber_irls(f: f64, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) if f.abs() > d => d / f.abs(),
        _ => 1.0,
    }
}

/// Weighted cost `sum (W f)^2` (Huber-robustified when enabled).
pub fn total_cost(corr: &[Correspondence], t: &Pose, huber_delta: Option<f64>) -> f64 {
    corr.iter()
        .map(|c| {
            let f = c.residual(t);
            let r = c.weight * f;
            r * r * huber_scale(f, huber_delta)
        })
        .sum()
}

fn normal_equations(corr: &[Correspondence], t: &Pose, huber_delta: Option<f64>) -> (Matrix6<f64>, Vector6<f64>) {
    let rows: Vec<(RowVector6<f64>, f64)> = corr
        .par_iter()
        .map(|c| {
            let f = c.residual(t);
            let s = huber_irls(f, huber_delta).sqrt();
            (c.jacobian(t) * s, c.weight * f * s)
        })
        .collect();
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for (j, r) in &rows {
        h += j.transpose() * j;
        g += j.transpose() * *r;
    }
    (h, g)
}

/// Factorizes `h`, rejecting it when the extreme Cholesky pivots differ by more than `max_condition`.
fn factorize(h: &Matrix6<f64>, cfg: &GnConfig, edges: usize, planes: usize) -> Result<Cholesky<f64, U6>, AlignError> {
    let chol = h.cholesky();
    let condition = match &chol {
        Some(c) => {
            let pivots = c.l_dirty().diagonal().map(|l| l * l);
            let (lo, hi) = (pivots.min(), pivots.max());
            if lo > 0.0 { hi / lo } else { f64::INFINITY }
        }
        None => f64::INFINITY,
    };
    if let Some(c) = chol.filter(|_| condition <= cfg.max_condition) {
        return Ok(c);
    }
    let eig = SymmetricEigen::new(*h);
    let v = eig.eigenvectors.column(eig.eigenvalues.imin());
    let v = if v[v.iamax()] < 0.0 { -v } else { v.into_owned() };
    Err(AlignError::Degenerate {
        condition,
        direction: std::array::from_fn(|i| v[i]),
        edges,
        planes,
    })
}

/// Refines `t_init` so the features (sensor frame) best fit the map.
pub fn align(
    features: &FeatureCloud,
    map: &FeatureMap,
    t_init: &Pose,
    cfg: &GnConfig,
) -> Result<(Pose, AlignDiagnostics), AlignError> {
    let mut t = *t_init;
    let mut diag = AlignDiagnostics {
        weight_orientation: cfg.weight_orientation,
        ..Default::default()
    };
    for iter in 0..cfg.max_iterations {
        let corr = build_correspondences(features, map, &t, cfg.weight_orientation);
        let edges = corr.iter().filter(|c| matches!(c.landmark, Landmark::Line(_))).count();
        let planes = corr.len() - edges;
        diag.edge_matches = edges;
        diag.plane_matches = planes;
        if corr.len() < cfg.min_correspondences {
            return Err(AlignError::InsufficientCorrespondences {
                edges,
                planes,
                required: cfg.min_correspondences,
            });
        }
        let (h, g) = normal_equations(&corr, &t, cfg.huber_delta);
        let chol = factorize(&h, cfg, edges, planes)?;
        let delta = -chol.solve(&g);

        let cost = total_cost(&corr, &t, cfg.huber_delta);
        if iter == 0 {
            diag.initial_cost = cost;
        }
        diag.final_cost = cost;
        diag.iterations = iter + 1;

        let mut step = delta;
        let mut accepted = None;
        for attempt in 0..=MAX_BACKTRACKS {
            let candidate = exp_se3(&Twist::from_vector(&step)) * t;
            let c = total_cost(&corr, &candidate, cfg.huber_delta);
            if c <= cost {
                accepted = Some((candidate, c));
                break;
            }
            if attempt < MAX_BACKTRACKS {
                diag.backtracks += 1;
                step *= 0.5;
            }
        }
        let Some((next, c)) = accepted else {
            diag.converged = true;
            break;
        };
        t = next.renormalized();
        diag.final_cost = c;
        if step.norm() < cfg.epsilon {
            diag.converged = true;
            break;
        }
    }
    Ok((t, diag))
}
