//! Per-scan odometry: features, deskew, scan-to-map alignment, keyframe map update.

mod trajectory;

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

pub use trajectory::{write_trajectory, OutOfOrder, Trajectory};

use crate::compensation::{recompute_undistort, undistort, CompensationMode, MotionState};
use crate::features::{extract_feature_sets, FeatureCloud, FeatureConfig};
use crate::geometry::{exp_se3, log_se3, Pose, Twist};
use crate::localmap::{FeatureMap, KeyframePolicy, MapConfig, MapSide};
use crate::pointcloud::Scan;
use crate::registration::{align, AlignError, GnConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdometryConfig {
    pub features: FeatureConfig,
    pub map: MapConfig,
    pub gn: GnConfig,
    pub keyframe: KeyframePolicy,
    pub mode: CompensationMode,
}

impl OdometryConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.features.validate()?;
        self.map.validate()?;
        self.gn.validate()?;
        self.keyframe.validate()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no scans to process")]
    Empty,
    #[error("scan {index}: {message}")]
    Source { index: usize, message: String },
    #[error(transparent)]
    OutOfOrder(#[from] OutOfOrder),
}

/// Wall time per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimes {
    pub extract: f64,
    pub compensate: f64,
    pub align: f64,
    pub map: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.extract + self.compensate + self.align + self.map
    }
}

/// Why alignment was skipped or rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum Fallback {
    /// Too few matches or an ill-conditioned system.
    Degenerate(AlignError),
    /// The motion prediction could not be formed (rotation near pi between scans).
    NoPrediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub index: usize,
    pub pose: Pose,
    pub edges: usize,
    pub planars: usize,
    pub edge_matches: usize,
    pub plane_matches: usize,
    pub iterations: usize,
    pub cost: f64,
    pub converged: bool,
    pub fallback: Option<Fallback>,
    pub keyframe: bool,
    pub map_edges: usize,
    pub map_planes: usize,
    pub times: StageTimes,
}

impl ScanReport {
    /// Deterministic `key=value` run-log line.
    pub fn log_line(&self, config: &OdometryConfig) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "scan={} edges={} planars={} edge_matches={} plane_matches={} iterations={} cost={:e} converged={} degenerate={} keyframe={} map_edges={} map_planes={} mode={} weights={} pose=",
            self.index,
            self.edges,
            self.planars,
            self.edge_matches,
            self.plane_matches,
            self.iterations,
            self.cost,
            self.converged,
            match &self.fallback {
                None => "none",
                Some(Fallback::Degenerate(AlignError::InsufficientCorrespondences { .. })) => "few-matches",
                Some(Fallback::Degenerate(AlignError::Degenerate { .. })) => "ill-conditioned",
                Some(Fallback::NoPrediction) => "no-prediction",
            },
            self.keyframe,
            self.map_edges,
            self.map_planes,
            config.mode.as_str(),
            config.gn.weight_orientation.as_str(),
        );
        let rows = self.pose.to_rows();
        for (i, v) in rows.iter().enumerate() {
            let v = if *v == 0.0 { 0.0 } else { *v };
            let _ = write!(s, "{}{v}", if i == 0 { "" } else { "," });
        }
        s
    }

    /// Per-stage timing line; wall-clock dependent.
    pub fn timing_line(&self) -> String {
        let t = &self.times;
        format!(
            "scan={} extract_ms={:.3} compensate_ms={:.3} align_ms={:.3} map_ms={:.3} total_ms={:.3}",
            self.index,
            t.extract,
            t.compensate,
            t.align,
            t.map,
            t.total()
        )
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Running odometry state.
#[derive(Debug, Clone)]
pub struct Odometry {
    config: OdometryConfig,
    motion: MotionState,
    map: FeatureMap,
    last_keyframe: Pose,
    trajectory: Trajectory,
    /// Raw map features of the first scan, kept until its motion is known.
    seed: Option<FeatureCloud>,
}

impl Odometry {
    pub fn new(config: OdometryConfig) -> Result<Self, PipelineError> {
        config.validate().map_err(PipelineError::Config)?;
        Ok(Self {
            map: FeatureMap::new(config.map.clone()),
            config,
            motion: MotionState::default(),
            last_keyframe: Pose::identity(),
            trajectory: Trajectory::new(),
            seed: None,
        })
    }

    pub fn config(&self) -> &OdometryConfig {
        &self.config
    }

    pub fn map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    /// Estimates the end-of-sweep pose of `scan` and updates the map.
    pub fn process_scan(&mut self, scan: &Scan) -> Result<ScanReport, PipelineError> {
        let two_stage = self.config.mode == CompensationMode::TwoStage;
        let mut times = StageTimes::default();

        let clock = Instant::now();
        let sets = extract_feature_sets(scan, &self.config.features);
        let raw = &sets.query;
        times.extract = ms_since(clock);

        let predicted = self.motion.predicted_twist;
        let clock = Instant::now();
        let deskewed = if two_stage { deskew(raw, &predicted) } else { raw.clone() };
        times.compensate = ms_since(clock);

        let mut report = ScanReport {
            index: scan.index,
            pose: Pose::identity(),
            edges: raw.edges.len(),
            planars: raw.planars.len(),
            edge_matches: 0,
            plane_matches: 0,
            iterations: 0,
            cost: 0.0,
            converged: false,
            fallback: None,
            keyframe: false,
            map_edges: 0,
            map_planes: 0,
            times,
        };

        let Some(t_prev) = self.trajectory.last().copied() else {
            // the first scan fixes the gauge and seeds the map
            let clock = Instant::now();
            self.map.insert(&sets.map, &Pose::identity());
            if two_stage {
                self.seed = Some(sets.map.clone());
            }
            report.keyframe = true;
            report.times.map = ms_since(clock);
            return self.finish(report);
        };

        let t_init = t_prev * exp_se3(&predicted);
        let clock = Instant::now();
        let mut t_star = self.register(&deskewed, &t_init, &mut report);
        if let Some(seed) = self.seed.take() {
            // the first sweep's motion is only known now: rebuild the map from it and re-register
            if report.fallback.is_none() {
                if let Some(xi) = log_se3(&(t_prev.inverse() * t_star)).ok().filter(noticeable) {
                    self.map = FeatureMap::new(self.config.map.clone());
                    self.map.insert(&deskew(&seed, &xi), &t_prev);
                    t_star = self.register(&deskew(raw, &xi), &t_star, &mut report);
                }
            }
        }
        report.times.align = ms_since(clock);

        let clock = Instant::now();
        report.keyframe = self.config.keyframe.is_keyframe(&t_star, &self.last_keyframe);
        if report.keyframe {
            let map_cloud = &sets.map;
            let corrected = if two_stage {
                match recompute_undistort(&map_cloud.edges, &t_prev, &t_star)
                    .and_then(|e| Ok((e, recompute_undistort(&map_cloud.planars, &t_prev, &t_star)?)))
                {
                    Ok((edges, planars)) => FeatureCloud { edges, planars },
                    Err(_) => deskew(map_cloud, &predicted),
                }
            } else {
                map_cloud.clone()
            };
            report.times.compensate += ms_since(clock);
            let clock = Instant::now();
            self.map.insert(&corrected, &t_star);
            self.last_keyframe = t_star;
            report.times.map = ms_since(clock);
        }
        report.pose = t_star;
        self.finish(report)
    }

    fn register(&self, cloud: &FeatureCloud, t_init: &Pose, report: &mut ScanReport) -> Pose {
        match align(cloud, &self.map, t_init, &self.config.gn) {
            Ok((pose, diag)) => {
                report.edge_matches = diag.edge_matches;
                report.plane_matches = diag.plane_matches;
                report.iterations = diag.iterations;
                report.cost = diag.final_cost;
                report.converged = diag.converged;
                report.fallback = None;
                pose
            }
            Err(err) => {
                let (AlignError::InsufficientCorrespondences { edges, planes, .. }
                | AlignError::Degenerate { edges, planes, .. }) = &err;
                report.edge_matches = *edges;
                report.plane_matches = *planes;
                report.fallback = Some(Fallback::Degenerate(err));
                *t_init
            }
        }
    }

    fn finish(&mut self, mut report: ScanReport) -> Result<ScanReport, PipelineError> {
        let pose = report.pose.renormalized();
        report.pose = pose;
        report.map_edges = self.map.len(MapSide::Edge);
        report.map_planes = self.map.len(MapSide::Plane);
        if self.motion.push(pose).is_err() {
            self.motion.predicted_twist = Twist::zero();
            report.fallback.get_or_insert(Fallback::NoPrediction);
        }
        self.trajectory.push(report.index, pose)?;
        Ok(report)
    }
}

/// Sweep motion below a centimetre and a milliradian is not worth rebuilding the map for.
fn noticeable(xi: &Twist) -> bool {
    xi.rho.norm() >= 0.01 || xi.phi.norm() >= 1e-3
}

fn deskew(cloud: &FeatureCloud, xi: &Twist) -> FeatureCloud {
    FeatureCloud {
        edges: undistort(&cloud.edges, xi),
        planars: undistort(&cloud.planars, xi),
    }
}

/// Runs the odometry over every scan in order.
pub fn run_sequence<E: std::fmt::Display>(
    scans: impl IntoIterator<Item = Result<Scan, E>>,
    config: &OdometryConfig,
) -> Result<(Trajectory, Vec<ScanReport>), PipelineError> {
    let mut odom = Odometry::new(config.clone())?;
    let mut reports = Vec::new();
    for (position, scan) in scans.into_iter().enumerate() {
        let scan = scan.map_err(|e| PipelineError::Source {
            index: position,
            message: e.to_string(),
        })?;
        reports.push(odom.process_scan(&scan)?);
    }
    if reports.is_empty() {
        return Err(PipelineError::Empty);
    }
    Ok((odom.into_trajectory(), reports))
}
