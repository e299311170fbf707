//! Flat `key = value` run configuration.
//!
//! Keys use dotted prefixes (`features.`, `map.`, `gn.`, `keyframe.`, `sensor.`,
//! `sim.`, `eval.`) plus the top-level `mode`. Lines are trimmed, `#` starts a
//! comment, unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use lidar_odometry::eval::KITTI_LENGTHS;
use lidar_odometry::features::SmoothnessForm;
use lidar_odometry::geometry::Twist;
use lidar_odometry::pipeline::OdometryConfig;
use lidar_odometry::pointcloud::{presets, MotionSchedule, NoiseModel, Rotation, Scene, SensorConfig};
use lidar_odometry::registration::WeightOrientation;
use nalgebra::Vector3;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSettings {
    pub rings: usize,
    /// Degrees.
    pub min_elevation: f64,
    /// Degrees.
    pub max_elevation: f64,
    pub columns: usize,
    /// Meters.
    pub min_range: f64,
    /// Meters.
    pub max_range: f64,
    pub rotation: Rotation,
}

impl Default for SensorSettings {
    fn default() -> Self {
        Self {
            rings: 16,
            min_elevation: -15.0,
            max_elevation: 15.0,
            columns: 1800,
            min_range: 0.5,
            max_range: 100.0,
            rotation: Rotation::CounterClockwise,
        }
    }
}

impl SensorSettings {
    pub fn build(&self) -> SensorConfig {
        let mut cfg = SensorConfig::uniform(self.rings, self.min_elevation, self.max_elevation, self.columns);
        cfg.min_range = self.min_range;
        cfg.max_range = self.max_range;
        cfg.rotation = self.rotation;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    /// Preset name or path to a scene file.
    pub scene: String,
    pub scans: usize,
    /// Seconds per sweep.
    pub period: f64,
    /// Body-frame m/s.
    pub velocity: Vector3<f64>,
    /// Body-frame deg/s.
    pub angular_velocity: Vector3<f64>,
    /// Scans over which the rates grow linearly from zero.
    pub ramp_scans: usize,
    /// Explicit per-scan twists; overrides the rates when non-empty.
    pub schedule: Vec<(usize, Twist)>,
    /// Meters; 0 disables range noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            scene: "warehouse".into(),
            scans: 100,
            period: 0.1,
            velocity: Vector3::new(2.0, 0.0, 0.0),
            angular_velocity: Vector3::zeros(),
            ramp_scans: 0,
            schedule: Vec::new(),
            noise_sigma: 0.0,
            seed: 1,
        }
    }
}

impl SimSettings {
    pub fn motion(&self) -> MotionSchedule {
        if !self.schedule.is_empty() {
            return MotionSchedule {
                segments: self.schedule.clone(),
            };
        }
        let xi = Twist::new(
            self.velocity * self.period,
            self.angular_velocity.map(f64::to_radians) * self.period,
        );
        let ramp = self.ramp_scans.min(self.scans);
        let mut segments: Vec<(usize, Twist)> =
            (0..ramp).map(|i| (1, xi.scaled(i as f64 / ramp as f64))).collect();
        segments.push((self.scans - ramp, xi));
        MotionSchedule { segments }
    }

    pub fn noise(&self) -> Option<NoiseModel> {
        (self.noise_sigma > 0.0).then_some(NoiseModel {
            sigma: self.noise_sigma,
            seed: self.seed,
        })
    }

    pub fn load_scene(&self) -> Result<Scene, String> {
        if let Some(scene) = presets::preset(&self.scene) {
            return Ok(scene);
        }
        let path = Path::new(&self.scene);
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read scene '{}': {e}", path.display()))?;
        Scene::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub odometry: OdometryConfig,
    pub sensor: SensorSettings,
    pub sim: SimSettings,
    /// Meters.
    pub lengths: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            odometry: OdometryConfig::default(),
            sensor: SensorSettings::default(),
            sim: SimSettings::default(),
            lengths: KITTI_LENGTHS.to_vec(),
        }
    }
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> Result<(), String>;

struct Key {
    name: &'static str,
    unit: &'static str,
    help: &'static str,
    get: Getter,
    set: Setter,
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("'{v}' is not a valid number"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn csv(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| num(s.trim())).collect()
}

fn vec3(v: &str) -> Result<Vector3<f64>, String> {
    let xs = csv(v)?;
    match xs[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err(format!("'{v}' needs three comma-separated values")),
    }
}

fn show_vec3(v: &Vector3<f64>) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

fn show_csv(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// `count:rx,ry,rz,px,py,pz` segments separated by `;`.
fn schedule(v: &str) -> Result<Vec<(usize, Twist)>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|seg| {
            let (count, twist) = seg
                .split_once(':')
                .ok_or_else(|| format!("segment '{seg}' must look like count:rx,ry,rz,px,py,pz"))?;
            let t = csv(twist)?;
            if t.len() != 6 {
                return Err(format!("segment '{seg}' needs six twist components"));
            }
            Ok((
                num(count.trim())?,
                Twist::new(Vector3::new(t[0], t[1], t[2]), Vector3::new(t[3], t[4], t[5])),
            ))
        })
        .collect()
}

fn show_schedule(s: &[(usize, Twist)]) -> String {
    s.iter()
        .map(|(n, t)| {
            let v = t.to_vector();
            format!("{n}:{}", v.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn smoothness(v: &str) -> Result<SmoothnessForm, String> {
    match v {
        "norm-of-sum" => Ok(SmoothnessForm::NormOfSum),
        "mean-of-norms" => Ok(SmoothnessForm::MeanOfNorms),
        _ => Err(format!("'{v}' is not norm-of-sum or mean-of-norms")),
    }
}

fn show_smoothness(f: SmoothnessForm) -> String {
    match f {
        SmoothnessForm::NormOfSum => "norm-of-sum",
        SmoothnessForm::MeanOfNorms => "mean-of-norms",
    }
    .into()
}

fn rotation(v: &str) -> Result<Rotation, String> {
    match v {
        "ccw" => Ok(Rotation::CounterClockwise),
        "cw" => Ok(Rotation::Clockwise),
        _ => Err(format!("'{v}' is not ccw or cw")),
    }
}

macro_rules! key {
    ($name:literal, $unit:literal, $help:literal, |$c:ident| $get:expr, |$m:ident, $v:ident| $set:expr) => {
        Key {
            name: $name,
            unit: $unit,
            help: $help,
            get: |$c| $get,
            set: |$m, $v| {
                $set;
                Ok(())
            },
        }
    };
}

const KEYS: &[Key] = &[
    key!("mode", "", "distortion compensation: none or two-stage",
        |c| c.odometry.mode.as_str().into(), |m, v| m.odometry.mode = v.parse()?),
    key!("features.neighbor_half_width", "points", "smoothness neighbours on each side",
        |c| c.odometry.features.neighbor_half_width.to_string(), |m, v| m.odometry.features.neighbor_half_width = num(v)?),
    key!("features.edge_sigma_min", "m", "smallest smoothness accepted as an edge",
        |c| c.odometry.features.edge_sigma_min.to_string(), |m, v| m.odometry.features.edge_sigma_min = num(v)?),
    key!("features.planar_sigma_max", "m", "largest smoothness accepted as planar",
        |c| c.odometry.features.planar_sigma_max.to_string(), |m, v| m.odometry.features.planar_sigma_max = num(v)?),
    key!("features.sectors_per_ring", "", "azimuth sectors per ring",
        |c| c.odometry.features.sectors_per_ring.to_string(), |m, v| m.odometry.features.sectors_per_ring = num(v)?),
    key!("features.max_edges_per_sector", "", "edges matched per sector",
        |c| c.odometry.features.max_edges_per_sector.to_string(), |m, v| m.odometry.features.max_edges_per_sector = num(v)?),
    key!("features.max_planars_per_sector", "", "planars matched per sector",
        |c| c.odometry.features.max_planars_per_sector.to_string(), |m, v| m.odometry.features.max_planars_per_sector = num(v)?),
    key!("features.map_edges_per_sector", "", "edges inserted into the map per sector",
        |c| c.odometry.features.map_edges_per_sector.to_string(), |m, v| m.odometry.features.map_edges_per_sector = num(v)?),
    key!("features.map_planars_per_sector", "", "planars inserted into the map per sector",
        |c| c.odometry.features.map_planars_per_sector.to_string(), |m, v| m.odometry.features.map_planars_per_sector = num(v)?),
    key!("features.smoothness_form", "", "norm-of-sum or mean-of-norms",
        |c| show_smoothness(c.odometry.features.smoothness_form), |m, v| m.odometry.features.smoothness_form = smoothness(v)?),
    key!("features.discontinuity_ratio", "", "gap over median spacing that marks a range jump",
        |c| c.odometry.features.discontinuity_ratio.to_string(), |m, v| m.odometry.features.discontinuity_ratio = num(v)?),
    key!("features.min_incidence", "rad", "smallest beam-to-surface angle kept",
        |c| c.odometry.features.min_incidence.to_string(), |m, v| m.odometry.features.min_incidence = num(v)?),
    key!("features.suppress_neighbors", "bool", "block neighbours of selected features",
        |c| c.odometry.features.suppress_neighbors.to_string(), |m, v| m.odometry.features.suppress_neighbors = flag(v)?),
    key!("map.edge_leaf", "m", "voxel size of the edge map",
        |c| c.odometry.map.edge_leaf.to_string(), |m, v| m.odometry.map.edge_leaf = num(v)?),
    key!("map.plane_leaf", "m", "voxel size of the plane map",
        |c| c.odometry.map.plane_leaf.to_string(), |m, v| m.odometry.map.plane_leaf = num(v)?),
    key!("map.neighbors", "points", "map points per landmark fit",
        |c| c.odometry.map.neighbors.to_string(), |m, v| m.odometry.map.neighbors = num(v)?),
    key!("map.line_ratio", "", "eigenvalue ratio required for a line",
        |c| c.odometry.map.line_ratio.to_string(), |m, v| m.odometry.map.line_ratio = num(v)?),
    key!("map.plane_ratio", "", "eigenvalue ratio required for a plane",
        |c| c.odometry.map.plane_ratio.to_string(), |m, v| m.odometry.map.plane_ratio = num(v)?),
    key!("map.max_edge_distance", "m", "nearest edge map point must be this close",
        |c| c.odometry.map.max_edge_distance.to_string(), |m, v| m.odometry.map.max_edge_distance = num(v)?),
    key!("map.max_plane_distance", "m", "nearest plane map point must be this close",
        |c| c.odometry.map.max_plane_distance.to_string(), |m, v| m.odometry.map.max_plane_distance = num(v)?),
    key!("map.max_line_residual", "m", "largest fitted point distance from its line",
        |c| c.odometry.map.max_line_residual.to_string(), |m, v| m.odometry.map.max_line_residual = num(v)?),
    key!("map.max_plane_residual", "m", "largest fitted point distance from its plane",
        |c| c.odometry.map.max_plane_residual.to_string(), |m, v| m.odometry.map.max_plane_residual = num(v)?),
    key!("map.max_neighbor_spread", "m", "farthest allowed fitted neighbour",
        |c| c.odometry.map.max_neighbor_spread.to_string(), |m, v| m.odometry.map.max_neighbor_spread = num(v)?),
    key!("map.max_match_residual", "m", "largest query distance from its landmark",
        |c| c.odometry.map.max_match_residual.to_string(), |m, v| m.odometry.map.max_match_residual = num(v)?),
    key!("keyframe.translation_threshold", "m", "motion that triggers a map update",
        |c| c.odometry.keyframe.translation_threshold.to_string(), |m, v| m.odometry.keyframe.translation_threshold = num(v)?),
    key!("keyframe.rotation_threshold", "rad", "rotation that triggers a map update",
        |c| c.odometry.keyframe.rotation_threshold.to_string(), |m, v| m.odometry.keyframe.rotation_threshold = num(v)?),
    key!("keyframe.every_frame", "bool", "insert every scan into the map",
        |c| c.odometry.keyframe.every_frame.to_string(), |m, v| m.odometry.keyframe.every_frame = flag(v)?),
    key!("gn.max_iterations", "", "outer Gauss-Newton iterations",
        |c| c.odometry.gn.max_iterations.to_string(), |m, v| m.odometry.gn.max_iterations = num(v)?),
    key!("gn.epsilon", "", "stop when the update norm falls below this",
        |c| c.odometry.gn.epsilon.to_string(), |m, v| m.odometry.gn.epsilon = num(v)?),
    key!("gn.huber_delta", "m", "Huber threshold, or off",
        |c| c.odometry.gn.huber_delta.map_or("off".into(), |d| d.to_string()),
        |m, v| m.odometry.gn.huber_delta = if v == "off" { None } else { Some(num(v)?) }),
    key!("gn.weight_orientation", "", "as-printed or as-text",
        |c| c.odometry.gn.weight_orientation.as_str().into(), |m, v| m.odometry.gn.weight_orientation = v.parse::<WeightOrientation>()?),
    key!("gn.min_correspondences", "", "fewer matches than this is degenerate",
        |c| c.odometry.gn.min_correspondences.to_string(), |m, v| m.odometry.gn.min_correspondences = num(v)?),
    key!("gn.max_condition", "", "largest pivot ratio of the normal matrix",
        |c| c.odometry.gn.max_condition.to_string(), |m, v| m.odometry.gn.max_condition = num(v)?),
    key!("sensor.rings", "", "laser count",
        |c| c.sensor.rings.to_string(), |m, v| m.sensor.rings = num(v)?),
    key!("sensor.min_elevation", "deg", "lowest ring elevation",
        |c| c.sensor.min_elevation.to_string(), |m, v| m.sensor.min_elevation = num(v)?),
    key!("sensor.max_elevation", "deg", "highest ring elevation",
        |c| c.sensor.max_elevation.to_string(), |m, v| m.sensor.max_elevation = num(v)?),
    key!("sensor.columns", "", "azimuth samples per revolution",
        |c| c.sensor.columns.to_string(), |m, v| m.sensor.columns = num(v)?),
    key!("sensor.min_range", "m", "closer returns are dropped",
        |c| c.sensor.min_range.to_string(), |m, v| m.sensor.min_range = num(v)?),
    key!("sensor.max_range", "m", "farther returns are dropped",
        |c| c.sensor.max_range.to_string(), |m, v| m.sensor.max_range = num(v)?),
    key!("sensor.rotation", "", "spin direction seen from above: ccw or cw",
        |c| if c.sensor.rotation == Rotation::CounterClockwise { "ccw".into() } else { "cw".into() },
        |m, v| m.sensor.rotation = rotation(v)?),
    key!("sim.scene", "", "preset (warehouse, hall) or scene file",
        |c| c.sim.scene.clone(), |m, v| m.sim.scene = v.to_string()),
    key!("sim.scans", "", "number of scans to simulate",
        |c| c.sim.scans.to_string(), |m, v| m.sim.scans = num(v)?),
    key!("sim.period", "s", "sweep duration",
        |c| c.sim.period.to_string(), |m, v| m.sim.period = num(v)?),
    key!("sim.velocity", "m/s", "body-frame linear velocity x,y,z",
        |c| show_vec3(&c.sim.velocity), |m, v| m.sim.velocity = vec3(v)?),
    key!("sim.angular_velocity", "deg/s", "body-frame angular velocity x,y,z",
        |c| show_vec3(&c.sim.angular_velocity), |m, v| m.sim.angular_velocity = vec3(v)?),
    key!("sim.ramp_scans", "", "scans over which motion grows from rest",
        |c| c.sim.ramp_scans.to_string(), |m, v| m.sim.ramp_scans = num(v)?),
    key!("sim.schedule", "m, rad", "count:rx,ry,rz,px,py,pz per scan; segments joined by ';'",
        |c| show_schedule(&c.sim.schedule), |m, v| m.sim.schedule = schedule(v)?),
    key!("sim.noise_sigma", "m", "Gaussian range noise, 0 for none",
        |c| c.sim.noise_sigma.to_string(), |m, v| m.sim.noise_sigma = num(v)?),
    key!("sim.seed", "", "noise seed",
        |c| c.sim.seed.to_string(), |m, v| m.sim.seed = num(v)?),
    key!("eval.lengths", "m", "segment lengths, comma separated",
        |c| show_csv(&c.lengths), |m, v| m.lengths = csv(v)?),
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| format!("line {}: {msg}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected 'key = value', found '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let key = KEYS
                .iter()
                .find(|key| key.name == k)
                .ok_or_else(|| at(format!("unknown key '{k}'")))?;
            if seen.contains(&key.name) {
                return Err(at(format!("key '{k}' given twice")));
            }
            seen.push(key.name);
            (key.set)(&mut cfg, v).map_err(|e| at(format!("{k}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.odometry.validate()?;
        self.sensor.build().validate().map_err(|e| e.to_string())?;
        if !(self.sim.period > 0.0) || !(self.sim.noise_sigma >= 0.0) {
            return Err("sim.period must be positive and sim.noise_sigma non-negative".into());
        }
        if self.lengths.is_empty() || self.lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err("eval.lengths must be positive".into());
        }
        Ok(())
    }

    /// Every key with its current value, in `key = value` form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{} = {}", key.name, (key.get)(self));
        }
        out
    }
}

/// Help text listing every key with its default and unit.
pub fn key_help() -> String {
    let defaults = RunConfig::default();
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys (key = value, # comments):\n");
    for key in KEYS {
        let unit = if key.unit.is_empty() { String::new() } else { format!(" [{}]", key.unit) };
        let value = (key.get)(&defaults);
        let value = if value.is_empty() { "(empty)".to_string() } else { value };
        let _ = writeln!(out, "  {:width$}  default {value}{unit}  {}", key.name, key.help);
    }
    out
}
