//! Subcommand implementations. Each returns the text meant for stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lidar_odometry::compensation::CompensationMode;
use lidar_odometry::eval::{evaluate, read_kitti_poses, translation_rmse, ErrorReport};
use lidar_odometry::geometry::Pose;
use lidar_odometry::pipeline::{write_trajectory, Odometry, ScanReport, Trajectory};
use lidar_odometry::pointcloud::{read_kitti_bin, simulate_sequence, write_kitti_bin, Scan};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("no scans found in {0}")]
    NoScans(PathBuf),
    #[error("{0}")]
    Failed(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    read_kitti_poses(&text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Velodyne files of a directory, sorted by name.
pub fn scan_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    if files.is_empty() {
        return Err(CliError::NoScans(dir.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

/// Scans read in file order; each index is its position.
pub fn load_scans<'a>(
    files: &'a [PathBuf],
    cfg: &'a RunConfig,
) -> impl Iterator<Item = Result<Scan, CliError>> + 'a {
    let sensor = cfg.sensor.build();
    files.iter().enumerate().map(move |(k, path)| {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let (mut scan, _) = read_kitti_bin(&bytes, &sensor).map_err(|e| CliError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        scan.index = k;
        Ok(scan)
    })
}

/// Odometry over an in-memory or on-disk scan stream.
pub struct RunResult {
    pub trajectory: Trajectory,
    pub reports: Vec<ScanReport>,
}

impl RunResult {
    pub fn mean_ms(&self) -> f64 {
        self.reports.iter().map(|r| r.times.total()).sum::<f64>() / self.reports.len().max(1) as f64
    }

    pub fn run_log(&self, cfg: &RunConfig) -> String {
        self.reports.iter().map(|r| r.log_line(&cfg.odometry) + "\n").collect()
    }

    pub fn timing_log(&self) -> String {
        self.reports.iter().map(|r| r.timing_line() + "\n").collect()
    }

    pub fn summary(&self) -> String {
        let n = self.reports.len().max(1) as f64;
        let mean = |f: fn(&ScanReport) -> f64| self.reports.iter().map(f).sum::<f64>() / n;
        let fallbacks = self.reports.iter().filter(|r| r.fallback.is_some()).count();
        format!(
            "scans={}\nmean_ms_per_scan={:.3}\nmean_extract_ms={:.3}\nmean_compensate_ms={:.3}\nmean_align_ms={:.3}\nmean_map_ms={:.3}\nfallbacks={fallbacks}\n",
            self.reports.len(),
            self.mean_ms(),
            mean(|r| r.times.extract),
            mean(|r| r.times.compensate),
            mean(|r| r.times.align),
            mean(|r| r.times.map),
        )
    }
}

pub fn odometry<E: Into<CliError>>(
    scans: impl IntoIterator<Item = Result<Scan, E>>,
    cfg: &RunConfig,
) -> Result<RunResult, CliError> {
    let mut odom = Odometry::new(cfg.odometry.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut reports = Vec::new();
    for scan in scans {
        let report = odom
            .process_scan(&scan.map_err(Into::into)?)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        reports.push(report);
    }
    Ok(RunResult {
        trajectory: odom.into_trajectory(),
        reports,
    })
}

/// Simulated scans and their end-of-sweep ground truth, kept in memory.
pub fn simulate_in_memory(cfg: &RunConfig) -> Result<(Vec<Scan>, Trajectory), CliError> {
    let scene = cfg.sim.load_scene().map_err(CliError::Config)?;
    let schedule = cfg.sim.motion();
    let sensor = cfg.sensor.build();
    let mut scans = Vec::with_capacity(schedule.len());
    let mut truth = Vec::with_capacity(schedule.len());
    for sim in simulate_sequence(&scene, &Pose::identity(), &schedule, &sensor, cfg.sim.noise()) {
        let sim = sim.map_err(|e| CliError::Config(e.to_string()))?;
        truth.push(sim.end_pose);
        scans.push(sim.scan);
    }
    Ok((scans, Trajectory::from_poses(truth)))
}

impl From<std::convert::Infallible> for CliError {
    fn from(e: std::convert::Infallible) -> Self {
        match e {}
    }
}

pub struct RunArgs<'a> {
    pub scans: &'a Path,
    pub output: &'a Path,
    pub gt: Option<&'a Path>,
}

/// Writes `trajectory.txt`, `run.log`, `timing.log` and `summary.txt`, plus `report.txt` when ground truth is given.
pub fn cmd_run(cfg: &RunConfig, args: &RunArgs) -> Result<String, CliError> {
    let files = scan_files(args.scans)?;
    let gt = args.gt.map(read_trajectory).transpose()?;
    let result = odometry(load_scans(&files, cfg), cfg)?;
    fs::create_dir_all(args.output).map_err(io_err(args.output))?;
    write(&args.output.join("trajectory.txt"), write_trajectory(&result.trajectory))?;
    write(&args.output.join("run.log"), result.run_log(cfg))?;
    write(&args.output.join("timing.log"), result.timing_log())?;
    let mut out = result.summary();
    write(&args.output.join("summary.txt"), &out)?;
    if let Some(gt) = gt {
        let report = evaluate(&result.trajectory, &gt, &cfg.lengths).map_err(|e| CliError::Failed(e.to_string()))?;
        let text = format!("{report}\n{}", report.key_values());
        write(&args.output.join("report.txt"), &text)?;
        out.push_str(&text);
    }
    Ok(out)
}

/// Writes `scans/NNNNNN.bin`, `gt.txt` and `scene.txt` under `output`.
pub fn cmd_simulate(cfg: &RunConfig, output: &Path) -> Result<String, CliError> {
    let scene = cfg.sim.load_scene().map_err(CliError::Config)?;
    let schedule = cfg.sim.motion();
    let sensor = cfg.sensor.build();
    let scan_dir = output.join("scans");
    fs::create_dir_all(&scan_dir).map_err(io_err(&scan_dir))?;
    let mut truth = Vec::with_capacity(schedule.len());
    let mut points = 0;
    for (k, sim) in simulate_sequence(&scene, &Pose::identity(), &schedule, &sensor, cfg.sim.noise()).enumerate() {
        let sim = sim.map_err(|e| CliError::Config(e.to_string()))?;
        points += sim.scan.len();
        write(&scan_dir.join(format!("{k:06}.bin")), write_kitti_bin(&sim.scan.to_raw_points()))?;
        truth.push(sim.end_pose);
    }
    let truth = Trajectory::from_poses(truth);
    write(&output.join("gt.txt"), write_trajectory(&truth))?;
    write(&output.join("scene.txt"), scene.to_text())?;
    Ok(format!(
        "scans={}\npoints={points}\npath_length_m={:.3}\n",
        truth.len(),
        truth.path_length()
    ))
}

pub fn cmd_eval(est: &Path, gt: &Path, lengths: &[f64]) -> Result<String, CliError> {
    let est = read_trajectory(est)?;
    let gt = read_trajectory(gt)?;
    let report = evaluate(&est, &gt, lengths).map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(format!("{report}\n{}", report.key_values()))
}

/// One row of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub mode: CompensationMode,
    pub ms_per_frame: f64,
    pub rmse: f64,
    pub report: ErrorReport,
}

pub const ABLATION_HEADER: &str = "mode       ms_per_frame   rmse_m   ate_percent  are_deg_per_m";

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>12.2} {:>8.4} {:>13.3} {:>14.4}",
            r.mode.as_str(),
            r.ms_per_frame,
            r.rmse,
            r.report.ate,
            r.report.are
        );
    }
    out
}

/// Runs both compensation modes over the same scans.
pub fn ablate(scans: &[Scan], gt: &Trajectory, cfg: &RunConfig) -> Result<Vec<AblationRow>, CliError> {
    [CompensationMode::None, CompensationMode::TwoStage]
        .into_iter()
        .map(|mode| {
            let mut c = cfg.clone();
            c.odometry.mode = mode;
            let result = odometry(scans.iter().cloned().map(Ok::<_, CliError>), &c)?;
            let fail = |e: lidar_odometry::eval::EvalError| CliError::Failed(e.to_string());
            Ok(AblationRow {
                mode,
                ms_per_frame: result.mean_ms(),
                rmse: translation_rmse(&result.trajectory, gt).map_err(fail)?,
                report: evaluate(&result.trajectory, gt, &cfg.lengths).map_err(fail)?,
            })
        })
        .collect()
}

pub fn cmd_ablate(cfg: &RunConfig, scans: &Path, gt: &Path, output: Option<&Path>) -> Result<String, CliError> {
    let files = scan_files(scans)?;
    let gt = read_trajectory(gt)?;
    let scans: Vec<Scan> = load_scans(&files, cfg).collect::<Result<_, _>>()?;
    let table = ablation_table(&ablate(&scans, &gt, cfg)?);
    if let Some(dir) = output {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write(&dir.join("ablation.txt"), &table)?;
    }
    Ok(table)
}
