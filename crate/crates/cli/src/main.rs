use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use lidar_odometry::compensation::CompensationMode;
use lidar_odometry_cli::commands::{cmd_ablate, cmd_eval, cmd_run, cmd_simulate, CliError, RunArgs};
use lidar_odometry_cli::config::{key_help, RunConfig};

/// Lidar odometry with two-stage motion compensation.
#[derive(Parser)]
#[command(name = "lidar-odom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a trajectory from a directory of velodyne .bin scans.
    Run {
        /// Directory holding the .bin scans.
        #[arg(long)]
        scans: PathBuf,
        /// Directory for trajectory.txt, run.log, timing.log and summary.txt.
        #[arg(long, short)]
        output: PathBuf,
        /// Ground-truth poses; writes report.txt when given.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a synthetic scan sequence with ground truth.
    Simulate {
        /// Directory for scans/, gt.txt and scene.txt.
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score an estimated trajectory against ground truth.
    Eval {
        /// Estimated poses, one 3x4 row-major matrix per line.
        estimate: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated segment lengths in meters.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare the two compensation modes on the same scans.
    Ablate {
        #[arg(long)]
        scans: PathBuf,
        /// Ground-truth poses; defaults to gt.txt beside the scan directory.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Directory for ablation.txt.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(clap::Args)]
struct Common {
    /// key=value configuration file; keys are listed below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Compensation mode, overriding the configuration file.
    #[arg(long)]
    mode: Option<CompensationMode>,
    /// Comma-separated evaluation segment lengths in meters.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p).map_err(CliError::Config),
        None => Ok(RunConfig::default()),
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(mode) = self.mode {
            cfg.odometry.mode = mode;
        }
        if let Some(lengths) = &self.lengths {
            cfg.lengths = lengths.clone();
        }
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Run {
            scans,
            output,
            gt,
            common,
        } => cmd_run(
            &common.resolve()?,
            &RunArgs {
                scans: &scans,
                output: &output,
                gt: gt.as_deref(),
            },
        ),
        Command::Simulate { output, common } => cmd_simulate(&common.resolve()?, &output),
        Command::Eval {
            estimate,
            gt,
            lengths,
            config,
        } => {
            let lengths = match lengths {
                Some(l) => l,
                None => load_config(config.as_deref())?.lengths,
            };
            cmd_eval(&estimate, &gt, &lengths)
        }
        Command::Ablate {
            scans,
            gt,
            output,
            common,
        } => {
            let gt = gt.unwrap_or_else(|| {
                scans
                    .canonicalize()
                    .unwrap_or_else(|_| scans.clone())
                    .parent()
                    .map_or_else(|| PathBuf::from("gt.txt"), |p| p.join("gt.txt"))
            });
            cmd_ablate(&common.resolve()?, &scans, &gt, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let keys = key_help();
    let mut command = Cli::command().after_help(keys.clone());
    for name in ["run", "simulate", "ablate"] {
        command = command.mut_subcommand(name, |c| c.after_help(keys.clone()));
    }
    let matches = command.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match dispatch(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
