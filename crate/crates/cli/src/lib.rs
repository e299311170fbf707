//! Library side of the `lidar-odom` binary: run configuration and subcommands.

pub mod commands;
pub mod config;
