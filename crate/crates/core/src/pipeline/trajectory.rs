use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::Pose;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("scan index {index} does not follow {previous}")]
pub struct OutOfOrder {
    pub previous: usize,
    pub index: usize,
}

/// Estimated or ground-truth poses keyed by strictly increasing scan index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<(usize, Pose)>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Poses for scans `0..n`.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose>) -> Self {
        Self {
            entries: poses.into_iter().enumerate().collect(),
        }
    }

    pub fn push(&mut self, index: usize, pose: Pose) -> Result<(), OutOfOrder> {
        if let Some(&(previous, _)) = self.entries.last() {
            if index <= previous {
                return Err(OutOfOrder { previous, index });
            }
        }
        self.entries.push((index, pose));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, Pose)] {
        &self.entries
    }

    pub fn poses(&self) -> impl ExactSizeIterator<Item = &Pose> {
        self.entries.iter().map(|(_, p)| p)
    }

    pub fn indices(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }

    pub fn last(&self) -> Option<&Pose> {
        self.entries.last().map(|(_, p)| p)
    }

    /// Translation distance between consecutive poses, summed.
    pub fn path_length(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[1].1.translation - w[0].1.translation).norm())
            .sum()
    }
}

fn format_field(v: f64) -> String {
    // avoid "-0" in the output
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// KITTI pose text: the row-major upper 3x4 of each pose, one line per scan.
pub fn write_trajectory(traj: &Trajectory) -> String {
    let mut out = String::new();
    for pose in traj.poses() {
        let fields: Vec<String> = pose.to_rows().iter().map(|v| format_field(*v)).collect();
        let _ = writeln!(out, "{}", fields.join(" "));
    }
    out
}
