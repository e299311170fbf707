//! LiDAR odometry: smoothness-based features, two-stage motion compensation and
//! weighted scan-to-map registration.

pub mod compensation;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod localmap;
pub mod pipeline;
pub mod pointcloud;
pub mod registration;
