//! Detection and isolation of tampered roadside-unit (RSU) object data in a
//! vehicle's multi-sensor target tracker.
//!
//! The tracker is an extended Kalman filter over the target state
//! `[x, y, theta, v, v_theta, a]` fed by radar, lidar, camera and RSU
//! measurements. Innovation residuals are evaluated with a windowed mean of
//! squares; dimensions above threshold are masked out of the gain until they
//! recover. A deterministic scenario simulator and fault injector drive the
//! detection campaign.

pub mod campaign;
pub mod cli;
pub mod detector;
pub mod error;
pub mod injector;
pub mod io;
pub mod measurement;
pub mod motion;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
