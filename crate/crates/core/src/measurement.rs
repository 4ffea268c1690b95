//! Sensor observation functions and their Jacobians.
//!
//! Each sensor reads a subset of `[x, y, theta, v cos(theta), v sin(theta), v_theta]`
//! given by [`SensorId::layout`].

use nalgebra::{DMatrix, DVector};

use crate::types::{MeasDim, Measurement, SensorId, TrackState};

fn observe_dim(state: &TrackState, dim: MeasDim) -> f64 {
    match dim {
        MeasDim::X => state.x,
        MeasDim::Y => state.y,
        MeasDim::Theta => state.theta,
        MeasDim::Vx => state.v * state.theta.cos(),
        MeasDim::Vy => state.v * state.theta.sin(),
        MeasDim::VTheta => state.v_theta,
    }
}

/// Noise-free expected measurement of `sensor` for `state`.
pub fn observe(state: &TrackState, sensor: SensorId) -> DVector<f64> {
    let layout = sensor.layout();
    DVector::from_iterator(layout.len(), layout.iter().map(|&d| observe_dim(state, d)))
}

/// Noise-free measurement wrapped with sensor identity and timestamp.
pub fn measure(state: &TrackState, sensor: SensorId, timestamp: f64) -> Measurement {
    Measurement {
        sensor,
        timestamp,
        values: observe(state, sensor),
        available: true,
    }
}

/// Analytic `d x 6` Jacobian of [`observe`].
pub fn measurement_jacobian(state: &TrackState, sensor: SensorId) -> DMatrix<f64> {
    let layout = sensor.layout();
    let (sin, cos) = state.theta.sin_cos();
    let mut h = DMatrix::zeros(layout.len(), 6);
    for (row, dim) in layout.iter().enumerate() {
        match dim {
            MeasDim::X => h[(row, 0)] = 1.0,
            MeasDim::Y => h[(row, 1)] = 1.0,
            MeasDim::Theta => h[(row, 2)] = 1.0,
            MeasDim::Vx => {
                h[(row, 2)] = -state.v * sin;
                h[(row, 3)] = cos;
            }
            MeasDim::Vy => {
                h[(row, 2)] = state.v * cos;
                h[(row, 3)] = sin;
            }
            MeasDim::VTheta => h[(row, 4)] = 1.0,
        }
    }
    h
}
