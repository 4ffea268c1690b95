//! Omnidirectional constant-acceleration, constant-yaw-rate motion model.
//!
//! The target moves along its heading with resultant speed `v` and
//! acceleration `a`. Heading advances with the yaw rate `v_theta`. Process
//! noise is not applied here; the filter adds a constant `Q` instead.

use nalgebra::Matrix6;

use crate::types::TrackState;

/// Noise-free propagation of `state` over `dt` seconds.
///
/// Heading is left unwrapped.
pub fn predict_state(state: &TrackState, dt: f64) -> TrackState {
    let (sin, cos) = state.theta.sin_cos();
    let travel = state.v * dt + 0.5 * state.a * dt * dt;
    TrackState {
        x: state.x + travel * cos,
        y: state.y + travel * sin,
        theta: state.theta + state.v_theta * dt,
        v: state.v + state.a * dt,
        v_theta: state.v_theta,
        a: state.a,
    }
}

/// Analytic Jacobian of [`predict_state`] with respect to the state,
/// evaluated at `state`.
pub fn jacobian(state: &TrackState, dt: f64) -> Matrix6<f64> {
    let (sin, cos) = state.theta.sin_cos();
    let travel = state.v * dt + 0.5 * state.a * dt * dt;
    let half_dt2 = 0.5 * dt * dt;
    let mut a = Matrix6::identity();
    a[(0, 2)] = -travel * sin;
    a[(0, 3)] = cos * dt;
    a[(0, 5)] = half_dt2 * cos;
    a[(1, 2)] = travel * cos;
    a[(1, 3)] = sin * dt;
    a[(1, 5)] = half_dt2 * sin;
    a[(2, 4)] = dt;
    a[(3, 5)] = dt;
    a
}
