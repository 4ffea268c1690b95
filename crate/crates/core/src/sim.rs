//! Deterministic intersection scenario: target ground truth, noisy sensor
//! sampling and visibility gating.
//!
//! The target follows a chain of constant-speed segments (straight lines,
//! circular arcs and waits) from an initial pose. All measurements share one
//! global frame.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::observe;
use crate::types::{Measurement, NoiseSpec, PerSensor, SensorId, TrackState};

/// Typical walking speed, m/s.
pub const WALKING_SPEED: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Segment {
    /// Straight walk of `length` metres along the current heading.
    Line { length: f64, speed: f64 },
    /// Circular arc of `radius` metres turning by `angle` radians
    /// (positive = counter-clockwise).
    Arc { radius: f64, angle: f64, speed: f64 },
    /// Standing still for `duration` seconds.
    Wait { duration: f64 },
}

impl Segment {
    fn duration(&self) -> f64 {
        match *self {
            Segment::Line { length, speed } => length / speed,
            Segment::Arc {
                radius,
                angle,
                speed,
            } => radius * angle.abs() / speed,
            Segment::Wait { duration } => duration,
        }
    }

    /// Pose and kinematics `tau` seconds into the segment.
    fn state_at(&self, start: &Pose, tau: f64) -> TrackState {
        match *self {
            Segment::Line { speed, .. } => {
                let (s, c) = start.heading.sin_cos();
                let d = speed * tau;
                TrackState::new(
                    start.x + d * c,
                    start.y + d * s,
                    start.heading,
                    speed,
                    0.0,
                    0.0,
                )
            }
            Segment::Arc {
                radius,
                angle,
                speed,
            } => {
                let turn = angle.signum();
                let rate = turn * speed / radius;
                let heading = start.heading + rate * tau;
                // centre of the turning circle sits a radius to the inside
                let normal = start.heading + turn * FRAC_PI_2;
                let cx = start.x + radius * normal.cos();
                let cy = start.y + radius * normal.sin();
                let back = heading - turn * FRAC_PI_2;
                TrackState::new(
                    cx + radius * back.cos(),
                    cy + radius * back.sin(),
                    heading,
                    speed,
                    rate,
                    0.0,
                )
            }
            Segment::Wait { .. } => TrackState::new(start.x, start.y, start.heading, 0.0, 0.0, 0.0),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    format!("{path}.{name}"),
                    format!("must be > 0, got {v}"),
                ))
            }
        };
        match *self {
            Segment::Line { length, speed } => {
                positive("length", length)?;
                positive("speed", speed)
            }
            Segment::Arc {
                radius,
                angle,
                speed,
            } => {
                positive("radius", radius)?;
                positive("speed", speed)?;
                if angle.is_finite() && angle != 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        format!("{path}.angle"),
                        "must be finite and non-zero",
                    ))
                }
            }
            Segment::Wait { duration } => positive("duration", duration),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Initial pose followed by segments. After the last segment the target
/// stands still.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub start: Pose,
    #[serde(default, rename = "segment")]
    pub segments: Vec<Segment>,
}

impl Trajectory {
    /// Constant-speed straight walk.
    pub fn crossing(x: f64, y: f64, heading: f64, speed: f64, duration: f64) -> Self {
        Trajectory {
            start: Pose { x, y, heading },
            segments: vec![Segment::Line {
                length: speed * duration,
                speed,
            }],
        }
    }

    /// Target waiting at the kerb.
    pub fn stationary(x: f64, y: f64, heading: f64) -> Self {
        Trajectory {
            start: Pose { x, y, heading },
            segments: vec![],
        }
    }

    pub fn state_at(&self, t: f64) -> TrackState {
        let mut pose = self.start;
        let mut elapsed = 0.0;
        for seg in &self.segments {
            let d = seg.duration();
            if t < elapsed + d {
                return seg.state_at(&pose, t - elapsed);
            }
            let end = seg.state_at(&pose, d);
            pose = Pose {
                x: end.x,
                y: end.y,
                heading: end.theta,
            };
            elapsed += d;
        }
        TrackState::new(pose.x, pose.y, pose.heading, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.start;
        if ![p.x, p.y, p.heading].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("trajectory.start", "must be finite"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate(&format!("trajectory.segment[{i}]"))?;
        }
        Ok(())
    }
}

/// Time interval `[t_on, t_off]` during which a sensor sees the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window(pub f64, pub f64);

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.0 && t <= self.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub trajectory: Trajectory,
    /// `None` disables the sensor for the whole run.
    pub visibility: PerSensor<Option<Window>>,
    pub seed: u64,
}

impl Scenario {
    /// Pedestrian crossing at walking speed along +y past x = 10 m for 60 s.
    /// The RSU sees the target throughout, the on-board sensors from 5 s on.
    pub fn default_crossing() -> Self {
        let duration = 60.0;
        Scenario {
            duration,
            trajectory: Trajectory::crossing(10.0, -42.0, FRAC_PI_2, WALKING_SPEED, duration),
            visibility: PerSensor {
                radar: Some(Window(5.0, duration)),
                lidar: Some(Window(5.0, duration)),
                camera: Some(Window(5.0, duration)),
                rsu: Some(Window(0.0, duration)),
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(
                "scenario.duration",
                format!("must be > 0, got {}", self.duration),
            ));
        }
        self.trajectory.validate()?;
        for (s, w) in self.visibility.iter() {
            if let Some(Window(on, off)) = w {
                if !(0.0 <= *on && on <= off && *off <= self.duration) {
                    return Err(Error::invalid(
                        format!("visibility.{s}"),
                        format!(
                            "window [{on}, {off}] must lie within [0, {}]",
                            self.duration
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn visible(&self, sensor: SensorId, t: f64) -> bool {
        self.visibility[sensor].is_some_and(|w| w.contains(t))
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::default_crossing()
    }
}

/// Exact target state at time `t`.
pub fn ground_truth(scenario: &Scenario, t: f64) -> Result<TrackState> {
    if !(0.0..=scenario.duration).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: scenario.duration,
        });
    }
    Ok(scenario.trajectory.state_at(t))
}

/// Independent Gaussian noise streams, one per sensor, derived from one seed.
/// Disabling a sensor leaves the other streams unchanged.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    streams: PerSensor<ChaCha8Rng>,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource {
            streams: PerSensor::from_fn(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                rng
            }),
        }
    }

    pub fn standard_normal(&mut self, sensor: SensorId) -> f64 {
        StandardNormal.sample(&mut self.streams[sensor])
    }
}

/// Samples every sensor at time `t`. Visible sensors return the noise-free
/// observation plus zero-mean Gaussian noise with the configured sigmas;
/// invisible sensors return an unavailable measurement.
pub fn sample_sensors(
    scenario: &Scenario,
    t: f64,
    noise: &NoiseSpec,
    rng: &mut NoiseSource,
) -> Result<Vec<Measurement>> {
    let truth = ground_truth(scenario, t)?;
    let mut out = Vec::with_capacity(4);
    for sensor in SensorId::ALL {
        if !scenario.visible(sensor, t) {
            out.push(Measurement::unavailable(sensor, t));
            continue;
        }
        let clean = observe(&truth, sensor);
        let sigma = &noise.sigma[sensor];
        let values = DVector::from_iterator(
            clean.len(),
            clean
                .iter()
                .zip(sigma)
                .map(|(v, s)| v + s * rng.standard_normal(sensor)),
        );
        out.push(Measurement {
            sensor,
            timestamp: t,
            values,
            available: true,
        });
    }
    Ok(out)
}
