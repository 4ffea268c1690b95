//! Multi-sensor extended Kalman filter with per-state fault masking.
//!
//! Each tick runs one prediction, then one sequential update per available
//! sensor in [`SensorId::ALL`] order. Every update produces an innovation
//! residual. Residuals feed a moving mean of elementwise squares over the
//! last `n` samples; any dimension whose mean exceeds its threshold is masked
//! out of the gain on the next tick. Masked dimensions keep producing
//! residuals so that recovery can be observed.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::measurement::{measurement_jacobian, observe};
use crate::motion;
use crate::types::{
    DetectorConfig, FaultMask, MeasDim, Measurement, PerSensor, SensorId, StateEstimate,
};

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

/// Time update: mean through the motion model, `P = A P A^T + Q`.
pub fn predict(estimate: &StateEstimate, config: &DetectorConfig, dt: f64) -> StateEstimate {
    let a = motion::jacobian(&estimate.mean, dt);
    let mean = motion::predict_state(&estimate.mean, dt);
    let p = a * estimate.covariance * a.transpose() + config.q;
    StateEstimate {
        mean,
        covariance: symmetrize(&p),
        timestamp: estimate.timestamp + dt,
    }
}

/// Result of one measurement update.
#[derive(Debug, Clone)]
pub struct Update {
    pub estimate: StateEstimate,
    /// Innovation `u - h(x_prior)` over the full measurement, masked
    /// dimensions included.
    pub residual: DVector<f64>,
    /// Kalman gain, `6 x d`. Columns of masked dimensions are zero.
    pub gain: DMatrix<f64>,
}

/// Innovation of `meas` against the prior mean. The RSU heading component is
/// wrapped to `(-pi, pi]`.
pub fn innovation(estimate: &StateEstimate, meas: &Measurement) -> DVector<f64> {
    let mut r = &meas.values - observe(&estimate.mean, meas.sensor);
    if let Some(i) = meas.sensor.index_of(MeasDim::Theta) {
        r[i] = wrap_angle(r[i]);
    }
    r
}

/// Measurement update of one sensor with fault mask `mask`.
///
/// The mask enters as a 0/1 diagonal on both sides of `H P H^T` and on the
/// right of the gain. Non-finite values are rejected with
/// [`Error::NonFiniteMeasurement`] and leave the estimate untouched.
pub fn update(
    estimate: &StateEstimate,
    meas: &Measurement,
    mask: &FaultMask,
    config: &DetectorConfig,
) -> Result<Update> {
    let sensor = meas.sensor;
    if !meas.available {
        return Err(Error::Unavailable(sensor));
    }
    if meas.values.len() != sensor.dim() {
        return Err(Error::LayoutMismatch {
            sensor,
            expected: sensor.dim(),
            got: meas.values.len(),
        });
    }
    if mask.sensor != sensor || mask.healthy.len() != sensor.dim() {
        return Err(Error::LayoutMismatch {
            sensor,
            expected: sensor.dim(),
            got: mask.healthy.len(),
        });
    }
    if !meas.is_finite() {
        return Err(Error::NonFiniteMeasurement {
            sensor,
            timestamp: meas.timestamp,
        });
    }

    let d = sensor.dim();
    let eps = mask.epsilon();
    let p = DMatrix::from_column_slice(6, 6, estimate.covariance.as_slice());
    let h = measurement_jacobian(&estimate.mean, sensor);

    let mut eps_hp = &h * &p;
    for (i, e) in eps.iter().enumerate() {
        eps_hp.row_mut(i).scale_mut(*e);
    }
    // eps H P H^T eps + R
    let mut s = &eps_hp * h.transpose();
    for j in 0..d {
        s.column_mut(j).scale_mut(eps[j]);
    }
    for (i, r) in config.r[sensor].iter().enumerate() {
        s[(i, i)] += r;
    }
    // S is symmetric, so K^T = S^-1 eps H P.
    let chol = s.cholesky().ok_or(Error::SingularInnovation(sensor))?;
    let gain = chol.solve(&eps_hp).transpose();

    let residual = innovation(estimate, meas);
    let gated = residual.component_mul(&eps);
    let correction = &gain * &gated;

    let mean = estimate.mean.to_vector() + Vector6::from_column_slice(correction.as_slice());
    let kh = &gain * &h;
    let ikh = Matrix6::identity() - Matrix6::from_column_slice(kh.as_slice());
    let covariance = symmetrize(&(ikh * estimate.covariance));

    Ok(Update {
        estimate: StateEstimate {
            mean: crate::types::TrackState::from_vector(&mean),
            covariance,
            timestamp: estimate.timestamp,
        },
        residual,
        gain,
    })
}

/// Last `n` residual vectors per sensor, oldest first.
#[derive(Debug, Clone)]
pub struct ResidualBuffer {
    horizon: usize,
    rings: PerSensor<VecDeque<DVector<f64>>>,
}

impl ResidualBuffer {
    pub fn new(horizon: usize) -> Self {
        ResidualBuffer {
            horizon,
            rings: PerSensor::from_fn(|_| VecDeque::with_capacity(horizon)),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn push(&mut self, sensor: SensorId, residual: DVector<f64>) {
        let ring = &mut self.rings[sensor];
        if ring.len() == self.horizon {
            ring.pop_front();
        }
        ring.push_back(residual);
    }

    pub fn len(&self, sensor: SensorId) -> usize {
        self.rings[sensor].len()
    }

    pub fn is_empty(&self, sensor: SensorId) -> bool {
        self.rings[sensor].is_empty()
    }

    pub fn residuals(&self, sensor: SensorId) -> impl Iterator<Item = &DVector<f64>> {
        self.rings[sensor].iter()
    }

    pub fn clear(&mut self) {
        for s in SensorId::ALL {
            self.rings[s].clear();
        }
    }

    /// Mean of elementwise squares over the buffered window, summed oldest
    /// to newest. While the window is filling the divisor is the number of
    /// buffered samples.
    pub fn mean_square(&self, sensor: SensorId) -> Option<DVector<f64>> {
        let ring = &self.rings[sensor];
        if ring.is_empty() {
            return None;
        }
        let mut acc = DVector::zeros(sensor.dim());
        for r in ring {
            acc += r.component_mul(r);
        }
        Some(acc / ring.len() as f64)
    }
}

/// Residual energy and resulting health flags of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub r_hat: DVector<f64>,
    pub mask: FaultMask,
}

/// Compares the windowed mean square of `sensor`'s residuals against its
/// thresholds. A dimension is healthy iff `r_hat <= alpha`.
pub fn evaluate_residuals(
    buffer: &ResidualBuffer,
    config: &DetectorConfig,
    sensor: SensorId,
) -> Option<Evaluation> {
    let r_hat = buffer.mean_square(sensor)?;
    let healthy = r_hat
        .iter()
        .zip(&config.alpha[sensor])
        .map(|(r, a)| r <= a)
        .collect();
    Some(Evaluation {
        r_hat,
        mask: FaultMask { sensor, healthy },
    })
}

/// A period during which one measured dimension was flagged faulty.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub sensor: SensorId,
    pub dimension: MeasDim,
    pub onset: f64,
    /// `None` while the fault persists.
    pub clear: Option<f64>,
}

/// Per-sensor record of one tick.
#[derive(Debug, Clone)]
pub struct SensorStep {
    pub sensor: SensorId,
    pub residual: DVector<f64>,
    /// `None` during warm-up.
    pub r_hat: Option<DVector<f64>>,
    /// Mask applied in this tick's update.
    pub mask_applied: FaultMask,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: f64,
    pub sensors: Vec<SensorStep>,
    /// Measurements refused as data errors.
    pub rejected: Vec<(SensorId, Error)>,
    pub estimate: StateEstimate,
}

/// Stateful detector: one instance per tracked target, fed ticks in time
/// order.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    estimate: StateEstimate,
    buffer: ResidualBuffer,
    masks: PerSensor<FaultMask>,
    open: PerSensor<Vec<Option<usize>>>,
    events: Vec<DetectionEvent>,
    last_t: Option<f64>,
    ticks_tracked: usize,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Self {
        let estimate = StateEstimate::new(config.x0, config.p0, 0.0);
        Detector {
            buffer: ResidualBuffer::new(config.horizon),
            masks: PerSensor::from_fn(FaultMask::healthy),
            open: PerSensor::from_fn(|s| vec![None; s.dim()]),
            events: Vec::new(),
            last_t: None,
            ticks_tracked: 0,
            estimate,
            config,
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn estimate(&self) -> &StateEstimate {
        &self.estimate
    }

    /// Masks that will be applied at the next tick.
    pub fn masks(&self) -> &PerSensor<FaultMask> {
        &self.masks
    }

    pub fn events(&self) -> &[DetectionEvent] {
        &self.events
    }

    pub fn buffer(&self) -> &ResidualBuffer {
        &self.buffer
    }

    /// `true` once `n` ticks with measurements have been processed.
    pub fn warmed_up(&self) -> bool {
        self.ticks_tracked >= self.config.horizon
    }

    pub fn into_events(self) -> Vec<DetectionEvent> {
        self.events
    }

    /// Processes one tick at time `t` in the default sensor order.
    pub fn step(&mut self, t: f64, measurements: &[Measurement]) -> StepReport {
        self.step_ordered(t, measurements, &SensorId::ALL)
    }

    /// Processes one tick updating sensors in `order`. Sensors missing from
    /// `order` are ignored.
    pub fn step_ordered(
        &mut self,
        t: f64,
        measurements: &[Measurement],
        order: &[SensorId],
    ) -> StepReport {
        let dt = match self.last_t {
            Some(prev) => t - prev,
            None => self.config.dt,
        };
        self.last_t = Some(t);
        self.estimate = if dt > 0.0 {
            predict(&self.estimate, &self.config, dt)
        } else {
            self.estimate.clone()
        };
        self.estimate.timestamp = t;

        let mut sensors = Vec::new();
        let mut rejected = Vec::new();
        for &sensor in order {
            for meas in measurements
                .iter()
                .filter(|m| m.sensor == sensor && m.available)
            {
                let mask = self.masks[sensor].clone();
                match update(&self.estimate, meas, &mask, &self.config) {
                    Ok(u) => {
                        self.estimate = u.estimate;
                        sensors.push(SensorStep {
                            sensor,
                            residual: u.residual,
                            r_hat: None,
                            mask_applied: mask,
                        });
                    }
                    Err(e) => rejected.push((sensor, e)),
                }
            }
        }

        if !sensors.is_empty() {
            self.ticks_tracked += 1;
        }
        // Warm-up: the first n tracked ticks carry the initialization
        // transient and are not evaluated.
        if self.ticks_tracked > self.config.horizon {
            for step in &mut sensors {
                self.buffer.push(step.sensor, step.residual.clone());
            }
            for step in &mut sensors {
                let Some(eval) = evaluate_residuals(&self.buffer, &self.config, step.sensor) else {
                    continue;
                };
                self.apply_mask(t, eval.mask);
                step.r_hat = Some(eval.r_hat);
            }
        }

        StepReport {
            t,
            sensors,
            rejected,
            estimate: self.estimate.clone(),
        }
    }

    fn apply_mask(&mut self, t: f64, mask: FaultMask) {
        let sensor = mask.sensor;
        for (i, &healthy) in mask.healthy.iter().enumerate() {
            match (self.open[sensor][i], healthy) {
                (None, false) => {
                    self.open[sensor][i] = Some(self.events.len());
                    self.events.push(DetectionEvent {
                        sensor,
                        dimension: sensor.layout()[i],
                        onset: t,
                        clear: None,
                    });
                }
                (Some(idx), true) => {
                    self.events[idx].clear = Some(t);
                    self.open[sensor][i] = None;
                }
                _ => {}
            }
        }
        self.masks[sensor] = mask;
    }
}
