//! Domain types shared by the filter, the injector, the simulator and the
//! campaign harness.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample period used by every sensor (20 Hz).
pub const DEFAULT_DT: f64 = 0.05;
/// Residual evaluation horizon in samples.
pub const DEFAULT_HORIZON: usize = 30;
/// Threshold on the mean squared residual for position and heading states.
pub const ALPHA_POSITION: f64 = 0.18;
/// Threshold on the mean squared residual for velocity states.
pub const ALPHA_VELOCITY: f64 = 0.7;
/// Diagonal scale of the process noise covariance.
pub const DEFAULT_PROCESS_Q: f64 = 0.001;

/// Sensor sources. Discriminants follow the source counter `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SensorId {
    Radar = 1,
    Lidar = 2,
    Camera = 3,
    Rsu = 4,
}

impl SensorId {
    /// All sensors in update order.
    pub const ALL: [SensorId; 4] = [
        SensorId::Radar,
        SensorId::Lidar,
        SensorId::Camera,
        SensorId::Rsu,
    ];

    /// Measurement layout of this sensor, in vector order.
    pub fn layout(self) -> &'static [MeasDim] {
        use MeasDim::*;
        match self {
            SensorId::Radar => &[X, Y],
            SensorId::Lidar | SensorId::Camera => &[X, Y, Vx, Vy],
            SensorId::Rsu => &[X, Y, Theta, Vx, Vy, VTheta],
        }
    }

    pub fn dim(self) -> usize {
        self.layout().len()
    }

    /// Position of `dim` in this sensor's measurement vector.
    pub fn index_of(self, dim: MeasDim) -> Option<usize> {
        self.layout().iter().position(|&d| d == dim)
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorId::Radar => "radar",
            SensorId::Lidar => "lidar",
            SensorId::Camera => "camera",
            SensorId::Rsu => "rsu",
        }
    }

    /// Zero-based slot, used for per-sensor storage.
    pub fn slot(self) -> usize {
        self as usize - 1
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "radar" | "1" => Ok(SensorId::Radar),
            "lidar" | "2" => Ok(SensorId::Lidar),
            "camera" | "3" => Ok(SensorId::Camera),
            "rsu" | "4" => Ok(SensorId::Rsu),
            _ => Err(Error::UnknownSensor(s.to_string())),
        }
    }
}

impl TryFrom<u8> for SensorId {
    type Error = Error;

    fn try_from(j: u8) -> Result<Self> {
        match j {
            1 => Ok(SensorId::Radar),
            2 => Ok(SensorId::Lidar),
            3 => Ok(SensorId::Camera),
            4 => Ok(SensorId::Rsu),
            _ => Err(Error::UnknownSensor(j.to_string())),
        }
    }
}

/// One measured quantity of a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MeasDim {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "v_x")]
    Vx,
    #[serde(rename = "v_y")]
    Vy,
    #[serde(rename = "v_theta")]
    VTheta,
}

impl MeasDim {
    pub fn name(self) -> &'static str {
        match self {
            MeasDim::X => "x",
            MeasDim::Y => "y",
            MeasDim::Theta => "theta",
            MeasDim::Vx => "v_x",
            MeasDim::Vy => "v_y",
            MeasDim::VTheta => "v_theta",
        }
    }

    pub fn is_velocity(self) -> bool {
        matches!(self, MeasDim::Vx | MeasDim::Vy | MeasDim::VTheta)
    }
}

impl fmt::Display for MeasDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(MeasDim::X),
            "y" => Ok(MeasDim::Y),
            "theta" => Ok(MeasDim::Theta),
            "v_x" | "vx" => Ok(MeasDim::Vx),
            "v_y" | "vy" => Ok(MeasDim::Vy),
            "v_theta" | "vtheta" => Ok(MeasDim::VTheta),
            _ => Err(Error::UnknownDimension(s.to_string())),
        }
    }
}

/// One value per sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSensor<T> {
    pub radar: T,
    pub lidar: T,
    pub camera: T,
    pub rsu: T,
}

impl<T> PerSensor<T> {
    pub fn from_fn(mut f: impl FnMut(SensorId) -> T) -> Self {
        PerSensor {
            radar: f(SensorId::Radar),
            lidar: f(SensorId::Lidar),
            camera: f(SensorId::Camera),
            rsu: f(SensorId::Rsu),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SensorId, &T)> {
        SensorId::ALL.into_iter().map(move |s| (s, &self[s]))
    }
}

impl<T> Index<SensorId> for PerSensor<T> {
    type Output = T;

    fn index(&self, s: SensorId) -> &T {
        match s {
            SensorId::Radar => &self.radar,
            SensorId::Lidar => &self.lidar,
            SensorId::Camera => &self.camera,
            SensorId::Rsu => &self.rsu,
        }
    }
}

impl<T> IndexMut<SensorId> for PerSensor<T> {
    fn index_mut(&mut self, s: SensorId) -> &mut T {
        match s {
            SensorId::Radar => &mut self.radar,
            SensorId::Lidar => &mut self.lidar,
            SensorId::Camera => &mut self.camera,
            SensorId::Rsu => &mut self.rsu,
        }
    }
}

/// Target state `[x, y, theta, v, v_theta, a]`.
///
/// `v` and `a` are resultant planar magnitudes. `theta` is not wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub v_theta: f64,
    pub a: f64,
}

impl TrackState {
    pub const fn new(x: f64, y: f64, theta: f64, v: f64, v_theta: f64, a: f64) -> Self {
        TrackState {
            x,
            y,
            theta,
            v,
            v_theta,
            a,
        }
    }

    /// Builds a state from Cartesian velocity and acceleration components.
    /// Heading is taken from the velocity direction.
    pub fn from_cartesian(
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
        ax: f64,
        ay: f64,
        v_theta: f64,
    ) -> Self {
        TrackState {
            x,
            y,
            theta: vy.atan2(vx),
            v: vx.hypot(vy),
            v_theta,
            a: ax.hypot(ay),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.theta, self.v, self.v_theta, self.a)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        TrackState::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Fused mean, covariance and time of validity.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub mean: TrackState,
    pub covariance: Matrix6<f64>,
    pub timestamp: f64,
}

impl StateEstimate {
    pub fn new(mean: TrackState, covariance: Matrix6<f64>, timestamp: f64) -> Self {
        StateEstimate {
            mean,
            covariance,
            timestamp,
        }
    }

    /// `true` when the covariance is symmetric to `1e-9` relative and its
    /// smallest eigenvalue is no lower than `-1e-9`.
    pub fn covariance_is_healthy(&self) -> bool {
        let p = &self.covariance;
        let scale = p.abs().max().max(1.0);
        let asym = (p - p.transpose()).abs().max();
        if asym > 1e-9 * scale {
            return false;
        }
        let sym = (p + p.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min() >= -1e-9
    }
}

/// A timestamped observation from one sensor.
///
/// `values` always has the sensor's layout length. When `available` is false
/// the values are zero and the filter skips the measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub sensor: SensorId,
    pub timestamp: f64,
    pub values: DVector<f64>,
    pub available: bool,
}

impl Measurement {
    pub fn new(sensor: SensorId, timestamp: f64, values: DVector<f64>) -> Result<Self> {
        if values.len() != sensor.dim() {
            return Err(Error::LayoutMismatch {
                sensor,
                expected: sensor.dim(),
                got: values.len(),
            });
        }
        Ok(Measurement {
            sensor,
            timestamp,
            values,
            available: true,
        })
    }

    pub fn unavailable(sensor: SensorId, timestamp: f64) -> Self {
        Measurement {
            sensor,
            timestamp,
            values: DVector::zeros(sensor.dim()),
            available: false,
        }
    }

    pub fn get(&self, dim: MeasDim) -> Option<f64> {
        self.sensor.index_of(dim).map(|i| self.values[i])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Standard deviations of the simulated sensor noise, in measurement layout
/// order, plus the process noise scale used for `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: PerSensor<Vec<f64>>,
    pub process_q: f64,
}

impl NoiseSpec {
    /// Reference sensor noise levels.
    pub fn reference() -> Self {
        NoiseSpec {
            sigma: PerSensor {
                radar: vec![0.03, 0.03],
                lidar: vec![0.0067, 0.0067, 0.17, 0.17],
                camera: vec![0.03, 0.03, 0.17, 0.17],
                rsu: vec![0.03, 0.03, 0.011, 0.17, 0.17, 0.011],
            },
            process_q: DEFAULT_PROCESS_Q,
        }
    }

    pub fn sigma_of(&self, sensor: SensorId, dim: MeasDim) -> Option<f64> {
        sensor.index_of(dim).map(|i| self.sigma[sensor][i])
    }

    pub fn validate(&self) -> Result<()> {
        for (s, sig) in self.sigma.iter() {
            if sig.len() != s.dim() {
                return Err(Error::invalid(
                    format!("noise.{s}"),
                    format!("expected {} values, got {}", s.dim(), sig.len()),
                ));
            }
            for (d, v) in s.layout().iter().zip(sig) {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid(
                        format!("noise.{s}.{d}"),
                        format!("standard deviation must be > 0, got {v}"),
                    ));
                }
            }
        }
        if !(self.process_q.is_finite() && self.process_q > 0.0) {
            return Err(Error::invalid(
                "noise.process_q",
                format!("must be > 0, got {}", self.process_q),
            ));
        }
        Ok(())
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::reference()
    }
}

/// Per-dimension health flags for one sensor. `true` means healthy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultMask {
    pub sensor: SensorId,
    pub healthy: Vec<bool>,
}

impl FaultMask {
    pub fn healthy(sensor: SensorId) -> Self {
        FaultMask {
            sensor,
            healthy: vec![true; sensor.dim()],
        }
    }

    pub fn all_faulted(sensor: SensorId) -> Self {
        FaultMask {
            sensor,
            healthy: vec![false; sensor.dim()],
        }
    }

    pub fn from_bits(sensor: SensorId, healthy: Vec<bool>) -> Result<Self> {
        if healthy.len() != sensor.dim() {
            return Err(Error::LayoutMismatch {
                sensor,
                expected: sensor.dim(),
                got: healthy.len(),
            });
        }
        Ok(FaultMask { sensor, healthy })
    }

    pub fn is_healthy(&self, i: usize) -> bool {
        self.healthy[i]
    }

    pub fn all_healthy(&self) -> bool {
        self.healthy.iter().all(|&h| h)
    }

    /// 0/1 diagonal of the indicator matrix.
    pub fn epsilon(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.healthy.len(),
            self.healthy.iter().map(|&h| if h { 1.0 } else { 0.0 }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Instant,
    Bias,
    Drift,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::Instant => "instant",
            AnomalyKind::Bias => "bias",
            AnomalyKind::Drift => "drift",
        })
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "instant" => Ok(AnomalyKind::Instant),
            "bias" => Ok(AnomalyKind::Bias),
            "drift" => Ok(AnomalyKind::Drift),
            other => Err(Error::Parse(format!("unknown anomaly kind `{other}`"))),
        }
    }
}

/// An injected fault on one measured dimension of one sensor.
///
/// `magnitude` is in measurement units for instant and bias faults and in
/// units per second for drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub sensor: SensorId,
    pub dimension: MeasDim,
    pub magnitude: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl AnomalySpec {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Index of the target dimension in the sensor's measurement vector.
    pub fn index(&self) -> Option<usize> {
        self.sensor.index_of(self.dimension)
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_start < self.t_end) {
            return Err(Error::invalid(
                "anomaly.t_end",
                format!(
                    "t_start ({}) must be < t_end ({})",
                    self.t_start, self.t_end
                ),
            ));
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::invalid(
                "anomaly.magnitude",
                format!("must be >= 0, got {}", self.magnitude),
            ));
        }
        if self.index().is_none() {
            return Err(Error::invalid(
                "anomaly.dimension",
                format!("{} does not measure {}", self.sensor, self.dimension),
            ));
        }
        if self.kind == AnomalyKind::Instant && (self.duration() - dt).abs() > 1e-9 {
            return Err(Error::invalid(
                "anomaly.t_end",
                format!("instant anomaly must last one sample ({dt} s)"),
            ));
        }
        Ok(())
    }
}

/// Filter and residual evaluator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Residual evaluation horizon in samples.
    pub horizon: usize,
    /// Thresholds on the mean squared residual, per sensor in layout order.
    pub alpha: PerSensor<Vec<f64>>,
    pub p0: Matrix6<f64>,
    pub x0: TrackState,
    pub q: Matrix6<f64>,
    /// Diagonal of each sensor's measurement covariance.
    pub r: PerSensor<Vec<f64>>,
    pub dt: f64,
}

impl DetectorConfig {
    /// Measurement covariance matrix of `sensor`.
    pub fn r_matrix(&self, sensor: SensorId) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.r[sensor]))
    }

    pub fn alpha_of(&self, sensor: SensorId, dim: MeasDim) -> Option<f64> {
        sensor.index_of(dim).map(|i| self.alpha[sensor][i])
    }

    /// Thresholds for one sensor layout: positions and heading get
    /// `position`, velocity components get `velocity`.
    pub fn split_alpha(position: f64, velocity: f64) -> PerSensor<Vec<f64>> {
        PerSensor::from_fn(|s| {
            s.layout()
                .iter()
                .map(|d| if d.is_velocity() { velocity } else { position })
                .collect()
        })
    }

    /// Measurement covariances obtained by squaring the noise sigmas.
    pub fn r_from_noise(noise: &NoiseSpec) -> PerSensor<Vec<f64>> {
        PerSensor::from_fn(|s| noise.sigma[s].iter().map(|v| v * v).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::invalid("detector.horizon", "must be >= 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "detector.dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        for (s, a) in self.alpha.iter() {
            if a.len() != s.dim() {
                return Err(Error::invalid(
                    format!("detector.alpha.{s}"),
                    format!("expected {} values, got {}", s.dim(), a.len()),
                ));
            }
            for (d, v) in s.layout().iter().zip(a) {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid(
                        format!("detector.alpha.{s}.{d}"),
                        format!("threshold must be > 0, got {v}"),
                    ));
                }
            }
        }
        for (s, r) in self.r.iter() {
            if r.len() != s.dim() {
                return Err(Error::invalid(
                    format!("detector.r.{s}"),
                    format!("expected {} values, got {}", s.dim(), r.len()),
                ));
            }
            for (d, v) in s.layout().iter().zip(r) {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid(
                        format!("detector.r.{s}.{d}"),
                        format!("variance must be > 0, got {v}"),
                    ));
                }
            }
        }
        if !self.x0.is_finite() {
            return Err(Error::invalid("detector.x0", "must be finite"));
        }
        for (name, m) in [("detector.p0", &self.p0), ("detector.q", &self.q)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(name, "must be finite"));
            }
            if m.symmetric_eigenvalues().min() < -1e-12 {
                return Err(Error::invalid(name, "must be positive semidefinite"));
            }
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Reference detector parameters: `n = 30`, thresholds 0.18 / 0.7,
/// `Q = 0.001 I`, `P0 = I`, zero initial state, `R` from the squared
/// reference noise sigmas and a 0.05 s sample period.
pub fn default_config() -> DetectorConfig {
    let noise = NoiseSpec::reference();
    DetectorConfig {
        horizon: DEFAULT_HORIZON,
        alpha: DetectorConfig::split_alpha(ALPHA_POSITION, ALPHA_VELOCITY),
        p0: Matrix6::identity(),
        x0: TrackState::default(),
        q: Matrix6::identity() * noise.process_q,
        r: DetectorConfig::r_from_noise(&noise),
        dt: DEFAULT_DT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_reference_values() {
        let c = default_config();
        assert_eq!(c.horizon, 30);
        assert_eq!(c.alpha_of(SensorId::Rsu, MeasDim::Theta), Some(0.18));
        assert_eq!(c.alpha_of(SensorId::Rsu, MeasDim::VTheta), Some(0.7));
        assert_eq!(c.alpha_of(SensorId::Lidar, MeasDim::Vx), Some(0.7));
        assert_eq!(c.alpha_of(SensorId::Radar, MeasDim::Y), Some(0.18));
        // 0.0067^2
        assert!((c.r.lidar[0] - 4.489e-5).abs() < 1e-18);
        assert_eq!(c.q, Matrix6::identity() * 0.001);
        assert_eq!(c.p0, Matrix6::identity());
        assert_eq!(c.x0, TrackState::default());
        assert_eq!(c.dt, 0.05);
        c.validate().unwrap();
    }

    #[test]
    fn sensor_order_and_layouts() {
        let ids: Vec<u8> = SensorId::ALL.iter().map(|&s| s as u8).collect();
        assert_eq!(ids, vec![1, 2, 3, 4]);
        let dims: Vec<usize> = SensorId::ALL.iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![2, 4, 4, 6]);
        assert!(SensorId::try_from(5).is_err());
        assert!("sonar".parse::<SensorId>().is_err());
        assert_eq!("RSU".parse::<SensorId>().unwrap(), SensorId::Rsu);
    }

    #[test]
    fn cartesian_resultants() {
        let s = TrackState::from_cartesian(1.0, 2.0, 3.0, 4.0, -0.6, 0.8, 0.0);
        assert_eq!(s.v, 5.0);
        assert_eq!(s.a, 1.0);
        assert!((s.theta - 4.0f64.atan2(3.0)).abs() < 1e-15);
    }

    #[test]
    fn config_validation_rejects_nonpositive_values() {
        let mut c = default_config();
        c.horizon = 0;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.dt = 0.0;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.alpha.rsu[2] = -0.1;
        let err = c.validate().unwrap_err();
        assert!(
            err.to_string().contains("detector.alpha.rsu.theta"),
            "{err}"
        );

        let mut c = default_config();
        c.r.camera[1] = 0.0;
        assert!(c.validate().is_err());

        let mut n = NoiseSpec::reference();
        n.sigma.radar[0] = 0.0;
        assert!(n.validate().is_err());
    }

    #[test]
    fn measurement_layout_is_enforced() {
        assert!(Measurement::new(SensorId::Lidar, 0.0, DVector::zeros(2)).is_err());
        let m = Measurement::unavailable(SensorId::Rsu, 1.0);
        assert_eq!(m.values.len(), 6);
        assert!(!m.available);
        assert!(FaultMask::from_bits(SensorId::Radar, vec![true; 3]).is_err());
    }

    #[test]
    fn anomaly_spec_validation() {
        let spec = AnomalySpec {
            kind: AnomalyKind::Instant,
            sensor: SensorId::Rsu,
            dimension: MeasDim::X,
            magnitude: 1.0,
            t_start: 10.0,
            t_end: 10.05,
        };
        spec.validate(0.05).unwrap();
        assert!(AnomalySpec {
            t_end: 10.1,
            ..spec
        }
        .validate(0.05)
        .is_err());
        assert!(AnomalySpec {
            magnitude: -1.0,
            ..spec
        }
        .validate(0.05)
        .is_err());
        assert!(AnomalySpec {
            sensor: SensorId::Radar,
            dimension: MeasDim::Theta,
            ..spec
        }
        .validate(0.05)
        .is_err());
        assert!(AnomalySpec {
            t_end: 9.0,
            kind: AnomalyKind::Bias,
            ..spec
        }
        .validate(0.05)
        .is_err());
    }
}
