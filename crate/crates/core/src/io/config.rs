//! Scenario/detector/anomaly configuration file (TOML).
//!
//! Every section is optional. Missing values fall back to the reference
//! crossing scenario, the reference noise levels and the reference detector
//! parameters, so an empty file reproduces the default setup. Unknown keys
//! are rejected.
//!
//! ```toml
//! [scenario]
//! duration = 60.0
//! seed = 7
//!
//! [trajectory]
//! start = { x = 10.0, y = -42.0, heading = 1.5707963267948966 }
//! [[trajectory.segment]]
//! kind = "line"
//! length = 84.0
//! speed = 1.4
//!
//! [visibility]
//! radar = [5.0, 60.0]
//!
//! [noise.rsu]
//! x = 0.05
//!
//! [detector]
//! horizon = 30
//!
//! [[anomaly]]
//! kind = "bias"
//! sensor = "rsu"
//! dimension = "x"
//! magnitude = 1.28
//! t_start = 45.0
//! t_end = 50.0
//! ```

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::injector::CAMPAIGN_ONSET;
use crate::sim::{Scenario, Trajectory, Window};
use crate::types::{
    AnomalySpec, DetectorConfig, MeasDim, NoiseSpec, PerSensor, SensorId, TrackState,
    ALPHA_POSITION, ALPHA_VELOCITY,
};

/// Optional value per measured dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimValues {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_theta: Option<f64>,
}

impl DimValues {
    fn get(&self, dim: MeasDim) -> Option<f64> {
        match dim {
            MeasDim::X => self.x,
            MeasDim::Y => self.y,
            MeasDim::Theta => self.theta,
            MeasDim::Vx => self.v_x,
            MeasDim::Vy => self.v_y,
            MeasDim::VTheta => self.v_theta,
        }
    }

    fn set(&mut self, dim: MeasDim, v: f64) {
        let slot = match dim {
            MeasDim::X => &mut self.x,
            MeasDim::Y => &mut self.y,
            MeasDim::Theta => &mut self.theta,
            MeasDim::Vx => &mut self.v_x,
            MeasDim::Vy => &mut self.v_y,
            MeasDim::VTheta => &mut self.v_theta,
        };
        *slot = Some(v);
    }

    fn from_layout(sensor: SensorId, values: &[f64]) -> Self {
        let mut out = DimValues::default();
        for (d, v) in sensor.layout().iter().zip(values) {
            out.set(*d, *v);
        }
        out
    }

    /// Applies the overrides onto `base`, rejecting dimensions the sensor
    /// does not measure.
    fn overlay(&self, sensor: SensorId, base: &mut [f64], path: &str) -> Result<()> {
        for dim in [
            MeasDim::X,
            MeasDim::Y,
            MeasDim::Theta,
            MeasDim::Vx,
            MeasDim::Vy,
            MeasDim::VTheta,
        ] {
            let Some(v) = self.get(dim) else { continue };
            match sensor.index_of(dim) {
                Some(i) => base[i] = v,
                None => {
                    return Err(Error::invalid(
                        format!("{path}.{dim}"),
                        format!("{sensor} does not measure {dim}"),
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radar: Option<DimValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lidar: Option<DimValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<DimValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rsu: Option<DimValues>,
}

impl SensorTable {
    fn entry(&self, s: SensorId) -> Option<&DimValues> {
        match s {
            SensorId::Radar => self.radar.as_ref(),
            SensorId::Lidar => self.lidar.as_ref(),
            SensorId::Camera => self.camera.as_ref(),
            SensorId::Rsu => self.rsu.as_ref(),
        }
    }

    fn full(values: &PerSensor<Vec<f64>>) -> Self {
        SensorTable {
            radar: Some(DimValues::from_layout(SensorId::Radar, &values.radar)),
            lidar: Some(DimValues::from_layout(SensorId::Lidar, &values.lidar)),
            camera: Some(DimValues::from_layout(SensorId::Camera, &values.camera)),
            rsu: Some(DimValues::from_layout(SensorId::Rsu, &values.rsu)),
        }
    }

    fn overlay(&self, base: &mut PerSensor<Vec<f64>>, path: &str) -> Result<()> {
        for s in SensorId::ALL {
            if let Some(d) = self.entry(s) {
                d.overlay(s, &mut base[s], &format!("{path}.{s}"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `[t_on, t_off]` per sensor; `false` disables the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VisibilityEntry {
    Window([f64; 2]),
    Enabled(bool),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radar: Option<VisibilityEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lidar: Option<VisibilityEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<VisibilityEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rsu: Option<VisibilityEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radar: Option<DimValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lidar: Option<DimValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<DimValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rsu: Option<DimValues>,
}

impl NoiseSection {
    fn sigma(&self) -> SensorTable {
        SensorTable {
            radar: self.radar.clone(),
            lidar: self.lidar.clone(),
            camera: self.camera.clone(),
            rsu: self.rsu.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Threshold for position and heading dimensions of every sensor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_position: Option<f64>,
    /// Threshold for velocity dimensions of every sensor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_velocity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_diag: Option<[f64; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_diag: Option<[f64; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 6]>,
    /// Per-dimension threshold overrides.
    #[serde(default, skip_serializing_if = "is_default")]
    pub alpha: SensorTable,
    /// Per-dimension measurement variance overrides. Defaults to the squared
    /// noise sigmas.
    #[serde(default, skip_serializing_if = "is_default")]
    pub r: SensorTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<MeasDim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Raw file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "is_default")]
    pub scenario: ScenarioSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub visibility: VisibilitySection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub detector: DetectorSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anomaly: Vec<AnomalySpec>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub campaign: CampaignSection,
}

/// Campaign settings resolved from the `[campaign]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSettings {
    pub onset: f64,
    pub sensor: SensorId,
    pub dimension: MeasDim,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl CampaignSettings {
    /// Checks that the longest campaign fault fits in a run of `duration`.
    pub fn validate(&self, duration: f64) -> Result<()> {
        let longest = crate::injector::CAMPAIGN_DURATIONS
            .iter()
            .fold(0.0f64, |a, b| a.max(*b));
        if !(self.onset >= 0.0 && self.onset + longest <= duration) {
            return Err(Error::invalid(
                "campaign.onset",
                format!(
                    "faults starting at {} s do not fit in a {duration} s run",
                    self.onset
                ),
            ));
        }
        Ok(())
    }
}

impl Default for CampaignSettings {
    fn default() -> Self {
        CampaignSettings {
            onset: CAMPAIGN_ONSET,
            sensor: SensorId::Rsu,
            dimension: MeasDim::X,
            seeds: vec![1, 2, 3],
            workers: 1,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub noise: NoiseSpec,
    pub detector: DetectorConfig,
    pub anomalies: Vec<AnomalySpec>,
    pub campaign: CampaignSettings,
}

fn diag(v: &[f64; 6]) -> Matrix6<f64> {
    Matrix6::from_diagonal(&nalgebra::Vector6::from_column_slice(v))
}

fn is_diagonal(m: &Matrix6<f64>) -> bool {
    (0..6).all(|i| (0..6).all(|j| i == j || m[(i, j)] == 0.0))
}

impl ConfigFile {
    /// Applies defaults and validates.
    pub fn resolve(&self) -> Result<RunConfig> {
        let defaults = RunConfig::default();

        let mut scenario = defaults.scenario.clone();
        if let Some(d) = self.scenario.duration {
            scenario.duration = d;
        }
        if let Some(s) = self.scenario.seed {
            scenario.seed = s;
        }
        if let Some(t) = &self.trajectory {
            scenario.trajectory = t.clone();
        }
        // default windows are clipped to the configured duration
        for s in SensorId::ALL {
            if let Some(w) = scenario.visibility[s].as_mut() {
                w.1 = scenario.duration;
                w.0 = w.0.min(scenario.duration);
            }
        }
        let vis = &self.visibility;
        for (s, entry) in [
            (SensorId::Radar, vis.radar),
            (SensorId::Lidar, vis.lidar),
            (SensorId::Camera, vis.camera),
            (SensorId::Rsu, vis.rsu),
        ] {
            match entry {
                None | Some(VisibilityEntry::Enabled(true)) => {}
                Some(VisibilityEntry::Enabled(false)) => scenario.visibility[s] = None,
                Some(VisibilityEntry::Window([on, off])) => {
                    scenario.visibility[s] = Some(Window(on, off))
                }
            }
        }
        scenario.validate()?;

        let mut noise = defaults.noise.clone();
        if let Some(q) = self.noise.process_q {
            noise.process_q = q;
        }
        self.noise.sigma().overlay(&mut noise.sigma, "noise")?;
        noise.validate()?;

        let d = &self.detector;
        let mut det = defaults.detector.clone();
        if let Some(n) = d.horizon {
            det.horizon = n;
        }
        if let Some(dt) = d.dt {
            det.dt = dt;
        }
        det.alpha = DetectorConfig::split_alpha(
            d.alpha_position.unwrap_or(ALPHA_POSITION),
            d.alpha_velocity.unwrap_or(ALPHA_VELOCITY),
        );
        d.alpha.overlay(&mut det.alpha, "detector.alpha")?;
        det.r = DetectorConfig::r_from_noise(&noise);
        d.r.overlay(&mut det.r, "detector.r")?;
        det.q = match d.q_diag {
            Some(q) => diag(&q),
            None => Matrix6::identity() * noise.process_q,
        };
        if let Some(p) = d.p0_diag {
            det.p0 = diag(&p);
        }
        if let Some(x) = d.x0 {
            det.x0 = TrackState::from_vector(&nalgebra::Vector6::from_column_slice(&x));
        }
        det.validate()?;

        for (i, a) in self.anomaly.iter().enumerate() {
            a.validate(det.dt).map_err(|e| match e {
                Error::InvalidConfig { path, reason } => Error::InvalidConfig {
                    path: path.replacen("anomaly", &format!("anomaly[{i}]"), 1),
                    reason,
                },
                other => other,
            })?;
        }

        let c = &self.campaign;
        let mut campaign = defaults.campaign;
        if let Some(v) = c.onset {
            campaign.onset = v;
        }
        if let Some(v) = c.sensor {
            campaign.sensor = v;
        }
        if let Some(v) = c.dimension {
            campaign.dimension = v;
        }
        if let Some(v) = &c.seeds {
            campaign.seeds = v.clone();
        }
        if let Some(v) = c.workers {
            campaign.workers = v;
        }
        if campaign.sensor.index_of(campaign.dimension).is_none() {
            return Err(Error::invalid(
                "campaign.dimension",
                format!(
                    "{} does not measure {}",
                    campaign.sensor, campaign.dimension
                ),
            ));
        }
        if campaign.seeds.is_empty() {
            return Err(Error::invalid(
                "campaign.seeds",
                "at least one seed is required",
            ));
        }
        if campaign.workers == 0 {
            return Err(Error::invalid("campaign.workers", "must be >= 1"));
        }
        Ok(RunConfig {
            scenario,
            noise,
            detector: det,
            anomalies: self.anomaly.clone(),
            campaign,
        })
    }
}

impl RunConfig {
    /// Explicit file form with every value written out.
    pub fn to_file(&self) -> Result<ConfigFile> {
        let det = &self.detector;
        if !is_diagonal(&det.p0) || !is_diagonal(&det.q) {
            return Err(Error::invalid(
                "detector",
                "only diagonal P0 and Q can be written to a config file",
            ));
        }
        let vis = |s: SensorId| {
            Some(match self.scenario.visibility[s] {
                Some(Window(on, off)) => VisibilityEntry::Window([on, off]),
                None => VisibilityEntry::Enabled(false),
            })
        };
        let d6 = |m: &Matrix6<f64>| -> [f64; 6] { std::array::from_fn(|i| m[(i, i)]) };
        let x0 = det.x0.to_vector();
        Ok(ConfigFile {
            scenario: ScenarioSection {
                duration: Some(self.scenario.duration),
                seed: Some(self.scenario.seed),
            },
            trajectory: Some(self.scenario.trajectory.clone()),
            visibility: VisibilitySection {
                radar: vis(SensorId::Radar),
                lidar: vis(SensorId::Lidar),
                camera: vis(SensorId::Camera),
                rsu: vis(SensorId::Rsu),
            },
            noise: {
                let t = SensorTable::full(&self.noise.sigma);
                NoiseSection {
                    process_q: Some(self.noise.process_q),
                    radar: t.radar,
                    lidar: t.lidar,
                    camera: t.camera,
                    rsu: t.rsu,
                }
            },
            detector: DetectorSection {
                horizon: Some(det.horizon),
                dt: Some(det.dt),
                alpha_position: None,
                alpha_velocity: None,
                p0_diag: Some(d6(&det.p0)),
                q_diag: Some(d6(&det.q)),
                x0: Some(std::array::from_fn(|i| x0[i])),
                alpha: SensorTable::full(&det.alpha),
                r: SensorTable::full(&det.r),
            },
            anomaly: self.anomalies.clone(),
            campaign: CampaignSection {
                onset: Some(self.campaign.onset),
                sensor: Some(self.campaign.sensor),
                dimension: Some(self.campaign.dimension),
                seeds: Some(self.campaign.seeds.clone()),
                workers: Some(self.campaign.workers),
            },
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(&self.to_file()?).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parses the raw file, reporting the key path of type errors.
pub fn parse_file(text: &str) -> Result<ConfigFile> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        if path.is_empty() || path == "." {
            Error::Parse(inner)
        } else {
            Error::Parse(format!("at `{path}`: {inner}"))
        }
    })
}

/// Parses and resolves a configuration from text.
pub fn parse_scenario(text: &str) -> Result<RunConfig> {
    parse_file(text)?.resolve()
}

/// Reads and resolves a configuration file.
pub fn load_scenario(path: &std::path::Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}
