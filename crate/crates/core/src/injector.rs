//! Fault injection on a clean measurement stream.
//!
//! Three fault kinds act on one dimension `i` of the target sensor over the
//! tick window `[k_start, k_end)`:
//!
//! - instant: `u_i + e` at `k_start` only;
//! - bias: `u_i + e` over the window;
//! - drift: `u_i + (hacked_{k-1} - clean_{k-1})_i + e * dt` over the window,
//!   so the offset grows by `e * dt` per tick and returns to zero at `k_end`.

use crate::error::{Error, Result};
use crate::types::{AnomalyKind, AnomalySpec, MeasDim, Measurement, SensorId};

/// Tick index of time `t` for sample period `dt`.
pub fn tick_of(t: f64, dt: f64) -> i64 {
    (t / dt).round() as i64
}

/// Tick window `[k_start, k_end)` of `spec`.
pub fn tick_window(spec: &AnomalySpec, dt: f64) -> (i64, i64) {
    (tick_of(spec.t_start, dt), tick_of(spec.t_end, dt))
}

/// Applies `spec` to the clean measurement `meas` at tick `k`.
///
/// Drift after onset needs the previous clean and hacked measurements.
pub fn inject(
    meas: &Measurement,
    spec: &AnomalySpec,
    prev_clean: Option<&Measurement>,
    prev_hacked: Option<&Measurement>,
    k: i64,
    dt: f64,
) -> Result<Measurement> {
    if meas.sensor != spec.sensor {
        return Err(Error::SensorMismatch {
            expected: spec.sensor,
            got: meas.sensor,
        });
    }
    let i = spec.index().ok_or_else(|| {
        Error::invalid(
            "anomaly.dimension",
            format!("{} does not measure {}", spec.sensor, spec.dimension),
        )
    })?;
    let (k_start, k_end) = tick_window(spec, dt);
    let mut out = meas.clone();
    if k < k_start || k >= k_end || !meas.available {
        return Ok(out);
    }
    match spec.kind {
        AnomalyKind::Instant => {
            if k == k_start {
                out.values[i] += spec.magnitude;
            }
        }
        AnomalyKind::Bias => out.values[i] += spec.magnitude,
        AnomalyKind::Drift => {
            let carried = if k == k_start {
                0.0
            } else {
                match (prev_clean, prev_hacked) {
                    (Some(c), Some(h)) if c.available && h.available => h.values[i] - c.values[i],
                    _ => return Err(Error::MissingDriftHistory(k as u64)),
                }
            };
            out.values[i] += carried + spec.magnitude * dt;
        }
    }
    Ok(out)
}

/// Stateful wrapper that keeps the drift history of one trial.
#[derive(Debug, Clone)]
pub struct Injector {
    spec: AnomalySpec,
    dt: f64,
    prev: Option<(Measurement, Measurement)>,
}

impl Injector {
    pub fn new(spec: AnomalySpec, dt: f64) -> Self {
        Injector {
            spec,
            dt,
            prev: None,
        }
    }

    pub fn spec(&self) -> &AnomalySpec {
        &self.spec
    }

    /// Returns the hacked version of `meas`. Measurements from other sensors
    /// pass through unchanged.
    pub fn apply(&mut self, meas: &Measurement, k: i64) -> Result<Measurement> {
        if meas.sensor != self.spec.sensor {
            return Ok(meas.clone());
        }
        let (clean, hacked) = match &self.prev {
            Some((c, h)) => (Some(c), Some(h)),
            None => (None, None),
        };
        let out = inject(meas, &self.spec, clean, hacked, k, self.dt)?;
        if meas.available {
            self.prev = Some((meas.clone(), out.clone()));
        }
        Ok(out)
    }
}

/// `count` log-spaced values over `[lo, hi]`, endpoints exact.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == count - 1 {
                        hi
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

/// Durations of bias and drift faults in the campaign, seconds.
pub const CAMPAIGN_DURATIONS: [f64; 4] = [0.25, 0.5, 1.0, 2.5];

/// The 50-fault campaign: 10 instant, 20 bias and 20 drift faults on
/// `sensor`/`dimension`, all starting at `t_start`.
pub fn campaign_specs_for(
    sensor: SensorId,
    dimension: MeasDim,
    t_start: f64,
    dt: f64,
) -> Vec<AnomalySpec> {
    let mut specs = Vec::with_capacity(50);
    for m in logspace(0.1, 10.0, 10) {
        specs.push(AnomalySpec {
            kind: AnomalyKind::Instant,
            sensor,
            dimension,
            magnitude: m,
            t_start,
            t_end: t_start + dt,
        });
    }
    for kind in [AnomalyKind::Bias, AnomalyKind::Drift] {
        for m in logspace(0.1, 3.0, 5) {
            for d in CAMPAIGN_DURATIONS {
                specs.push(AnomalySpec {
                    kind,
                    sensor,
                    dimension,
                    magnitude: m,
                    t_start,
                    t_end: t_start + d,
                });
            }
        }
    }
    specs
}

/// Default campaign onset, seconds into the run.
pub const CAMPAIGN_ONSET: f64 = 30.0;

/// Campaign on the RSU x-position with the default onset and sample period.
pub fn build_campaign_specs() -> Vec<AnomalySpec> {
    campaign_specs_for(
        SensorId::Rsu,
        MeasDim::X,
        CAMPAIGN_ONSET,
        crate::types::DEFAULT_DT,
    )
}
