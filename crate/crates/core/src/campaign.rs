//! Closed-loop trials and the 50-fault detection campaign.
//!
//! A trial simulates the scenario, injects one fault into the target
//! sensor's stream, runs the detector and scores the resulting detection
//! events. The matrix runner repeats this over all campaign faults and seeds
//! and aggregates true/false-positive rates.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::detector::{DetectionEvent, Detector, StepReport};
use crate::error::{Error, Result};
use crate::injector::{build_campaign_specs, Injector};
use crate::sim::{ground_truth, sample_sensors, NoiseSource, Scenario};
use crate::types::{
    AnomalyKind, AnomalySpec, DetectorConfig, MeasDim, NoiseSpec, SensorId, TrackState,
};

/// One tick of a closed-loop run.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub truth: TrackState,
    pub report: StepReport,
}

/// Full time series of one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub ticks: Vec<TickRecord>,
    pub events: Vec<DetectionEvent>,
}

/// Simulates `scenario` with sensors outside `enabled` switched off,
/// optionally corrupting one stream with `anomaly`.
pub fn simulate(
    scenario: &Scenario,
    noise: &NoiseSpec,
    config: &DetectorConfig,
    anomaly: Option<&AnomalySpec>,
    enabled: &BTreeSet<SensorId>,
) -> Result<RunLog> {
    let anomalies = anomaly.map(std::slice::from_ref).unwrap_or_default();
    simulate_with(scenario, noise, config, anomalies, enabled)
}

/// Like [`simulate`] with any number of anomalies, applied in order.
pub fn simulate_with(
    scenario: &Scenario,
    noise: &NoiseSpec,
    config: &DetectorConfig,
    anomalies: &[AnomalySpec],
    enabled: &BTreeSet<SensorId>,
) -> Result<RunLog> {
    let dt = config.dt;
    let mut rng = NoiseSource::new(scenario.seed);
    let mut detector = Detector::new(config.clone());
    let mut injectors: Vec<Injector> = anomalies.iter().map(|a| Injector::new(*a, dt)).collect();
    let last = (scenario.duration / dt + 1e-9).floor() as i64;
    let mut ticks = Vec::with_capacity(last as usize + 1);
    for k in 0..=last {
        let t = k as f64 * dt;
        let truth = ground_truth(scenario, t)?;
        let mut measurements = sample_sensors(scenario, t, noise, &mut rng)?;
        for m in &mut measurements {
            if !enabled.contains(&m.sensor) {
                m.available = false;
            }
        }
        for inj in &mut injectors {
            for m in &mut measurements {
                *m = inj.apply(m, k)?;
            }
        }
        let report = detector.step(t, &measurements);
        ticks.push(TickRecord { truth, report });
    }
    Ok(RunLog {
        ticks,
        events: detector.into_events(),
    })
}

/// Per-trial score.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub spec: AnomalySpec,
    pub seed: u64,
    pub detected: bool,
    /// Seconds from fault onset to the scoring detection.
    pub latency: Option<f64>,
    /// Flagged (sensor, dimension) pairs other than the injected one.
    pub false_positives: Vec<(SensorId, MeasDim)>,
    pub enabled: BTreeSet<SensorId>,
}

impl TrialOutcome {
    pub fn has_false_positive(&self) -> bool {
        !self.false_positives.is_empty()
    }
}

/// Scores `events` against `spec`: a true positive is an event on the
/// injected dimension with onset in `[t_start, t_end + n dt]`; every event
/// on another (sensor, dimension) is a false positive.
pub fn score(
    spec: &AnomalySpec,
    events: &[DetectionEvent],
    config: &DetectorConfig,
) -> (Option<f64>, Vec<(SensorId, MeasDim)>) {
    let grace = config.horizon as f64 * config.dt;
    let tol = 1e-9;
    let latency = events
        .iter()
        .filter(|e| e.sensor == spec.sensor && e.dimension == spec.dimension)
        .find(|e| e.onset >= spec.t_start - tol && e.onset <= spec.t_end + grace + tol)
        .map(|e| e.onset - spec.t_start);
    let fps: BTreeSet<(SensorId, MeasDim)> = events
        .iter()
        .filter(|e| !(e.sensor == spec.sensor && e.dimension == spec.dimension))
        .map(|e| (e.sensor, e.dimension))
        .collect();
    (latency, fps.into_iter().collect())
}

/// Inputs shared by every trial of a campaign. Defaults to the reference
/// crossing, noise and detector.
#[derive(Debug, Clone, Default)]
pub struct TrialSetup {
    pub scenario: Scenario,
    pub noise: NoiseSpec,
    pub config: DetectorConfig,
}

/// Runs and scores one closed-loop trial with the scenario reseeded to `seed`.
pub fn run_trial(
    setup: &TrialSetup,
    spec: &AnomalySpec,
    enabled: &BTreeSet<SensorId>,
    seed: u64,
) -> Result<TrialOutcome> {
    if !enabled.contains(&spec.sensor) {
        return Err(Error::invalid(
            "anomaly.sensor",
            format!("{} is not among the enabled sensors", spec.sensor),
        ));
    }
    let scenario = Scenario {
        seed,
        ..setup.scenario.clone()
    };
    let log = simulate(&scenario, &setup.noise, &setup.config, Some(spec), enabled)?;
    let (latency, false_positives) = score(spec, &log.events, &setup.config);
    Ok(TrialOutcome {
        spec: *spec,
        seed,
        detected: latency.is_some(),
        latency,
        false_positives,
        enabled: enabled.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    pub trials: usize,
    pub true_positives: usize,
    pub with_false_positive: usize,
    pub mean_latency: Option<f64>,
    pub min_latency: Option<f64>,
    pub max_latency: Option<f64>,
}

impl RateSummary {
    pub fn tp_rate(&self) -> f64 {
        self.true_positives as f64 / self.trials as f64
    }

    pub fn fp_rate(&self) -> f64 {
        self.with_false_positive as f64 / self.trials as f64
    }

    fn from_flags(flags: impl Iterator<Item = (bool, bool, Option<f64>)>) -> Self {
        let mut s = RateSummary {
            trials: 0,
            true_positives: 0,
            with_false_positive: 0,
            mean_latency: None,
            min_latency: None,
            max_latency: None,
        };
        let mut lat = Vec::new();
        for (tp, fp, l) in flags {
            s.trials += 1;
            s.true_positives += tp as usize;
            s.with_false_positive += fp as usize;
            lat.extend(l);
        }
        if !lat.is_empty() {
            s.mean_latency = Some(lat.iter().sum::<f64>() / lat.len() as f64);
            s.min_latency = lat.iter().copied().reduce(f64::min);
            s.max_latency = lat.iter().copied().reduce(f64::max);
        }
        s
    }
}

/// Aggregate of a campaign over one or more seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    pub enabled: BTreeSet<SensorId>,
    pub seeds: Vec<u64>,
    pub specs: Vec<AnomalySpec>,
    /// Outcomes ordered by seed, then by spec.
    pub outcomes: Vec<TrialOutcome>,
    pub per_seed: Vec<(u64, RateSummary)>,
    /// Per-spec majority vote across seeds.
    pub summary: RateSummary,
}

impl MatrixReport {
    pub fn outcomes_for_seed(&self, seed: u64) -> impl Iterator<Item = &TrialOutcome> {
        self.outcomes.iter().filter(move |o| o.seed == seed)
    }
}

/// Runs every spec for every seed using `workers` threads and reduces the
/// outcomes in (seed, spec) order.
pub fn run_matrix(
    setup: &TrialSetup,
    specs: &[AnomalySpec],
    enabled: &BTreeSet<SensorId>,
    seeds: &[u64],
    workers: usize,
) -> Result<MatrixReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    let jobs: Vec<(u64, &AnomalySpec)> = seeds
        .iter()
        .flat_map(|&seed| specs.iter().map(move |s| (seed, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|(seed, spec)| run_trial(setup, spec, enabled, *seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let per_seed = seeds
        .iter()
        .map(|&seed| {
            let flags = outcomes
                .iter()
                .filter(|o| o.seed == seed)
                .map(|o| (o.detected, o.has_false_positive(), o.latency));
            (seed, RateSummary::from_flags(flags))
        })
        .collect();

    let n = specs.len();
    let majority = seeds.len() / 2 + 1;
    let summary = RateSummary::from_flags((0..n).map(|i| {
        let runs: Vec<&TrialOutcome> = (0..seeds.len()).map(|s| &outcomes[s * n + i]).collect();
        let detected = runs.iter().filter(|o| o.detected).count() >= majority;
        let fp = runs.iter().filter(|o| o.has_false_positive()).count() >= majority;
        let lat: Vec<f64> = runs.iter().filter_map(|o| o.latency).collect();
        let latency =
            (detected && !lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64);
        (detected, fp, latency)
    }));

    Ok(MatrixReport {
        enabled: enabled.clone(),
        seeds: seeds.to_vec(),
        specs: specs.to_vec(),
        outcomes,
        per_seed,
        summary,
    })
}

/// Full campaign on the default RSU x-position fault matrix.
pub fn run_default_matrix(
    setup: &TrialSetup,
    enabled: &BTreeSet<SensorId>,
    seeds: &[u64],
    workers: usize,
) -> Result<MatrixReport> {
    run_matrix(setup, &build_campaign_specs(), enabled, seeds, workers)
}

pub fn all_sensors() -> BTreeSet<SensorId> {
    SensorId::ALL.into_iter().collect()
}

/// Enabled set with `removed` switched off.
pub fn ablate(removed: &[SensorId]) -> BTreeSet<SensorId> {
    SensorId::ALL
        .into_iter()
        .filter(|s| !removed.contains(s))
        .collect()
}

/// Human-readable summary block for one matrix.
pub fn summary_text(report: &MatrixReport) -> String {
    use std::fmt::Write;
    let names: Vec<&str> = report.enabled.iter().map(|s| s.name()).collect();
    let mut out = String::new();
    let fmt_lat = |s: &RateSummary| match (s.mean_latency, s.min_latency, s.max_latency) {
        (Some(m), Some(lo), Some(hi)) => format!("{m:.3} s (min {lo:.3}, max {hi:.3})"),
        _ => "n/a".to_string(),
    };
    let _ = writeln!(out, "sensors: {}", names.join(","));
    let _ = writeln!(out, "faults: {}", report.specs.len());
    for (seed, s) in &report.per_seed {
        let _ = writeln!(
            out,
            "seed {seed}: TP {:.1}% ({}/{}), FP {:.1}% ({}/{}), latency {}",
            100.0 * s.tp_rate(),
            s.true_positives,
            s.trials,
            100.0 * s.fp_rate(),
            s.with_false_positive,
            s.trials,
            fmt_lat(s)
        );
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "majority over {} seed(s): TP {:.1}% ({}/{}), FP {:.1}% ({}/{}), latency {}",
        report.seeds.len(),
        100.0 * s.tp_rate(),
        s.true_positives,
        s.trials,
        100.0 * s.fp_rate(),
        s.with_false_positive,
        s.trials,
        fmt_lat(s)
    );
    for kind in [AnomalyKind::Instant, AnomalyKind::Bias, AnomalyKind::Drift] {
        let (tp, tot) = report
            .outcomes
            .iter()
            .filter(|o| o.spec.kind == kind)
            .fold((0, 0), |(a, b), o| (a + o.detected as usize, b + 1));
        let _ = writeln!(out, "  {kind}: {tp}/{tot} trials detected");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: AnomalyKind, magnitude: f64, t_start: f64, duration: f64) -> AnomalySpec {
        AnomalySpec {
            kind,
            sensor: SensorId::Rsu,
            dimension: MeasDim::X,
            magnitude,
            t_start,
            t_end: t_start + duration,
        }
    }

    fn event(sensor: SensorId, dimension: MeasDim, onset: f64) -> DetectionEvent {
        DetectionEvent {
            sensor,
            dimension,
            onset,
            clear: None,
        }
    }

    #[test]
    fn scoring_window_and_false_positives() {
        let c = DetectorConfig::default();
        let s = spec(AnomalyKind::Bias, 1.0, 30.0, 1.0);
        // end + grace = 32.5
        let (lat, fps) = score(&s, &[event(SensorId::Rsu, MeasDim::X, 32.5)], &c);
        assert!((lat.unwrap() - 2.5).abs() < 1e-12);
        assert!(fps.is_empty());
        let (lat, _) = score(&s, &[event(SensorId::Rsu, MeasDim::X, 32.6)], &c);
        assert!(lat.is_none());
        let (lat, _) = score(&s, &[event(SensorId::Rsu, MeasDim::X, 29.9)], &c);
        assert!(lat.is_none());
        let (lat, fps) = score(
            &s,
            &[
                event(SensorId::Rsu, MeasDim::Y, 30.2),
                event(SensorId::Camera, MeasDim::X, 30.3),
                event(SensorId::Camera, MeasDim::X, 31.3),
            ],
            &c,
        );
        assert!(lat.is_none());
        assert_eq!(
            fps,
            vec![(SensorId::Camera, MeasDim::X), (SensorId::Rsu, MeasDim::Y)]
        );
    }

    #[test]
    fn trial_requires_enabled_target() {
        let setup = TrialSetup::default();
        let s = spec(AnomalyKind::Bias, 1.0, 30.0, 1.0);
        assert!(run_trial(&setup, &s, &ablate(&[SensorId::Rsu]), 1).is_err());
    }

    #[test]
    fn zero_magnitude_trial_is_clean() {
        let setup = TrialSetup::default();
        let s = spec(AnomalyKind::Bias, 0.0, 30.0, 2.5);
        let o = run_trial(&setup, &s, &all_sensors(), 4).unwrap();
        assert!(!o.detected);
        assert!(o.false_positives.is_empty());
    }

    #[test]
    fn large_long_bias_is_detected() {
        let setup = TrialSetup::default();
        let o = run_trial(
            &setup,
            &spec(AnomalyKind::Bias, 3.0, 30.0, 2.5),
            &all_sensors(),
            1,
        )
        .unwrap();
        assert!(o.detected);
    }

    #[test]
    fn small_short_bias_is_missed() {
        let setup = TrialSetup::default();
        let o = run_trial(
            &setup,
            &spec(AnomalyKind::Bias, 0.1, 30.0, 0.25),
            &all_sensors(),
            1,
        )
        .unwrap();
        assert!(!o.detected);
    }

    #[test]
    fn ablation_sets() {
        let e = ablate(&[SensorId::Radar, SensorId::Lidar]);
        assert_eq!(
            e.into_iter().collect::<Vec<_>>(),
            vec![SensorId::Camera, SensorId::Rsu]
        );
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let setup = TrialSetup::default();
        assert!(run_default_matrix(&setup, &all_sensors(), &[], 1).is_err());
    }
}
