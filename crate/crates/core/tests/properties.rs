use approx::assert_abs_diff_eq;
use nalgebra::{DVector, Matrix6};
use proptest::prelude::*;

use i2v_detect::campaign::{ablate, all_sensors, run_trial, simulate, TrialSetup};
use i2v_detect::detector::{predict, update, Detector};
use i2v_detect::injector::{tick_window, Injector};
use i2v_detect::measurement::{measurement_jacobian, observe};
use i2v_detect::motion::{jacobian, predict_state};
use i2v_detect::sim::{sample_sensors, NoiseSource, Scenario};
use i2v_detect::{
    AnomalyKind, AnomalySpec, DetectorConfig, FaultMask, MeasDim, Measurement, NoiseSpec, SensorId,
    StateEstimate, TrackState,
};

fn state() -> impl Strategy<Value = TrackState> {
    (
        -60.0..60.0f64,
        -60.0..60.0f64,
        -3.2..3.2f64,
        0.0..6.0f64,
        -1.5..1.5f64,
        -3.0..3.0f64,
    )
        .prop_map(|(x, y, t, v, w, a)| TrackState::new(x, y, t, v, w, a))
}

fn covariance() -> impl Strategy<Value = Matrix6<f64>> {
    prop::collection::vec(-0.6..0.6f64, 36).prop_map(|v| {
        let l = Matrix6::from_column_slice(&v);
        l * l.transpose() + Matrix6::identity() * 1e-3
    })
}

fn sensor() -> impl Strategy<Value = SensorId> {
    prop::sample::select(SensorId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn motion_jacobian_matches_differences(s in state(), dt in 0.005..0.2f64) {
        let a = jacobian(&s, dt);
        let x = s.to_vector();
        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let col = (predict_state(&TrackState::from_vector(&xp), dt).to_vector()
                - predict_state(&TrackState::from_vector(&xm), dt).to_vector())
                / (2.0 * h);
            for i in 0..6 {
                let tol = (1e-4 * a[(i, j)].abs()).max(1e-6);
                prop_assert!((a[(i, j)] - col[i]).abs() <= tol, "A[{i},{j}] {} vs {}", a[(i, j)], col[i]);
            }
        }
    }

    #[test]
    fn measurement_jacobian_matches_differences(s in state(), sensor in sensor()) {
        let hm = measurement_jacobian(&s, sensor);
        let x = s.to_vector();
        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let col = (observe(&TrackState::from_vector(&xp), sensor)
                - observe(&TrackState::from_vector(&xm), sensor))
                / (2.0 * h);
            for i in 0..sensor.dim() {
                let tol = (1e-4 * hm[(i, j)].abs()).max(1e-6);
                prop_assert!((hm[(i, j)] - col[i]).abs() <= tol);
            }
        }
    }

    #[test]
    fn masked_dimension_cannot_move_the_posterior(
        truth in state(),
        prior in state(),
        p in covariance(),
        sensor in sensor(),
        bits in prop::collection::vec(any::<bool>(), 6),
        forced in 0usize..6,
        junk in prop::collection::vec(-1e9..1e9f64, 6),
    ) {
        let d = sensor.dim();
        let mut healthy = bits[..d].to_vec();
        healthy[forced % d] = false;
        let mask = FaultMask::from_bits(sensor, healthy.clone()).unwrap();
        let est = StateEstimate::new(prior, p, 0.0);
        let clean = observe(&truth, sensor);
        let mut bad = clean.clone();
        for i in 0..d {
            if !healthy[i] {
                bad[i] = junk[i];
            }
        }
        let config = DetectorConfig::default();
        let a = update(&est, &Measurement::new(sensor, 0.0, clean).unwrap(), &mask, &config).unwrap();
        let b = update(&est, &Measurement::new(sensor, 0.0, bad).unwrap(), &mask, &config).unwrap();
        for (u, v) in a.estimate.mean.to_vector().iter().zip(b.estimate.mean.to_vector().iter()) {
            prop_assert_eq!(u.to_bits(), v.to_bits());
        }
        for (i, h) in healthy.iter().enumerate() {
            if !h {
                prop_assert!(a.gain.column(i).iter().all(|g| *g == 0.0));
            }
        }
    }

    #[test]
    fn covariance_stays_healthy(
        prior in state(),
        p in covariance(),
        truth in state(),
        sensor in sensor(),
        dt in 0.01..0.1f64,
    ) {
        let config = DetectorConfig::default();
        let est = predict(&StateEstimate::new(prior, p, 0.0), &config, dt);
        prop_assert!(est.covariance_is_healthy());
        let meas = Measurement::new(sensor, dt, observe(&truth, sensor)).unwrap();
        let up = update(&est, &meas, &FaultMask::healthy(sensor), &config).unwrap();
        prop_assert!(up.estimate.covariance_is_healthy());
        // an update never inflates the marginal variances
        for i in 0..6 {
            prop_assert!(up.estimate.covariance[(i, i)] <= est.covariance[(i, i)] + 1e-12);
        }
    }

    #[test]
    fn injection_is_identity_outside_window(
        kind in prop::sample::select(vec![AnomalyKind::Instant, AnomalyKind::Bias, AnomalyKind::Drift]),
        sensor in sensor(),
        dim_pick in 0usize..6,
        magnitude in 0.0..20.0f64,
        k_start in 1i64..200,
        ticks in 1i64..80,
        values in prop::collection::vec(-100.0..100.0f64, 6),
    ) {
        let dt = 0.05;
        let dimension = sensor.layout()[dim_pick % sensor.dim()];
        let ticks = if kind == AnomalyKind::Instant { 1 } else { ticks };
        let spec = AnomalySpec {
            kind,
            sensor,
            dimension,
            magnitude,
            t_start: k_start as f64 * dt,
            t_end: (k_start + ticks) as f64 * dt,
        };
        let (ks, ke) = tick_window(&spec, dt);
        prop_assert_eq!((ks, ke), (k_start, k_start + ticks));
        let clean = Measurement::new(sensor, 0.0, DVector::from_column_slice(&values[..sensor.dim()])).unwrap();
        let mut inj = Injector::new(spec, dt);
        let i = sensor.index_of(dimension).unwrap();
        let mut last_offset = 0.0;
        for k in 0..ke + 5 {
            let h = inj.apply(&clean, k).unwrap();
            if k < ks || k >= ke {
                prop_assert_eq!(&h, &clean);
            } else {
                let offset = h.values[i] - clean.values[i];
                match kind {
                    AnomalyKind::Bias => prop_assert!((offset - magnitude).abs() < 1e-12),
                    AnomalyKind::Drift => prop_assert!(offset >= last_offset - 1e-12),
                    AnomalyKind::Instant => {}
                }
                last_offset = offset;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_same_run(seed in any::<u64>()) {
        let mut scenario = Scenario { duration: 20.0, seed, ..Scenario::default_crossing() };
        for s in SensorId::ALL {
            if let Some(w) = scenario.visibility[s].as_mut() {
                w.1 = 20.0;
            }
        }
        let spec = AnomalySpec {
            kind: AnomalyKind::Drift,
            sensor: SensorId::Rsu,
            dimension: MeasDim::Y,
            magnitude: 1.0,
            t_start: 10.0,
            t_end: 12.5,
        };
        let noise = NoiseSpec::reference();
        let config = DetectorConfig::default();
        let a = simulate(&scenario, &noise, &config, Some(&spec), &all_sensors()).unwrap();
        let b = simulate(&scenario, &noise, &config, Some(&spec), &all_sensors()).unwrap();
        prop_assert_eq!(&a.events, &b.events);
        for (x, y) in a.ticks.iter().zip(&b.ticks) {
            prop_assert_eq!(&x.report.estimate, &y.report.estimate);
        }
    }

    #[test]
    fn bias_detection_is_monotone_in_magnitude(seed in 0u64..1000, lo in 0.05..3.0f64, step in 0.0..2.0f64) {
        let setup = TrialSetup::default();
        let spec = |m: f64| AnomalySpec {
            kind: AnomalyKind::Bias,
            sensor: SensorId::Rsu,
            dimension: MeasDim::X,
            magnitude: m,
            t_start: 30.0,
            t_end: 33.0,
        };
        let small = run_trial(&setup, &spec(lo), &all_sensors(), seed).unwrap();
        let large = run_trial(&setup, &spec(lo + step), &all_sensors(), seed).unwrap();
        prop_assert!(!small.detected || large.detected, "{lo} detected but {} not", lo + step);
    }
}

#[test]
fn detector_recovers_after_bias() {
    let setup = TrialSetup::default();
    let spec = AnomalySpec {
        kind: AnomalyKind::Bias,
        sensor: SensorId::Rsu,
        dimension: MeasDim::X,
        magnitude: 1.28,
        t_start: 30.0,
        t_end: 35.0,
    };
    for seed in [1, 2, 3] {
        let scenario = Scenario {
            seed,
            ..setup.scenario.clone()
        };
        let log = simulate(
            &scenario,
            &setup.noise,
            &setup.config,
            Some(&spec),
            &all_sensors(),
        )
        .unwrap();
        let ev: Vec<_> = log
            .events
            .iter()
            .filter(|e| e.sensor == SensorId::Rsu)
            .collect();
        assert!(!ev.is_empty());
        for e in &ev {
            let clear = e.clear.expect("fault should clear after the bias ends");
            assert!(
                clear > spec.t_end && clear <= spec.t_end + 2.0 * 30.0 * 0.05,
                "clear at {clear}"
            );
        }
        // masks are all healthy again at the end of the run
        let last = log.ticks.last().unwrap();
        assert!(last
            .report
            .sensors
            .iter()
            .all(|s| s.mask_applied.all_healthy()));
    }
}

#[test]
fn update_order_changes_the_estimate_only_slightly() {
    let scenario = Scenario {
        seed: 5,
        ..Scenario::default_crossing()
    };
    let noise = NoiseSpec::reference();
    let config = DetectorConfig::default();
    let mut rng = NoiseSource::new(scenario.seed);
    let mut forward = Detector::new(config.clone());
    let mut reverse = Detector::new(config.clone());
    let mut order = SensorId::ALL.to_vec();
    order.reverse();
    let mut max_dx = 0.0f64;
    let mut differs = false;
    for k in 0..1201 {
        let t = k as f64 * config.dt;
        let meas = sample_sensors(&scenario, t, &noise, &mut rng).unwrap();
        let a = forward.step(t, &meas);
        let b = reverse.step_ordered(t, &meas, &order);
        assert!(a.estimate.covariance_is_healthy() && b.estimate.covariance_is_healthy());
        if k > 200 {
            max_dx = max_dx.max((a.estimate.mean.x - b.estimate.mean.x).abs());
            max_dx = max_dx.max((a.estimate.mean.y - b.estimate.mean.y).abs());
        }
        differs |= a.estimate.mean != b.estimate.mean;
    }
    assert!(
        differs,
        "sequential updates are expected to depend on order"
    );
    assert!(max_dx < 0.05, "position gap {max_dx}");
    assert!(forward.events().is_empty() && reverse.events().is_empty());
}

#[test]
fn noise_streams_are_uncorrelated() {
    let mut src = NoiseSource::new(42);
    let n = 20_000;
    let samples: Vec<Vec<f64>> = SensorId::ALL
        .iter()
        .map(|s| (0..n).map(|_| src.standard_normal(*s)).collect())
        .collect();
    for a in 0..4 {
        for b in a + 1..4 {
            let corr = samples[a]
                .iter()
                .zip(&samples[b])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / n as f64;
            assert!(corr.abs() < 0.05, "{a} vs {b}: {corr}");
        }
        let mean = samples[a].iter().sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 0.03);
    }
}

#[test]
fn disabling_a_sensor_leaves_other_streams_alone() {
    let scenario = Scenario {
        seed: 9,
        ..Scenario::default_crossing()
    };
    let noise = NoiseSpec::reference();
    let mut full = NoiseSource::new(9);
    let mut other = NoiseSource::new(9);
    for k in 0..200 {
        let t = k as f64 * 0.05;
        let a = sample_sensors(&scenario, t, &noise, &mut full).unwrap();
        // draw extra radar samples on one side only
        let _ = other.standard_normal(SensorId::Radar);
        let b = sample_sensors(&scenario, t, &noise, &mut other).unwrap();
        assert_eq!(a[3], b[3]);
    }
    let enabled = ablate(&[SensorId::Radar, SensorId::Lidar]);
    assert_eq!(enabled.len(), 2);
}
