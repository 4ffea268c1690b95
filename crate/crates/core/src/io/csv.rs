//! CSV outputs. Every file has a header row; numbers use `.` as the decimal
//! separator and the shortest representation that round-trips, so identical
//! runs produce byte-identical files.

use std::io::Write;

use crate::campaign::{MatrixReport, RunLog};
use crate::detector::DetectionEvent;
use crate::error::Result;
use crate::types::{MeasDim, SensorId, TrackState};

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Time spans derived as differences of tick times, rounded to 1 ns.
fn span(v: f64) -> String {
    num((v * 1e9).round() / 1e9)
}

fn state_fields(s: &TrackState) -> [String; 6] {
    let v = s.to_vector();
    std::array::from_fn(|i| num(v[i]))
}

const STATE_NAMES: [&str; 6] = ["x", "y", "theta", "v", "v_theta", "a"];

/// `t, sensor, dimension, r, r_hat, alpha, mask`, one row per updated
/// dimension and tick. `r_hat` is empty during warm-up; `mask` is the mask
/// applied in that tick's update (1 healthy, 0 excluded).
pub fn write_residuals<W: Write>(
    out: W,
    log: &RunLog,
    alpha: impl Fn(SensorId, usize) -> f64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "sensor", "dimension", "r", "r_hat", "alpha", "mask"])?;
    for tick in &log.ticks {
        let t = num(tick.report.t);
        for step in &tick.report.sensors {
            for (i, dim) in step.sensor.layout().iter().enumerate() {
                w.write_record([
                    t.clone(),
                    step.sensor.name().to_string(),
                    dim.name().to_string(),
                    num(step.residual[i]),
                    opt(step.r_hat.as_ref().map(|r| r[i])),
                    num(alpha(step.sensor, i)),
                    u8::from(step.mask_applied.is_healthy(i)).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, sensor, mask`: the applied mask of every updated sensor per tick as
/// a bit string in measurement layout order.
pub fn write_masks<W: Write>(out: W, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "sensor", "mask"])?;
    for tick in &log.ticks {
        for step in &tick.report.sensors {
            let bits: String = step
                .mask_applied
                .healthy
                .iter()
                .map(|h| if *h { '1' } else { '0' })
                .collect();
            w.write_record([num(tick.report.t), step.sensor.name().to_string(), bits])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Filter estimate against ground truth with the position variances.
pub fn write_track<W: Write>(out: W, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(STATE_NAMES.iter().map(|n| n.to_string()));
    header.extend(STATE_NAMES.iter().map(|n| format!("true_{n}")));
    header.extend(["p_xx".to_string(), "p_yy".to_string()]);
    w.write_record(&header)?;
    for tick in &log.ticks {
        let est = &tick.report.estimate;
        let mut row = vec![num(tick.report.t)];
        row.extend(state_fields(&est.mean));
        row.extend(state_fields(&tick.truth));
        row.push(num(est.covariance[(0, 0)]));
        row.push(num(est.covariance[(1, 1)]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground-truth trajectory sampled at every tick.
pub fn write_truth<W: Write>(out: W, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend(STATE_NAMES);
    w.write_record(&header)?;
    for tick in &log.ticks {
        let mut row = vec![num(tick.report.t)];
        row.extend(state_fields(&tick.truth));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `sensor, dimension, onset, clear`; `clear` is empty for faults still
/// open at the end of the run.
pub fn write_events<W: Write>(out: W, events: &[DetectionEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sensor", "dimension", "onset", "clear"])?;
    for e in events {
        w.write_record([
            e.sensor.name().to_string(),
            e.dimension.name().to_string(),
            num(e.onset),
            opt(e.clear),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pair_list(pairs: &[(SensorId, MeasDim)]) -> String {
    pairs
        .iter()
        .map(|(s, d)| format!("{s}.{d}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per (seed, fault): `kind, magnitude, duration, detected,
/// fp_sensors, latency_s, seed`. `fp_sensors` lists the falsely flagged
/// `sensor.dimension` pairs separated by `;`. Durations and latencies are
/// rounded to 1 ns.
pub fn write_campaign<W: Write>(out: W, report: &MatrixReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "kind",
        "magnitude",
        "duration",
        "detected",
        "fp_sensors",
        "latency_s",
        "seed",
    ])?;
    for o in &report.outcomes {
        w.write_record([
            o.spec.kind.to_string(),
            num(o.spec.magnitude),
            span(o.spec.duration()),
            o.detected.to_string(),
            pair_list(&o.false_positives),
            o.latency.map(span).unwrap_or_default(),
            o.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_with_open_fault() {
        let events = vec![
            DetectionEvent {
                sensor: SensorId::Rsu,
                dimension: MeasDim::X,
                onset: 45.5,
                clear: Some(47.25),
            },
            DetectionEvent {
                sensor: SensorId::Camera,
                dimension: MeasDim::Vx,
                onset: 50.0,
                clear: None,
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "sensor,dimension,onset,clear\nrsu,x,45.5,47.25\ncamera,v_x,50,\n"
        );
    }

    #[test]
    fn pair_list_format() {
        let p = [
            (SensorId::Camera, MeasDim::X),
            (SensorId::Lidar, MeasDim::Vy),
        ];
        assert_eq!(pair_list(&p), "camera.x;lidar.v_y");
    }
}
