//! Built-in offline data: a scripted model, a small incident corpus, a
//! parameter knowledge base and synthetic flight logs with one injected
//! sensor failure each. `--mock` runs and the test suites use these.

use std::f64::consts::PI;
use std::path::Path;

use crate::analytics::Sensor;
use crate::evaluation::RelevanceLabels;
use crate::flightlog::{FlightLog, LoggedMessage, SourceFormat, TimeSeries};
use crate::gateway::{Gateway, ScriptedResponses};
use crate::knowledge::{read_jsonl, ParameterDoc};

pub const MOCK_RESPONSES_JSON: &str = include_str!("../fixtures/mock_responses.json");
pub const PARAMS_JSONL: &str = include_str!("../fixtures/params.jsonl");
pub const LABELS_JSON: &str = include_str!("../fixtures/labels.json");

pub const CORPUS: [(&str, &str); 10] = [
    ("aviation_reports/d01", include_str!("../fixtures/corpus/aviation_reports/d01.txt")),
    ("aviation_reports/d02", include_str!("../fixtures/corpus/aviation_reports/d02.txt")),
    ("aviation_reports/d03", include_str!("../fixtures/corpus/aviation_reports/d03.txt")),
    ("aviation_reports/d04", include_str!("../fixtures/corpus/aviation_reports/d04.txt")),
    ("aviation_reports/d05", include_str!("../fixtures/corpus/aviation_reports/d05.txt")),
    ("developer_forums/d06", include_str!("../fixtures/corpus/developer_forums/d06.txt")),
    ("developer_forums/d07", include_str!("../fixtures/corpus/developer_forums/d07.txt")),
    ("developer_forums/d08", include_str!("../fixtures/corpus/developer_forums/d08.txt")),
    ("developer_forums/d09", include_str!("../fixtures/corpus/developer_forums/d09.txt")),
    ("developer_forums/d10", include_str!("../fixtures/corpus/developer_forums/d10.txt")),
];

/// Coordinates the scripted scenario uses for its home position.
pub const NYC: (f64, f64) = (40.7128, -74.0060);

pub const SAMPLE_INTERVAL_US: u64 = 100_000;
pub const SAMPLES: usize = 2000;

pub fn mock_responses() -> ScriptedResponses {
    ScriptedResponses::from_json(MOCK_RESPONSES_JSON).expect("bundled responses parse")
}

pub fn mock_gateway() -> Gateway {
    Gateway::scripted(mock_responses())
}

pub fn param_docs() -> Vec<ParameterDoc> {
    read_jsonl(PARAMS_JSONL).expect("bundled parameter docs parse")
}

pub fn labels() -> RelevanceLabels {
    RelevanceLabels::from_json(LABELS_JSON).expect("bundled labels parse")
}

/// Writes the incident corpus in the `<source>/<id>.txt` layout.
pub fn write_corpus(dir: &Path) -> std::io::Result<()> {
    for (id, text) in CORPUS {
        let path = dir.join(format!("{id}.txt"));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// Small, deterministic wobble in [-1, 1].
fn wobble(i: usize, a: f64, b: f64) -> f64 {
    let x = i as f64;
    0.6 * (a * x).sin() + 0.4 * (b * x + 1.3).cos()
}

/// Altitude above home for the out-and-back profile (m).
fn altitude(t: f64) -> f64 {
    if t < 20.0 {
        2.5 * t
    } else if t < 180.0 {
        50.0
    } else {
        (50.0 - 2.5 * (t - 180.0)).max(0.0)
    }
}

/// Eastward ground speed (m/s): out until 100 s, back after 102 s.
fn east_speed(t: f64) -> f64 {
    if (20.0..100.0).contains(&t) {
        5.0
    } else if (102.0..182.0).contains(&t) {
        -5.0
    } else {
        0.0
    }
}

fn heading(t: f64) -> f64 {
    if t < 100.0 {
        PI / 2.0
    } else if t < 102.0 {
        PI / 2.0 - PI * (t - 100.0) / 2.0
    } else {
        -PI / 2.0
    }
}

struct Builder {
    ts: Vec<u64>,
    log: FlightLog,
}

impl Builder {
    fn put(&mut self, name: &str, values: Vec<f64>) {
        let s = TimeSeries::new(self.ts.clone(), values).expect("fixture series are well formed");
        self.log.series.insert(name.to_string(), s);
    }

    fn message(&mut self, t_s: f64, level: u8, text: &str) {
        self.log.messages.push(LoggedMessage {
            timestamp: (t_s * 1e6) as u64,
            level,
            text: text.to_string(),
        });
    }
}

/// A 200 s, 10 Hz out-and-back flight over lower Manhattan. With `failure`
/// set, exactly that sensor misbehaves:
///
/// | sensor | injection |
/// |---|---|
/// | barometer | +25 m altitude step from 150 s |
/// | gps | 4 satellites and ~110 m position jumps between 100 and 110 s |
/// | battery | capacity falls to 10% by 160 s, then "FAILSAFE: low battery" |
/// | accelerometer | fault flag and ±25 m/s² vibration between 120 and 130 s |
/// | gyro | two-sample 8 rad/s spikes at 60, 90 and 140 s |
/// | magnetometer | fault flag at 70 s, then flag and scattered heading between 130 and 140 s |
/// | airspeed | "airspeed off" warning and negative readings from 95 s |
pub fn synthetic_log(failure: Option<Sensor>) -> FlightLog {
    let ts: Vec<u64> = (0..SAMPLES as u64).map(|i| i * SAMPLE_INTERVAL_US).collect();
    let t: Vec<f64> = ts.iter().map(|&u| u as f64 / 1e6).collect();
    let mut b = Builder {
        ts,
        log: FlightLog::new(0, SourceFormat::Ulog),
    };
    b.log.info.insert("sys_name".into(), "PX4".into());
    b.log.info.insert("ver_hw".into(), "SITL".into());
    let is = |s: Sensor| failure == Some(s);
    let within = |x: f64, lo: f64, hi: f64| x >= lo && x < hi;
    let n = SAMPLES;

    let alt: Vec<f64> = t.iter().map(|&x| altitude(x)).collect();
    let mut baro: Vec<f64> = (0..n).map(|i| 10.0 + alt[i] + 0.05 * wobble(i, 0.37, 0.11)).collect();
    if is(Sensor::Barometer) {
        for (v, &x) in baro.iter_mut().zip(&t) {
            if x >= 150.0 {
                *v += 25.0;
            }
        }
    }
    b.put("vehicle_air_data.baro_temp_celcius", alt.iter().map(|a| 20.0 - 0.0065 * a).collect());
    b.put(
        "vehicle_air_data.baro_pressure_pa",
        baro.iter().map(|h| 101_325.0 * (1.0 - 2.25577e-5 * h).powf(5.25588)).collect(),
    );
    b.put("vehicle_air_data.baro_alt_meter", baro);

    let (lat0, lon0) = NYC;
    let m_per_deg_lon = 111_320.0 * lat0.to_radians().cos();
    let mut east = 0.0;
    let mut lat = Vec::with_capacity(n);
    let mut lon = Vec::with_capacity(n);
    let mut sats = Vec::with_capacity(n);
    for (i, &ti) in t.iter().enumerate() {
        east += east_speed(ti) * 0.1;
        let mut la = lat0 + 2e-6 * wobble(i, 0.05, 0.021);
        let lo = lon0 + east / m_per_deg_lon;
        let mut s = 12.0 + (wobble(i, 0.013, 0.007) * 1.5).round();
        if is(Sensor::Gps) && within(ti, 100.0, 110.0) {
            s = 4.0;
            if (i / 10) % 2 == 1 {
                la += 0.001;
            }
        }
        lat.push(la);
        lon.push(lo);
        sats.push(s);
    }
    b.put("sensor_gps.latitude_deg", lat);
    b.put("sensor_gps.longitude_deg", lon);
    b.put("sensor_gps.altitude_msl_m", alt.iter().map(|a| 10.0 + a).collect());
    b.put(
        "sensor_gps.eph",
        sats.iter().map(|s| if *s < 6.0 { 8.0 } else { 0.8 }).collect(),
    );
    b.put("sensor_gps.satellites_used", sats);

    let mut remaining: Vec<f64> = t.iter().map(|x| 1.0 - 0.3 * x / 200.0).collect();
    if is(Sensor::Battery) {
        for (r, &x) in remaining.iter_mut().zip(&t) {
            if x >= 120.0 {
                *r = (0.82 - 0.018 * (x - 120.0)).max(0.10);
            }
        }
        b.message(160.0, 3, "FAILSAFE: low battery, returning to land");
    }
    b.put("battery_status.voltage_v", remaining.iter().map(|r| 12.6 + 4.2 * r).collect());
    b.put("battery_status.current_a", (0..n).map(|i| 12.0 + wobble(i, 0.09, 0.3)).collect());
    b.put("battery_status.remaining", remaining);

    let vib = |i: usize| if i.is_multiple_of(2) { 25.0 } else { -25.0 };
    let accel_bad = |x: f64| is(Sensor::Accelerometer) && within(x, 120.0, 130.0);
    b.put(
        "sensor_accel.x",
        (0..n).map(|i| 0.2 * wobble(i, 0.7, 0.23) + if accel_bad(t[i]) { vib(i) } else { 0.0 }).collect(),
    );
    b.put(
        "sensor_accel.y",
        (0..n).map(|i| 0.2 * wobble(i, 0.5, 0.31) - if accel_bad(t[i]) { vib(i) } else { 0.0 }).collect(),
    );
    b.put("sensor_accel.z", (0..n).map(|i| -9.81 + 0.1 * wobble(i, 3.0, 0.17)).collect());
    for axis in 0..3 {
        b.put(
            &format!("estimator_sensor_bias.accel_bias[{axis}]"),
            (0..n)
                .map(|i| {
                    let base = 0.01 * (axis as f64 + 1.0) + 0.001 * wobble(i, 0.01, 0.003);
                    if axis == 0 && accel_bad(t[i]) { base + 0.5 * wobble(i, 1.1, 0.7) } else { base }
                })
                .collect(),
        );
    }
    b.put(
        "estimator_status.accel_fault_detected",
        t.iter().map(|&x| if accel_bad(x) { 1.0 } else { 0.0 }).collect(),
    );
    let mag_fault = |x: f64| is(Sensor::Magnetometer) && (within(x, 70.0, 71.0) || within(x, 130.0, 140.0));
    b.put(
        "estimator_status.mag_fault_detected",
        t.iter().map(|&x| if mag_fault(x) { 1.0 } else { 0.0 }).collect(),
    );

    let turn = |x: f64| if within(x, 100.0, 102.0) { -PI / 2.0 } else { 0.0 };
    let spike = |i: usize| {
        is(Sensor::Gyro) && [600usize, 900, 1400].iter().any(|&s| i == s || i == s + 1)
    };
    b.put(
        "sensor_gyro.x",
        (0..n).map(|i| 0.02 * wobble(i, 0.9, 0.4) + if spike(i) { 8.0 } else { 0.0 }).collect(),
    );
    b.put("sensor_gyro.y", (0..n).map(|i| 0.02 * wobble(i, 0.8, 0.45)).collect());
    b.put("sensor_gyro.z", (0..n).map(|i| turn(t[i]) + 0.01 * wobble(i, 0.6, 0.2)).collect());
    b.put("trajectory_setpoint.yawspeed", t.iter().map(|&x| turn(x)).collect());

    let mut hdg: Vec<f64> = t.iter().map(|&x| heading(x)).collect();
    if is(Sensor::Magnetometer) {
        for (i, h) in hdg.iter_mut().enumerate() {
            if within(t[i], 130.0, 140.0) {
                let v = *h + 2.5 * (i as f64 * 2.3).sin();
                *h = (v + PI).rem_euclid(2.0 * PI) - PI;
            }
        }
    }
    b.put("sensor_mag.x", hdg.iter().map(|h| 0.2 * h.cos()).collect());
    b.put("sensor_mag.y", hdg.iter().map(|h| -0.2 * h.sin()).collect());
    b.put("vehicle_local_position.heading", hdg);

    let mut ias: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(i, &x)| east_speed(x).abs() + 0.2 + 0.1 * wobble(i, 0.27, 0.05))
        .collect();
    if is(Sensor::Airspeed) {
        for (v, &x) in ias.iter_mut().zip(&t) {
            if x >= 95.0 {
                *v = -1.5 + 0.1 * (x * 3.0).sin();
            }
        }
        b.message(95.0, 4, "Airspeed sensor failure detected: airspeed off");
    }
    b.put("airspeed.true_airspeed_m_s", ias.iter().map(|v| v * 1.02).collect());
    b.put("airspeed.indicated_airspeed_m_s", ias);

    let flying = |x: f64| within(x, 0.5, 199.0);
    b.put(
        "vehicle_land_detected.has_low_throttle",
        t.iter().map(|&x| if flying(x) { 0.0 } else { 1.0 }).collect(),
    );
    b.put(
        "vehicle_status.failsafe",
        t.iter().map(|&x| if is(Sensor::Battery) && x >= 160.0 { 1.0 } else { 0.0 }).collect(),
    );

    b.message(0.5, 6, "Takeoff detected");
    b.message(20.0, 6, "Executing mission");
    b.message(199.0, 6, "Landing detected");
    b.log.messages.sort_by_key(|m| m.timestamp);
    b.log
}
