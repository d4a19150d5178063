//! Deterministic sensor-failure heuristics over a parsed flight log.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::flightlog::{field_part, FlightLog, TimeSeries};
use crate::scriptgen::haversine_m;

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Accelerometer,
    Gyro,
    Magnetometer,
    Airspeed,
    Barometer,
    Battery,
    Gps,
}

impl Sensor {
    pub const ALL: [Sensor; 7] = [
        Sensor::Accelerometer,
        Sensor::Gyro,
        Sensor::Magnetometer,
        Sensor::Airspeed,
        Sensor::Barometer,
        Sensor::Battery,
        Sensor::Gps,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Sensor::Accelerometer => "Accelerometer",
            Sensor::Gyro => "Gyroscope",
            Sensor::Magnetometer => "Magnetometer",
            Sensor::Airspeed => "Air Speed",
            Sensor::Barometer => "Barometer",
            Sensor::Battery => "Battery",
            Sensor::Gps => "GPS",
        }
    }
}

impl std::str::FromStr for Sensor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '_'], "");
        Sensor::ALL
            .into_iter()
            .find(|x| {
                let name = format!("{x:?}").to_ascii_lowercase();
                name == norm || x.label().to_ascii_lowercase().replace(' ', "") == norm
            })
            .ok_or_else(|| format!("unknown sensor {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub parameter: String,
    /// Microseconds, log time.
    pub timestamp: u64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorVerdict {
    pub sensor: Sensor,
    pub failed: bool,
    pub evidence: Vec<Evidence>,
    /// Set to "no data" when the log holds nothing this detector reads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Largest plausible altitude change between consecutive baro samples (m).
    pub baro_step_m: f64,
    pub gps_min_satellites: f64,
    /// Consecutive low-satellite samples needed to flag.
    pub gps_low_sat_samples: usize,
    pub gps_jump_m: f64,
    pub battery_min_remaining: f64,
    pub accel_window: usize,
    /// m/s², rolling standard deviation of the acceleration magnitude.
    pub accel_std_max: f64,
    /// rad/s deviation of a gyro axis from its rolling median.
    pub gyro_spike_rad_s: f64,
    /// Excursions at least this long count as real rotation, not a spike.
    pub gyro_spike_max_samples: usize,
    pub mag_window: usize,
    /// rad, circular standard deviation of the heading.
    pub mag_yaw_std_max: f64,
    /// Roll and pitch (rad) below which flight counts as level.
    pub level_attitude_max_rad: f64,
    pub max_evidence: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            baro_step_m: 10.0,
            gps_min_satellites: 6.0,
            gps_low_sat_samples: 3,
            gps_jump_m: 50.0,
            battery_min_remaining: 0.15,
            accel_window: 20,
            accel_std_max: 15.0,
            gyro_spike_rad_s: 6.0,
            gyro_spike_max_samples: 5,
            mag_window: 20,
            mag_yaw_std_max: 1.5,
            level_attitude_max_rad: 0.35,
            max_evidence: 5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let positive = [
            ("baro_step_m", self.baro_step_m),
            ("gps_min_satellites", self.gps_min_satellites),
            ("gps_jump_m", self.gps_jump_m),
            ("battery_min_remaining", self.battery_min_remaining),
            ("accel_std_max", self.accel_std_max),
            ("gyro_spike_rad_s", self.gyro_spike_rad_s),
            ("mag_yaw_std_max", self.mag_yaw_std_max),
            ("level_attitude_max_rad", self.level_attitude_max_rad),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AnalyticsError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let counts = [
            ("gps_low_sat_samples", self.gps_low_sat_samples, 1),
            ("accel_window", self.accel_window, 2),
            ("gyro_spike_max_samples", self.gyro_spike_max_samples, 2),
            ("mag_window", self.mag_window, 2),
            ("max_evidence", self.max_evidence, 1),
        ];
        for (name, v, min) in counts {
            if v < min {
                return Err(AnalyticsError::InvalidConfig(format!("{name} must be at least {min}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AnalyticsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnalyticsError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| AnalyticsError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `battery_status_1` → `battery_status`.
fn topic_base(topic: &str) -> &str {
    match topic.rsplit_once('_') {
        Some((base, n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => base,
        _ => topic,
    }
}

fn topic_of(name: &str) -> &str {
    name.split_once('.').map_or("", |(t, _)| t)
}

/// Series whose field is `field`, optionally restricted to topics whose
/// name contains `topic_hint`.
fn series<'a>(log: &'a FlightLog, field: &str, topic_hint: Option<&str>) -> Vec<(&'a str, &'a TimeSeries)> {
    log.find_all(field)
        .into_iter()
        .filter(|(name, _)| topic_hint.is_none_or(|h| topic_base(topic_of(name)).contains(h)))
        .collect()
}

struct Collector<'c> {
    cfg: &'c DetectorConfig,
    evidence: Vec<Evidence>,
    saw_data: bool,
}

impl<'c> Collector<'c> {
    fn new(cfg: &'c DetectorConfig) -> Self {
        Self {
            cfg,
            evidence: Vec::new(),
            saw_data: false,
        }
    }

    fn add(&mut self, parameter: &str, timestamp: u64, description: String) {
        if self.evidence.len() < self.cfg.max_evidence {
            self.evidence.push(Evidence {
                parameter: parameter.to_string(),
                timestamp,
                description,
            });
        }
    }

    fn verdict(self, sensor: Sensor) -> SensorVerdict {
        let failed = !self.evidence.is_empty();
        SensorVerdict {
            sensor,
            failed,
            evidence: self.evidence,
            note: (!failed && !self.saw_data).then(|| "no data".to_string()),
        }
    }
}

fn messages_matching(log: &FlightLog, c: &mut Collector<'_>, all_of: &[&str]) {
    for m in &log.messages {
        let lower = m.text.to_lowercase();
        if all_of.iter().all(|w| lower.contains(w)) {
            c.add("logged message", m.timestamp, format!("message: {}", m.text));
        }
    }
}

fn barometer(log: &FlightLog, c: &mut Collector<'_>) {
    for (name, s) in series(log, "baro_alt_meter", None) {
        c.saw_data = true;
        for i in 1..s.len() {
            let d = s.values[i] - s.values[i - 1];
            if d.abs() > c.cfg.baro_step_m {
                c.add(name, s.timestamps[i], format!("altitude changed by {d:+.2} m between consecutive samples"));
            }
        }
    }
}

/// `(timestamp, lat, lon)` in degrees.
type Track = Vec<(u64, f64, f64)>;

/// Latitude/longitude pairs on matching timestamps, per GPS topic.
fn gps_positions(log: &FlightLog) -> Vec<(String, Track)> {
    let mut out = Vec::new();
    for (lat_field, lon_field) in [("latitude_deg", "longitude_deg"), ("lat", "lon")] {
        for (lat_name, lat) in series(log, lat_field, Some("gps")) {
            let lon_name = format!("{}.{lon_field}", topic_of(lat_name));
            let Some(lon) = log.series.get(&lon_name) else { continue };
            let scale = if lat.values.iter().chain(&lon.values).any(|v| v.abs() > 1000.0) { 1e-7 } else { 1.0 };
            let mut pts = Vec::new();
            let (mut i, mut j) = (0, 0);
            while i < lat.len() && j < lon.len() {
                match lat.timestamps[i].cmp(&lon.timestamps[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        pts.push((lat.timestamps[i], lat.values[i] * scale, lon.values[j] * scale));
                        i += 1;
                        j += 1;
                    }
                }
            }
            out.push((lat_name.to_string(), pts));
        }
    }
    out
}

fn gps(log: &FlightLog, c: &mut Collector<'_>) {
    for (name, s) in series(log, "satellites_used", None) {
        c.saw_data = true;
        let mut run = 0;
        for (ts, v) in s.points() {
            if v < c.cfg.gps_min_satellites {
                run += 1;
                if run == c.cfg.gps_low_sat_samples {
                    c.add(name, ts, format!("only {v} satellites used for {run} consecutive samples"));
                }
            } else {
                run = 0;
            }
        }
    }
    for (name, pts) in gps_positions(log) {
        c.saw_data = true;
        for w in pts.windows(2) {
            let (_, a_lat, a_lon) = w[0];
            let (ts, b_lat, b_lon) = w[1];
            if [a_lat, a_lon, b_lat, b_lon].iter().any(|v| v.is_nan()) {
                continue;
            }
            let d = haversine_m(a_lat, a_lon, b_lat, b_lon);
            if d > c.cfg.gps_jump_m {
                c.add(&name, ts, format!("horizontal position jumped {d:.1} m between samples"));
            }
        }
    }
}

fn battery(log: &FlightLog, c: &mut Collector<'_>) {
    for (name, s) in series(log, "remaining", Some("battery")) {
        c.saw_data = true;
        if let Some((ts, v)) = s.points().find(|(_, v)| *v < c.cfg.battery_min_remaining) {
            c.add(name, ts, format!("remaining capacity fell to {:.0}%", v * 100.0));
        }
    }
    if !log.messages.is_empty() {
        c.saw_data = true;
    }
    messages_matching(log, c, &["failsafe", "battery"]);
}

fn rolling_std_exceeds(values: &[f64], window: usize, limit: f64) -> Option<(usize, f64)> {
    if values.len() < window {
        return None;
    }
    for start in 0..=values.len() - window {
        let w = &values[start..start + window];
        if w.iter().any(|v| v.is_nan()) {
            continue;
        }
        let mean = w.iter().sum::<f64>() / window as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window as f64;
        let std = var.sqrt();
        if std > limit {
            return Some((start + window - 1, std));
        }
    }
    None
}

fn accelerometer(log: &FlightLog, c: &mut Collector<'_>) {
    for (name, s) in series(log, "accel_fault_detected", None) {
        c.saw_data = true;
        if let Some((ts, v)) = s.points().find(|(_, v)| *v > 0.0) {
            c.add(name, ts, format!("accelerometer fault flag raised ({v})"));
        }
    }
    for (x_name, x) in series(log, "x", Some("accel")) {
        let topic = topic_of(x_name);
        let (Some(y), Some(z)) = (log.series.get(&format!("{topic}.y")), log.series.get(&format!("{topic}.z"))) else {
            continue;
        };
        if x.timestamps != y.timestamps || x.timestamps != z.timestamps {
            continue;
        }
        c.saw_data = true;
        let mag: Vec<f64> = (0..x.len())
            .map(|i| (x.values[i].powi(2) + y.values[i].powi(2) + z.values[i].powi(2)).sqrt())
            .collect();
        if let Some((i, std)) = rolling_std_exceeds(&mag, c.cfg.accel_window, c.cfg.accel_std_max) {
            c.add(
                &format!("{topic}.magnitude"),
                x.timestamps[i],
                format!("acceleration magnitude std {std:.2} m/s² over {} samples", c.cfg.accel_window),
            );
        }
    }
}

fn median(w: &mut [f64]) -> f64 {
    w.sort_by(f64::total_cmp);
    let n = w.len();
    if n % 2 == 1 { w[n / 2] } else { (w[n / 2 - 1] + w[n / 2]) / 2.0 }
}

/// Short excursions: samples far from the rolling median of a window in
/// which a run shorter than `max_samples` stays a minority.
fn gyro(log: &FlightLog, c: &mut Collector<'_>) {
    let half = c.cfg.gyro_spike_max_samples - 1;
    for axis in ["x", "y", "z"] {
        for (name, s) in series(log, axis, Some("gyro")) {
            c.saw_data = true;
            let vals: Vec<f64> = s.values.clone();
            for i in 0..vals.len() {
                let v = vals[i];
                if v.is_nan() {
                    continue;
                }
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(vals.len());
                let mut w: Vec<f64> = vals[lo..hi].iter().copied().filter(|x| !x.is_nan()).collect();
                let dev = v - median(&mut w);
                if dev.abs() > c.cfg.gyro_spike_rad_s {
                    c.add(name, s.timestamps[i], format!("angular rate spike of {v:.2} rad/s"));
                }
            }
        }
    }
}

fn circular_std(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    let (s, co) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let r = ((s / n).powi(2) + (co / n).powi(2)).sqrt().clamp(1e-12, 1.0);
    (-2.0 * r.ln()).sqrt()
}

fn magnetometer(log: &FlightLog, c: &mut Collector<'_>) {
    let flags: Vec<_> = log
        .series
        .iter()
        .filter(|(name, _)| {
            let f = field_part(name).to_ascii_lowercase();
            f.contains("mag") && f.contains("fault")
        })
        .collect();
    for (name, s) in flags {
        c.saw_data = true;
        if let Some((ts, v)) = s.points().find(|(_, v)| *v > 0.0) {
            c.add(name, ts, format!("magnetometer fault flag raised ({v})"));
        }
    }
    let attitude: Vec<&TimeSeries> = ["roll", "pitch"].iter().filter_map(|f| log.find(f).map(|(_, s)| s)).collect();
    let level = |ts: u64| -> bool {
        attitude.iter().all(|s| match s.timestamps.binary_search(&ts) {
            Ok(i) => s.values[i].abs() <= c.cfg.level_attitude_max_rad,
            Err(_) => true,
        })
    };
    for field in ["heading", "yaw"] {
        for (name, s) in series(log, field, None) {
            c.saw_data = true;
            let w = c.cfg.mag_window;
            if s.len() < w {
                continue;
            }
            let flat: Vec<bool> = s.timestamps.iter().map(|&t| level(t)).collect();
            for start in 0..=s.len() - w {
                let win = &s.values[start..start + w];
                if win.iter().any(|v| v.is_nan()) || !flat[start..start + w].iter().all(|&f| f) {
                    continue;
                }
                let std = circular_std(win);
                if std > c.cfg.mag_yaw_std_max {
                    c.add(
                        name,
                        s.timestamps[start + w - 1],
                        format!("heading scatter {std:.2} rad over {w} samples in level flight"),
                    );
                    break;
                }
            }
        }
    }
}

fn airspeed(log: &FlightLog, c: &mut Collector<'_>) {
    for (name, s) in series(log, "indicated_airspeed_m_s", None) {
        c.saw_data = true;
        if let Some((ts, v)) = s.points().find(|(_, v)| v.is_nan() || *v < 0.0) {
            c.add(name, ts, format!("indicated airspeed reads {v}"));
        }
    }
    if !log.messages.is_empty() {
        c.saw_data = true;
    }
    messages_matching(log, c, &["airspeed"]);
}

/// Runs every detector; the result always lists all seven sensors in
/// [`Sensor::ALL`] order.
pub fn detect_sensor_failures(log: &FlightLog, cfg: &DetectorConfig) -> Vec<SensorVerdict> {
    Sensor::ALL
        .into_iter()
        .map(|sensor| {
            let mut c = Collector::new(cfg);
            match sensor {
                Sensor::Accelerometer => accelerometer(log, &mut c),
                Sensor::Gyro => gyro(log, &mut c),
                Sensor::Magnetometer => magnetometer(log, &mut c),
                Sensor::Airspeed => airspeed(log, &mut c),
                Sensor::Barometer => barometer(log, &mut c),
                Sensor::Battery => battery(log, &mut c),
                Sensor::Gps => gps(log, &mut c),
            }
            c.verdict(sensor)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flightlog::{LoggedMessage, SourceFormat};

    fn log_with(name: &str, values: Vec<f64>) -> FlightLog {
        let mut log = FlightLog::new(0, SourceFormat::Csv);
        let ts = (0..values.len() as u64).map(|i| i * 100_000).collect();
        log.series.insert(name.into(), TimeSeries::new(ts, values).unwrap());
        log
    }

    fn failed(v: &[SensorVerdict]) -> Vec<Sensor> {
        v.iter().filter(|v| v.failed).map(|v| v.sensor).collect()
    }

    #[test]
    fn baro_step() {
        let mut vals = vec![50.0; 20];
        vals[10..].iter_mut().for_each(|v| *v += 25.0);
        let v = detect_sensor_failures(&log_with("vehicle_air_data.baro_alt_meter", vals), &DetectorConfig::default());
        assert_eq!(failed(&v), [Sensor::Barometer]);
        let b = &v[4];
        assert_eq!(b.evidence[0].timestamp, 1_000_000);
        assert_eq!(v[0].note.as_deref(), Some("no data"));
    }

    #[test]
    fn battery_message() {
        let mut log = log_with("battery_status.remaining", vec![0.9, 0.8]);
        log.messages.push(LoggedMessage { timestamp: 5, level: 3, text: "FAILSAFE: low battery".into() });
        let v = detect_sensor_failures(&log, &DetectorConfig::default());
        assert_eq!(failed(&v), [Sensor::Battery]);
        assert!(v[5].evidence[0].description.contains("FAILSAFE: low battery"));
    }

    #[test]
    fn gyro_short_spike_only() {
        let mut spike = vec![0.1; 40];
        spike[20] = 8.0;
        spike[21] = 8.0;
        let v = detect_sensor_failures(&log_with("sensor_gyro.x", spike), &DetectorConfig::default());
        assert_eq!(failed(&v), [Sensor::Gyro]);
        let mut turn = vec![0.1; 40];
        turn[10..30].iter_mut().for_each(|v| *v = 8.0);
        let v = detect_sensor_failures(&log_with("sensor_gyro.x", turn), &DetectorConfig::default());
        assert!(failed(&v).is_empty());
    }

    #[test]
    fn low_satellites_need_consecutive_samples() {
        let v = detect_sensor_failures(&log_with("sensor_gps.satellites_used", vec![10.0, 4.0, 4.0, 10.0, 4.0]), &DetectorConfig::default());
        assert!(failed(&v).is_empty());
        let v = detect_sensor_failures(&log_with("sensor_gps.satellites_used", vec![10.0, 4.0, 4.0, 4.0]), &DetectorConfig::default());
        assert_eq!(failed(&v), [Sensor::Gps]);
    }

    #[test]
    fn airspeed_nan() {
        let v = detect_sensor_failures(&log_with("airspeed.indicated_airspeed_m_s", vec![5.0, f64::NAN]), &DetectorConfig::default());
        assert_eq!(failed(&v), [Sensor::Airspeed]);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        let bad = DetectorConfig { baro_step_m: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let cfg: DetectorConfig = serde_json::from_str(r#"{"baro_step_m": 5}"#).unwrap();
        assert_eq!(cfg.gps_jump_m, 50.0);
    }

    #[test]
    fn sensor_names_parse() {
        assert_eq!("gps".parse::<Sensor>().unwrap(), Sensor::Gps);
        assert_eq!("Air Speed".parse::<Sensor>().unwrap(), Sensor::Airspeed);
        assert_eq!("gyroscope".parse::<Sensor>().unwrap(), Sensor::Gyro);
    }
}
