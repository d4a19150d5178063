use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const CMD_TAKEOFF: u32 = 22;

/// One QGroundControl-style mission item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionItem {
    #[serde(rename = "AMSLAltAboveTerrain", default)]
    pub amsl_alt_above_terrain: Option<f64>,
    /// Metres.
    #[serde(rename = "Altitude")]
    pub altitude: f64,
    #[serde(rename = "AltitudeMode")]
    pub altitude_mode: i64,
    #[serde(rename = "autoContinue")]
    pub auto_continue: bool,
    /// MAVLink command id.
    pub command: u32,
    pub frame: u32,
    /// MAVLink params 1-7; 5 and 6 carry latitude and longitude.
    pub params: Vec<Option<f64>>,
    #[serde(rename = "type")]
    pub item_type: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl MissionItem {
    pub fn lat_lon(&self) -> Option<(f64, f64)> {
        match (self.params.get(4).copied().flatten(), self.params.get(5).copied().flatten()) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    /// m/s.
    #[serde(rename = "cruiseSpeed")]
    pub cruise_speed: f64,
    /// m/s.
    #[serde(rename = "hoverSpeed")]
    pub hover_speed: f64,
    pub items: Vec<MissionItem>,
    /// Latitude, longitude (degrees) and altitude (m).
    #[serde(rename = "plannedHomePosition")]
    pub planned_home_position: [f64; 3],
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl MissionPlan {
    /// Accepts `{"mission": {...}}` (optionally inside a `.plan` file wrapper)
    /// or a bare mission object.
    pub fn from_document(doc: &Value) -> Result<Self, String> {
        let mission = doc.get("mission").unwrap_or(doc);
        serde_json::from_value(mission.clone()).map_err(|e| format!("mission does not match the plan shape: {e}"))
    }

    /// The file form: a `.plan` wrapper around the mission object.
    pub fn to_document(&self) -> Value {
        json!({
            "fileType": "Plan",
            "version": 1,
            "mission": serde_json::to_value(self).expect("plan serializes"),
        })
    }

    pub fn geolocations(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.items.iter().filter_map(MissionItem::lat_lon)
    }
}

/// Puts a bare mission object under a `mission` key so rule paths apply.
pub fn normalize_mission_document(v: Value) -> Value {
    if v.get("mission").is_some() {
        v
    } else if v.get("items").is_some() || v.get("cruiseSpeed").is_some() {
        json!({ "mission": v })
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weather {
    #[serde(rename = "RainIntensity")]
    pub rain_intensity: f64,
    #[serde(rename = "WindSpeed")]
    pub wind_speed: f64,
    #[serde(rename = "WindDirection")]
    pub wind_direction: f64,
    #[serde(rename = "Visibility")]
    pub visibility: f64,
    #[serde(rename = "LightIntensity", default, skip_serializing_if = "Option::is_none")]
    pub light_intensity: Option<f64>,
    /// Unit of `WindSpeed` when not m/s.
    #[serde(rename = "WindSpeedUnit", default, skip_serializing_if = "Option::is_none")]
    pub wind_speed_unit: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorSection {
    #[serde(rename = "Weather")]
    pub weather: Weather,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "Roll")]
    pub roll: f64,
    #[serde(rename = "Pitch")]
    pub pitch: f64,
    #[serde(rename = "Yaw")]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomeLocation {
    #[serde(rename = "Latitude")]
    pub latitude: f64,
    #[serde(rename = "Longitude")]
    pub longitude: f64,
    #[serde(rename = "Altitude")]
    pub altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    #[serde(rename = "VehicleType")]
    pub vehicle_type: String,
    #[serde(rename = "Pose")]
    pub pose: Pose,
    #[serde(rename = "HomeLocation")]
    pub home_location: HomeLocation,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// AirSim-style simulator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    #[serde(rename = "SimulatorSettings")]
    pub simulator: SimulatorSection,
    #[serde(rename = "Vehicles")]
    pub vehicles: BTreeMap<String, Vehicle>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl SimSettings {
    pub fn from_document(doc: &Value) -> Result<Self, String> {
        serde_json::from_value(doc.clone()).map_err(|e| format!("settings do not match the simulator shape: {e}"))
    }

    pub fn to_document(&self) -> Value {
        serde_json::to_value(self).expect("settings serialize")
    }

    /// Wind speed in m/s, honouring `WindSpeedUnit`.
    pub fn wind_speed_mps(&self) -> Option<f64> {
        let m = crate::scenario::Magnitude {
            value: self.simulator.weather.wind_speed,
            unit: self.simulator.weather.wind_speed_unit.clone().unwrap_or_default(),
        };
        m.speed_mps()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{ENV_SAMPLE, MISSION_SAMPLE};

    #[test]
    fn mission_sample_round_trips_keys() {
        let doc: Value = serde_json::from_str(MISSION_SAMPLE).unwrap();
        let plan = MissionPlan::from_document(&doc).unwrap();
        assert_eq!(plan.items[0].command, CMD_TAKEOFF);
        assert_eq!(plan.items[0].lat_lon(), Some((47.39803986, 8.54557254)));
        let out = plan.to_document();
        let keys: Vec<_> = out["mission"].as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["cruiseSpeed", "hoverSpeed", "items", "plannedHomePosition"]);
        let item_keys: Vec<_> = out["mission"]["items"][0].as_object().unwrap().keys().cloned().collect();
        assert_eq!(item_keys, ["AMSLAltAboveTerrain", "Altitude", "AltitudeMode", "autoContinue", "command", "frame", "params", "type"]);
    }

    #[test]
    fn env_sample_round_trips() {
        let doc: Value = serde_json::from_str(ENV_SAMPLE).unwrap();
        let s = SimSettings::from_document(&doc).unwrap();
        assert_eq!(s.simulator.weather.wind_speed, 5.0);
        assert_eq!(s.vehicles["Drone_1"].home_location.latitude, 47.641468);
        assert_eq!(SimSettings::from_document(&s.to_document()).unwrap(), s);
        assert_eq!(s.to_document()["Vehicles"]["Drone_1"]["VehicleType"], "Quadrotor");
    }

    #[test]
    fn bare_mission_gets_wrapped() {
        let v = normalize_mission_document(json!({"items": []}));
        assert!(v.get("mission").is_some());
    }
}
