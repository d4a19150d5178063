//! Script fixtures with one injected rule violation each, and boundary
//! documents that sit exactly on a limit.

use serde_json::{json, Value};

pub struct Case {
    pub name: &'static str,
    pub expect: &'static str,
    pub doc: Value,
}

pub fn base_plan() -> Value {
    let item = |command: i64, lat: f64, lon: f64, alt: f64| {
        json!({
            "AMSLAltAboveTerrain": null,
            "Altitude": alt,
            "AltitudeMode": 1,
            "autoContinue": true,
            "command": command,
            "frame": 3,
            "params": [if command == 22 { 15 } else { 0 }, 0, 0, null, lat, lon, alt],
            "type": "SimpleItem"
        })
    };
    json!({
        "fileType": "Plan",
        "version": 1,
        "mission": {
            "cruiseSpeed": 10,
            "hoverSpeed": 5,
            "items": [
                item(22, 40.7128, -74.006, 60.0),
                item(16, 40.715, -74.009, 60.0),
                item(16, 40.7185, -74.012, 60.0),
                item(16, 40.716, -74.015, 60.0),
                item(16, 40.712, -74.011, 60.0),
                item(21, 40.7128, -74.006, 0.0)
            ],
            "plannedHomePosition": [40.7128, -74.006, 10]
        }
    })
}

pub fn base_settings() -> Value {
    json!({
        "SimulatorSettings": {
            "Weather": {
                "RainIntensity": 0.2,
                "WindSpeed": 15,
                "WindDirection": 270,
                "Visibility": 0.9,
                "LightIntensity": 6
            }
        },
        "Vehicles": {
            "Drone_1": {
                "VehicleType": "Quadrotor",
                "Pose": {"X": 0, "Y": 0, "Z": 0, "Roll": 0, "Pitch": 0, "Yaw": 0},
                "HomeLocation": {"Latitude": 40.7128, "Longitude": -74.006, "Altitude": 10}
            }
        }
    })
}

fn with(base: Value, f: impl FnOnce(&mut Value)) -> Value {
    let mut v = base;
    f(&mut v);
    v
}

fn obj(v: &mut Value) -> &mut serde_json::Map<String, Value> {
    v.as_object_mut().unwrap()
}

pub fn mission_cases() -> Vec<Case> {
    let m = |name, expect, f: fn(&mut Value)| Case {
        name,
        expect,
        doc: with(base_plan(), |v| f(&mut v["mission"])),
    };
    vec![
        m("waypoint altitude 121.93 m", "altitude_max", |m| m["items"][1]["Altitude"] = json!(121.93)),
        m("takeoff altitude 150 m", "altitude_max", |m| m["items"][0]["Altitude"] = json!(150)),
        m("cruise speed 13.42 m/s", "velocity_range", |m| m["cruiseSpeed"] = json!(13.42)),
        m("hover speed 13.42 m/s", "velocity_range", |m| m["hoverSpeed"] = json!(13.42)),
        m("negative cruise speed", "velocity_range", |m| m["cruiseSpeed"] = json!(-0.5)),
        m("cruise 31 mph", "velocity_range", |m| {
            m["speedUnit"] = json!("mph");
            m["cruiseSpeed"] = json!(31);
        }),
        m("speed unit not a speed", "velocity_range", |m| m["speedUnit"] = json!("ft")),
        m("home latitude 91", "lat_lon_valid", |m| m["plannedHomePosition"][0] = json!(91)),
        m("home longitude -181", "lat_lon_valid", |m| m["plannedHomePosition"][1] = json!(-181)),
        m("land latitude 91", "lat_lon_valid", |m| m["items"][5]["params"][4] = json!(91)),
        m("land longitude 200", "lat_lon_valid", |m| m["items"][5]["params"][5] = json!(200)),
        m("missing autoContinue", "format_validity", |m| {
            obj(&mut m["items"][2]).remove("autoContinue");
        }),
        m("missing item type", "format_validity", |m| {
            obj(&mut m["items"][3]).remove("type");
        }),
        m("params of length 6", "format_validity", |m| {
            m["items"][1]["params"].as_array_mut().unwrap().pop();
        }),
        m("home position of length 2", "format_validity", |m| {
            m["plannedHomePosition"].as_array_mut().unwrap().pop();
        }),
        m("empty item list", "format_validity", |m| m["items"] = json!([])),
        m("command as string", "format_validity", |m| m["items"][4]["command"] = json!("16")),
        m("fractional altitude mode", "format_validity", |m| m["items"][2]["AltitudeMode"] = json!(1.5)),
        m("hover speed boolean", "format_validity", |m| m["hoverSpeed"] = json!(true)),
        m("cruise speed string", "format_validity", |m| m["cruiseSpeed"] = json!("10")),
        m("first item not a takeoff", "takeoff_first", |m| m["items"][0]["command"] = json!(16)),
        m("waypoint altitude 0", "valid_waypoints", |m| m["items"][2]["Altitude"] = json!(0)),
        m("waypoint without latitude", "valid_waypoints", |m| m["items"][3]["params"][4] = Value::Null),
        m("15 km leg", "valid_waypoints", |m| {
            m["items"][3]["params"][4] = json!(40.85);
            m["items"][4]["params"][4] = json!(40.85);
        }),
    ]
}

pub fn settings_cases() -> Vec<Case> {
    let s = |name, expect, f: fn(&mut Value)| Case {
        name,
        expect,
        doc: with(base_settings(), f),
    };
    vec![
        s("wind 22.36 m/s", "wind_range", |v| v["SimulatorSettings"]["Weather"]["WindSpeed"] = json!(22.36)),
        s("negative wind", "wind_range", |v| v["SimulatorSettings"]["Weather"]["WindSpeed"] = json!(-1)),
        s("wind 51 mph", "wind_range", |v| {
            v["SimulatorSettings"]["Weather"]["WindSpeedUnit"] = json!("mph");
            v["SimulatorSettings"]["Weather"]["WindSpeed"] = json!(51);
        }),
        s("light 0.0", "light_range", |v| v["SimulatorSettings"]["Weather"]["LightIntensity"] = json!(0.0)),
        s("light 10", "light_range", |v| v["SimulatorSettings"]["Weather"]["LightIntensity"] = json!(10)),
        s("rain 1.5", "rain_range", |v| v["SimulatorSettings"]["Weather"]["RainIntensity"] = json!(1.5)),
        s("negative rain", "rain_range", |v| v["SimulatorSettings"]["Weather"]["RainIntensity"] = json!(-0.1)),
        s("visibility 1.2", "visibility_range", |v| v["SimulatorSettings"]["Weather"]["Visibility"] = json!(1.2)),
        s("wind direction 360", "wind_direction_range", |v| {
            v["SimulatorSettings"]["Weather"]["WindDirection"] = json!(360)
        }),
        s("wind direction -10", "wind_direction_range", |v| {
            v["SimulatorSettings"]["Weather"]["WindDirection"] = json!(-10)
        }),
        s("home latitude 91", "lat_lon_valid", |v| v["Vehicles"]["Drone_1"]["HomeLocation"]["Latitude"] = json!(91)),
        s("home longitude 181", "lat_lon_valid", |v| {
            v["Vehicles"]["Drone_1"]["HomeLocation"]["Longitude"] = json!(181)
        }),
        s("missing vehicle type", "format_validity", |v| {
            obj(&mut v["Vehicles"]["Drone_1"]).remove("VehicleType");
        }),
        s("missing pose yaw", "format_validity", |v| {
            obj(&mut v["Vehicles"]["Drone_1"]["Pose"]).remove("Yaw");
        }),
        s("no vehicles", "format_validity", |v| v["Vehicles"] = json!({})),
        s("missing home altitude", "format_validity", |v| {
            obj(&mut v["Vehicles"]["Drone_1"]["HomeLocation"]).remove("Altitude");
        }),
    ]
}

/// Documents exactly on an inclusive limit; all must pass.
pub fn boundary_cases() -> Vec<(&'static str, bool, Value)> {
    vec![
        (
            "altitude 121.92 m on every item",
            true,
            with(base_plan(), |v| {
                for it in v["mission"]["items"].as_array_mut().unwrap() {
                    if it["command"] != json!(21) {
                        it["Altitude"] = json!(121.92);
                        it["params"][6] = json!(121.92);
                    }
                }
            }),
        ),
        (
            "cruise and hover 13.4112 m/s",
            true,
            with(base_plan(), |v| {
                v["mission"]["cruiseSpeed"] = json!(13.4112);
                v["mission"]["hoverSpeed"] = json!(13.4112);
            }),
        ),
        (
            "cruise 30 mph",
            true,
            with(base_plan(), |v| {
                v["mission"]["speedUnit"] = json!("mph");
                v["mission"]["cruiseSpeed"] = json!(30);
            }),
        ),
        (
            "wind 22.352 m/s",
            false,
            with(base_settings(), |v| v["SimulatorSettings"]["Weather"]["WindSpeed"] = json!(22.352)),
        ),
        (
            "wind 50 mph",
            false,
            with(base_settings(), |v| {
                v["SimulatorSettings"]["Weather"]["WindSpeedUnit"] = json!("mph");
                v["SimulatorSettings"]["Weather"]["WindSpeed"] = json!(50);
            }),
        ),
    ]
}

/// A comment-less field, a fixed array of three, a multi-line comment, a
/// trailing comment and a constant that must be skipped.
pub const MSG_FIXTURE: &str = include_str!("../fixtures/msg/SensorAccelTest.msg");

pub const MSG_EXPECTED: [(&str, &str); 14] = [
    ("timestamp", "time since system start (microseconds)"),
    ("device_id", "unique device ID for the sensor"),
    ("x", "acceleration along the FRD X axis in m/s^2"),
    ("y", "acceleration along the FRD Y axis in m/s^2"),
    ("z", "acceleration along the FRD Z axis in m/s^2"),
    ("temperature", "temperature in degrees Celsius"),
    ("accel_bias[0]", "Accelerometer bias estimate in the body frame, m/s^2"),
    ("accel_bias[1]", "Accelerometer bias estimate in the body frame, m/s^2"),
    ("accel_bias[2]", "Accelerometer bias estimate in the body frame, m/s^2"),
    ("error_count", ""),
    ("rotation", "sensor rotation relative to the board"),
    ("calibrated", "true once a calibration is loaded"),
    ("clip_counter", "number of clipped samples since the last report"),
    ("range_mps2", "measurement range in m/s^2"),
];
