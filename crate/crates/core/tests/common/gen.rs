//! Proptest strategies for small randomized flight logs.

use ast_core::flightlog::{FlightLog, LoggedMessage, ParamValue, SourceFormat, TimeSeries};
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

/// Any non-infinite double, NaN payloads included.
pub fn any_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -1e6f64..1e6,
        1 => any::<u64>().prop_map(f64::from_bits).prop_filter("finite or nan", |v| !v.is_infinite()),
    ]
}

fn timestamps(max: usize) -> impl Strategy<Value = Vec<u64>> {
    (0u64..1 << 40, vec(1u64..2_000_000, 1..max)).prop_map(|(start, deltas)| {
        let mut t = start;
        deltas
            .into_iter()
            .map(|d| {
                t += d;
                t
            })
            .collect()
    })
}

fn topic(name: String) -> impl Strategy<Value = Vec<(String, TimeSeries)>> {
    (timestamps(16), 1usize..4, 0usize..4).prop_flat_map(move |(ts, scalars, array)| {
        let n = ts.len();
        let name = name.clone();
        vec(vec(any_value(), n), scalars + array).prop_map(move |cols| {
            cols.into_iter()
                .enumerate()
                .map(|(i, values)| {
                    let field = if i < scalars { format!("f{i}") } else { format!("arr[{}]", i - scalars) };
                    (format!("{name}.{field}"), TimeSeries { timestamps: ts.clone(), values })
                })
                .collect()
        })
    })
}

fn message() -> impl Strategy<Value = LoggedMessage> {
    (any::<u64>(), 0u8..8, "[ -~]{0,40}").prop_map(|(timestamp, level, text)| LoggedMessage { timestamp, level, text })
}

fn param() -> impl Strategy<Value = ParamValue> {
    prop_oneof![
        any::<i32>().prop_map(ParamValue::Int),
        any::<u32>()
            .prop_map(f32::from_bits)
            .prop_filter("not infinite", |v| !v.is_infinite())
            .prop_map(ParamValue::Float),
    ]
}

pub fn flight_log() -> impl Strategy<Value = FlightLog> {
    let topics = proptest::sample::subsequence(vec!["sensor_accel", "vehicle_gps", "battery_status", "t_x"], 1..4);
    (
        topics.prop_flat_map(|names| names.into_iter().map(|n| topic(n.to_string())).collect::<Vec<_>>()),
        0u64..1 << 50,
        vec(message(), 0..4),
        btree_map("[a-z_]{1,12}", "[ -~]{0,20}", 0..3),
        btree_map("[A-Z][A-Z_]{0,14}", param(), 0..4),
    )
        .prop_map(|(topics, start_time, messages, info, parameters)| {
            let mut log = FlightLog::new(start_time, SourceFormat::Ulog);
            log.series.extend(topics.into_iter().flatten());
            log.messages = messages;
            log.info = info;
            log.parameters = parameters;
            log
        })
}
