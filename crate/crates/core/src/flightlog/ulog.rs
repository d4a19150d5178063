//! ULog subset: definitions ('B', 'F', 'I', 'P', 'M', 'Q'), subscriptions
//! ('A', 'R'), data ('D'), logged strings ('L', 'C') plus 'S'/'O' markers.
//! Appended-data sections are not followed.

use std::collections::{BTreeMap, HashMap};

use super::{FlightLog, FlightLogError, LoggedMessage, ParamValue, SourceFormat, TimeSeries};

pub const ULOG_MAGIC: [u8; 7] = [0x55, 0x4c, 0x6f, 0x67, 0x01, 0x12, 0x35];
const HEADER_LEN: usize = 16;
const MSG_HEADER_LEN: usize = 3;
const WRITE_VERSION: u8 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UlogStats {
    pub version: u8,
    pub messages: usize,
    pub unparseable: usize,
    pub unknown_types: usize,
    /// Samples dropped because their timestamp did not advance.
    pub dropped_samples: usize,
    pub truncated_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Prim {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    I64,
    U64,
    F32,
    F64,
    Bool,
    Char,
}

impl Prim {
    fn parse(s: &str) -> Option<Prim> {
        Some(match s {
            "int8_t" => Prim::I8,
            "uint8_t" => Prim::U8,
            "int16_t" => Prim::I16,
            "uint16_t" => Prim::U16,
            "int32_t" => Prim::I32,
            "uint32_t" => Prim::U32,
            "int64_t" => Prim::I64,
            "uint64_t" => Prim::U64,
            "float" => Prim::F32,
            "double" => Prim::F64,
            "bool" => Prim::Bool,
            "char" => Prim::Char,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Prim::I8 | Prim::U8 | Prim::Bool | Prim::Char => 1,
            Prim::I16 | Prim::U16 => 2,
            Prim::I32 | Prim::U32 | Prim::F32 => 4,
            Prim::I64 | Prim::U64 | Prim::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Prim::I8 => b[0] as i8 as f64,
            Prim::U8 | Prim::Char => b[0] as f64,
            Prim::Bool => (b[0] != 0) as u8 as f64,
            Prim::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Prim::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Prim::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Prim::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Prim::I64 => i64::from_le_bytes(b[..8].try_into().unwrap()) as f64,
            Prim::U64 => u64::from_le_bytes(b[..8].try_into().unwrap()) as f64,
            Prim::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Prim::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
struct FieldDef {
    type_name: String,
    array_len: Option<usize>,
    name: String,
}

fn parse_type(decl: &str) -> Option<(String, Option<usize>)> {
    match decl.split_once('[') {
        Some((base, rest)) => {
            let n: usize = rest.strip_suffix(']')?.parse().ok()?;
            Some((base.to_string(), Some(n)))
        }
        None => Some((decl.to_string(), None)),
    }
}

fn parse_format(text: &str) -> Option<(String, Vec<FieldDef>)> {
    let (name, body) = text.split_once(':')?;
    let mut fields = Vec::new();
    for f in body.split(';').map(str::trim).filter(|f| !f.is_empty()) {
        let (ty, fname) = f.split_once(' ')?;
        let (type_name, array_len) = parse_type(ty.trim())?;
        fields.push(FieldDef {
            type_name,
            array_len,
            name: fname.trim().to_string(),
        });
    }
    if name.is_empty() {
        return None;
    }
    Some((name.to_string(), fields))
}

#[derive(Debug, Clone)]
struct FlatField {
    name: String,
    offset: usize,
    prim: Prim,
}

#[derive(Debug, Clone)]
struct Layout {
    size: usize,
    timestamp_offset: usize,
    fields: Vec<FlatField>,
}

fn type_size(
    formats: &HashMap<String, Vec<FieldDef>>,
    type_name: &str,
    depth: usize,
) -> Option<usize> {
    if let Some(p) = Prim::parse(type_name) {
        return Some(p.size());
    }
    if depth > 8 {
        return None;
    }
    let defs = formats.get(type_name)?;
    defs.iter().try_fold(0usize, |acc, f| {
        let one = type_size(formats, &f.type_name, depth + 1)?;
        Some(acc + one * f.array_len.unwrap_or(1))
    })
}

fn flatten(
    formats: &HashMap<String, Vec<FieldDef>>,
    defs: &[FieldDef],
    prefix: &str,
    base: usize,
    depth: usize,
    out: &mut Vec<FlatField>,
) -> Option<usize> {
    let mut offset = base;
    for f in defs {
        let elem = type_size(formats, &f.type_name, depth + 1)?;
        let count = f.array_len.unwrap_or(1);
        let skip = f.name.starts_with("_padding") || f.type_name == "char";
        if !skip {
            for i in 0..count {
                let name = match f.array_len {
                    Some(_) => format!("{prefix}{}[{i}]", f.name),
                    None => format!("{prefix}{}", f.name),
                };
                let at = offset + i * elem;
                match Prim::parse(&f.type_name) {
                    Some(prim) => out.push(FlatField { name, offset: at, prim }),
                    None => {
                        let nested = formats.get(&f.type_name)?;
                        flatten(formats, nested, &format!("{name}."), at, depth + 1, out)?;
                    }
                }
            }
        }
        offset += elem * count;
    }
    Some(offset - base)
}

fn layout_for(formats: &HashMap<String, Vec<FieldDef>>, topic: &str) -> Option<Layout> {
    let defs = formats.get(topic)?;
    let mut flat = Vec::new();
    let size = flatten(formats, defs, "", 0, 0, &mut flat)?;
    let ts_pos = flat.iter().position(|f| f.name == "timestamp" && f.prim == Prim::U64)?;
    let ts = flat.remove(ts_pos);
    Some(Layout {
        size,
        timestamp_offset: ts.offset,
        fields: flat,
    })
}

struct Subscription {
    series_prefix: String,
    layout: Option<Layout>,
    last_ts: Option<u64>,
}

fn read_u16(b: &[u8], at: usize) -> Option<u16> {
    b.get(at..at + 2).map(|s| u16::from_le_bytes([s[0], s[1]]))
}

fn read_u64(b: &[u8], at: usize) -> Option<u64> {
    b.get(at..at + 8).map(|s| u64::from_le_bytes(s.try_into().unwrap()))
}

/// Info/parameter key-value payload: u8 key length, "<type> <name>", value.
fn parse_key_value(payload: &[u8]) -> Option<(String, String, &[u8])> {
    let key_len = *payload.first()? as usize;
    let key = std::str::from_utf8(payload.get(1..1 + key_len)?).ok()?;
    let (ty, name) = key.split_once(' ')?;
    Some((ty.to_string(), name.to_string(), payload.get(1 + key_len..)?))
}

fn info_value(ty: &str, value: &[u8]) -> Option<String> {
    let (base, array) = parse_type(ty)?;
    if base == "char" {
        return Some(String::from_utf8_lossy(value).into_owned());
    }
    let prim = Prim::parse(&base)?;
    if array.is_some() || value.len() < prim.size() {
        return None;
    }
    Some(prim.decode(value).to_string())
}

fn level_from_byte(b: u8) -> u8 {
    if (b'0'..=b'7').contains(&b) {
        b - b'0'
    } else {
        b.min(7)
    }
}

pub fn parse_ulog(bytes: &[u8]) -> Result<FlightLog, FlightLogError> {
    parse_ulog_with_stats(bytes).map(|(log, _)| log)
}

pub fn parse_ulog_with_stats(bytes: &[u8]) -> Result<(FlightLog, UlogStats), FlightLogError> {
    if bytes.len() < ULOG_MAGIC.len() || bytes[..ULOG_MAGIC.len()] != ULOG_MAGIC {
        return Err(FlightLogError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FlightLogError::CorruptHeader);
    }
    let mut stats = UlogStats {
        version: bytes[7],
        ..Default::default()
    };
    let start_time = read_u64(bytes, 8).ok_or(FlightLogError::CorruptHeader)?;
    let mut log = FlightLog::new(start_time, SourceFormat::Ulog);
    let mut formats: HashMap<String, Vec<FieldDef>> = HashMap::new();
    let mut subs: HashMap<u16, Subscription> = HashMap::new();
    let mut columns: BTreeMap<String, TimeSeries> = BTreeMap::new();

    let mut pos = HEADER_LEN;
    while pos < bytes.len() {
        if pos + MSG_HEADER_LEN > bytes.len() {
            stats.truncated_tail = true;
            break;
        }
        let size = read_u16(bytes, pos).unwrap() as usize;
        let kind = bytes[pos + 2];
        let start = pos + MSG_HEADER_LEN;
        if start + size > bytes.len() {
            stats.truncated_tail = true;
            break;
        }
        let payload = &bytes[start..start + size];
        pos = start + size;
        stats.messages += 1;
        let ok = match kind {
            b'B' | b'S' | b'O' | b'M' | b'Q' => true,
            b'F' => match std::str::from_utf8(payload).ok().and_then(parse_format) {
                Some((name, fields)) => {
                    formats.insert(name, fields);
                    true
                }
                None => false,
            },
            b'I' => match parse_key_value(payload) {
                Some((ty, name, value)) => match info_value(&ty, value) {
                    Some(v) => {
                        log.info.insert(name, v);
                        true
                    }
                    None => false,
                },
                None => false,
            },
            b'P' => match parse_key_value(payload) {
                Some((ty, name, value)) if value.len() >= 4 => {
                    let raw: [u8; 4] = value[..4].try_into().unwrap();
                    match ty.as_str() {
                        "int32_t" => {
                            log.parameters.insert(name, ParamValue::Int(i32::from_le_bytes(raw)));
                            true
                        }
                        "float" => {
                            log.parameters.insert(name, ParamValue::Float(f32::from_le_bytes(raw)));
                            true
                        }
                        _ => false,
                    }
                }
                _ => false,
            },
            b'A' => {
                let parsed = (|| {
                    let multi_id = *payload.first()?;
                    let msg_id = read_u16(payload, 1)?;
                    let topic = std::str::from_utf8(payload.get(3..)?).ok()?.to_string();
                    Some((multi_id, msg_id, topic))
                })();
                match parsed {
                    Some((multi_id, msg_id, topic)) => {
                        let layout = layout_for(&formats, &topic);
                        let series_prefix = if multi_id == 0 {
                            topic.clone()
                        } else {
                            format!("{topic}_{multi_id}")
                        };
                        let resolved = layout.is_some();
                        subs.insert(
                            msg_id,
                            Subscription {
                                series_prefix,
                                layout,
                                last_ts: None,
                            },
                        );
                        resolved
                    }
                    None => false,
                }
            }
            b'R' => match read_u16(payload, 0) {
                Some(id) => {
                    subs.remove(&id);
                    true
                }
                None => false,
            },
            b'D' => {
                let decoded = read_u16(payload, 0).and_then(|id| subs.get_mut(&id)).and_then(|sub| {
                    let layout = sub.layout.as_ref()?;
                    let data = payload.get(2..)?;
                    if data.len() < layout.size {
                        return None;
                    }
                    let ts = read_u64(data, layout.timestamp_offset)?;
                    Some((sub, ts, data))
                });
                match decoded {
                    Some((sub, ts, data)) => {
                        if sub.last_ts.is_some_and(|last| ts <= last) {
                            stats.dropped_samples += 1;
                        } else {
                            sub.last_ts = Some(ts);
                            let layout = sub.layout.as_ref().unwrap();
                            for f in &layout.fields {
                                let v = f.prim.decode(&data[f.offset..]);
                                let col = columns
                                    .entry(format!("{}.{}", sub.series_prefix, f.name))
                                    .or_default();
                                col.timestamps.push(ts);
                                col.values.push(v);
                            }
                        }
                        true
                    }
                    None => false,
                }
            }
            b'L' | b'C' => {
                let (level_at, ts_at) = if kind == b'L' { (0, 1) } else { (0, 3) };
                let text_at = ts_at + 8;
                match (payload.get(level_at), read_u64(payload, ts_at), payload.get(text_at..)) {
                    (Some(&level), Some(timestamp), Some(text)) => {
                        log.messages.push(LoggedMessage {
                            timestamp,
                            level: level_from_byte(level),
                            text: String::from_utf8_lossy(text).into_owned(),
                        });
                        true
                    }
                    _ => false,
                }
            }
            _ => {
                stats.unknown_types += 1;
                true
            }
        };
        if !ok {
            stats.unparseable += 1;
        }
    }
    if stats.messages > 0 && stats.unparseable * 10 > stats.messages {
        return Err(FlightLogError::CorruptLog(format!(
            "{} of {} messages unparseable",
            stats.unparseable, stats.messages
        )));
    }
    if stats.unknown_types > 0 {
        log::debug!("skipped {} messages of unknown type", stats.unknown_types);
    }
    log.series = columns;
    if log.series.is_empty() {
        return Err(FlightLogError::EmptyLog);
    }
    Ok((log, stats))
}

fn push_msg(out: &mut Vec<u8>, kind: u8, payload: &[u8]) -> Result<(), FlightLogError> {
    let size = u16::try_from(payload.len())
        .map_err(|_| FlightLogError::InvalidLog(format!("'{}' message exceeds 65535 bytes", kind as char)))?;
    out.extend_from_slice(&size.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(payload);
    Ok(())
}

fn key_value_payload(key: &str, value: &[u8]) -> Result<Vec<u8>, FlightLogError> {
    let len = u8::try_from(key.len()).map_err(|_| FlightLogError::InvalidLog(format!("key too long: {key}")))?;
    let mut p = vec![len];
    p.extend_from_slice(key.as_bytes());
    p.extend_from_slice(value);
    Ok(p)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct TopicPlan<'a> {
    name: String,
    timestamps: &'a [u64],
    /// Value columns in the order the format declares them.
    columns: Vec<&'a [f64]>,
    format: String,
}

fn plan_topics(log: &FlightLog) -> Result<Vec<TopicPlan<'_>>, FlightLogError> {
    let mut by_topic: BTreeMap<&str, Vec<(&str, &TimeSeries)>> = BTreeMap::new();
    for (name, s) in &log.series {
        let (topic, field) = name
            .split_once('.')
            .ok_or_else(|| FlightLogError::InvalidLog(format!("series {name} is not <topic>.<field>")))?;
        if !is_ident(topic) {
            return Err(FlightLogError::InvalidLog(format!("bad topic name {topic:?}")));
        }
        by_topic.entry(topic).or_default().push((field, s));
    }
    let mut plans = Vec::new();
    for (topic, fields) in by_topic {
        let timestamps = &fields[0].1.timestamps;
        if fields.iter().any(|(_, s)| &s.timestamps != timestamps) {
            return Err(FlightLogError::InvalidLog(format!(
                "series of topic {topic} do not share timestamps"
            )));
        }
        // scalars and arrays in name order; arrays must be dense from 0
        let mut scalars: Vec<(&str, &[f64])> = Vec::new();
        let mut arrays: BTreeMap<&str, BTreeMap<usize, &[f64]>> = BTreeMap::new();
        for (field, s) in &fields {
            if let Some((base, rest)) = field.split_once('[') {
                let idx: usize = rest
                    .strip_suffix(']')
                    .and_then(|i| i.parse().ok())
                    .ok_or_else(|| FlightLogError::InvalidLog(format!("bad field name {field:?}")))?;
                if !is_ident(base) {
                    return Err(FlightLogError::InvalidLog(format!("bad field name {field:?}")));
                }
                arrays.entry(base).or_default().insert(idx, &s.values);
            } else if is_ident(field) && *field != "timestamp" {
                scalars.push((field, &s.values));
            } else {
                return Err(FlightLogError::InvalidLog(format!("cannot write field {field:?}")));
            }
        }
        let mut format = format!("{topic}:uint64_t timestamp;");
        let mut columns = Vec::new();
        for (field, values) in scalars {
            format.push_str(&format!("double {field};"));
            columns.push(values);
        }
        for (base, elems) in arrays {
            if elems.keys().copied().ne(0..elems.len()) {
                return Err(FlightLogError::InvalidLog(format!("array {topic}.{base} is not dense")));
            }
            if scalars_contains(&format, base) {
                return Err(FlightLogError::InvalidLog(format!("{topic}.{base} is both scalar and array")));
            }
            format.push_str(&format!("double[{}] {base};", elems.len()));
            columns.extend(elems.into_values());
        }
        plans.push(TopicPlan {
            name: topic.to_string(),
            timestamps,
            columns,
            format,
        });
    }
    Ok(plans)
}

fn scalars_contains(format: &str, name: &str) -> bool {
    format.contains(&format!("double {name};"))
}

/// Minimal ULog: header, flag bits, definitions, subscriptions, then data and
/// logged strings interleaved in time order. Every value is written as a
/// double so the parser reproduces it bit for bit.
pub fn write_ulog(log: &FlightLog) -> Result<Vec<u8>, FlightLogError> {
    log.validate()?;
    let plans = plan_topics(log)?;
    if plans.len() > u16::MAX as usize {
        return Err(FlightLogError::InvalidLog("too many topics".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&ULOG_MAGIC);
    out.push(WRITE_VERSION);
    out.extend_from_slice(&log.start_time.to_le_bytes());

    // compat flags[8], incompat flags[8], appended offsets[3]
    push_msg(&mut out, b'B', &[0u8; 40])?;
    for (k, v) in &log.info {
        let key = format!("char[{}] {k}", v.len());
        push_msg(&mut out, b'I', &key_value_payload(&key, v.as_bytes())?)?;
    }
    for (k, v) in &log.parameters {
        let (key, bytes) = match v {
            ParamValue::Int(i) => (format!("int32_t {k}"), i.to_le_bytes()),
            ParamValue::Float(f) => (format!("float {k}"), f.to_le_bytes()),
        };
        push_msg(&mut out, b'P', &key_value_payload(&key, &bytes)?)?;
    }
    for p in &plans {
        push_msg(&mut out, b'F', p.format.as_bytes())?;
    }
    for (id, p) in plans.iter().enumerate() {
        let mut payload = vec![0u8];
        payload.extend_from_slice(&(id as u16).to_le_bytes());
        payload.extend_from_slice(p.name.as_bytes());
        push_msg(&mut out, b'A', &payload)?;
    }

    // (timestamp, topic, row); stable sort keeps each topic's row order
    let mut samples: Vec<(u64, usize, usize)> = plans
        .iter()
        .enumerate()
        .flat_map(|(t, p)| p.timestamps.iter().enumerate().map(move |(row, &ts)| (ts, t, row)))
        .collect();
    samples.sort_by_key(|&(ts, t, _)| (ts, t));

    let mut messages = log.messages.iter().peekable();
    for (ts, t, row) in samples {
        while let Some(m) = messages.next_if(|m| m.timestamp < ts) {
            write_logged(&mut out, m)?;
        }
        let p = &plans[t];
        let mut payload = Vec::with_capacity(10 + 8 * p.columns.len());
        payload.extend_from_slice(&(t as u16).to_le_bytes());
        payload.extend_from_slice(&ts.to_le_bytes());
        for col in &p.columns {
            payload.extend_from_slice(&col[row].to_le_bytes());
        }
        push_msg(&mut out, b'D', &payload)?;
    }
    for m in messages {
        write_logged(&mut out, m)?;
    }
    Ok(out)
}

fn write_logged(out: &mut Vec<u8>, m: &LoggedMessage) -> Result<(), FlightLogError> {
    let mut payload = vec![b'0' + m.level];
    payload.extend_from_slice(&m.timestamp.to_le_bytes());
    payload.extend_from_slice(m.text.as_bytes());
    push_msg(out, b'L', &payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_topic_log() -> FlightLog {
        let mut log = FlightLog::new(1_000, SourceFormat::Ulog);
        log.series.insert(
            "vehicle_air_data.baro_alt_meter".into(),
            TimeSeries::new(vec![10, 20, 30], vec![1.0, 2.0, f64::NAN]).unwrap(),
        );
        log.series.insert(
            "sensor_accel.x".into(),
            TimeSeries::new(vec![5, 15], vec![0.1, -0.2]).unwrap(),
        );
        log.series.insert("sensor_accel.bias[0]".into(), TimeSeries::new(vec![5, 15], vec![1.0, 2.0]).unwrap());
        log.series.insert("sensor_accel.bias[1]".into(), TimeSeries::new(vec![5, 15], vec![3.0, 4.0]).unwrap());
        log.messages.push(LoggedMessage { timestamp: 42_000_000, level: 3, text: "FAILSAFE: low battery".into() });
        log.info.insert("sys_name".into(), "PX4".into());
        log.parameters.insert("COM_LOW_BAT_ACT".into(), ParamValue::Int(2));
        log.parameters.insert("BAT_LOW_THR".into(), ParamValue::Float(0.15));
        log
    }

    #[test]
    fn round_trip_two_topics() {
        let log = two_topic_log();
        let bytes = write_ulog(&log).unwrap();
        assert_eq!(&bytes[..7], &ULOG_MAGIC);
        let back = parse_ulog(&bytes).unwrap();
        assert!(back.bitwise_eq(&log), "{back:#?}");
    }

    #[test]
    fn logged_message_timestamp() {
        let back = parse_ulog(&write_ulog(&two_topic_log()).unwrap()).unwrap();
        assert_eq!(back.messages[0].text, "FAILSAFE: low battery");
        assert_eq!(back.messages[0].timestamp, 42_000_000);
    }

    #[test]
    fn empty_input_bad_magic() {
        assert_eq!(parse_ulog(&[]), Err(FlightLogError::BadMagic));
        assert_eq!(parse_ulog(b"not a log at all"), Err(FlightLogError::BadMagic));
        assert_eq!(parse_ulog(&ULOG_MAGIC), Err(FlightLogError::CorruptHeader));
    }

    #[test]
    fn empty_series_log_rejected_by_writer() {
        let log = FlightLog::new(0, SourceFormat::Ulog);
        assert_eq!(write_ulog(&log), Err(FlightLogError::EmptyLog));
    }

    #[test]
    fn writer_rejects_unshared_topic_timestamps() {
        let mut log = FlightLog::new(0, SourceFormat::Ulog);
        log.series.insert("t.a".into(), TimeSeries::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        log.series.insert("t.b".into(), TimeSeries::new(vec![1, 3], vec![0.0, 0.0]).unwrap());
        assert!(matches!(write_ulog(&log), Err(FlightLogError::InvalidLog(_))));
    }

    #[test]
    fn truncated_tail_tolerated() {
        let bytes = write_ulog(&two_topic_log()).unwrap();
        let (log, stats) = parse_ulog_with_stats(&bytes[..bytes.len() - 3]).unwrap();
        assert!(stats.truncated_tail);
        assert!(!log.messages.is_empty() || log.series.len() == 4);
    }

    #[test]
    fn unknown_types_skipped() {
        let mut bytes = write_ulog(&two_topic_log()).unwrap();
        push_msg(&mut bytes, b'Z', b"future").unwrap();
        let (_, stats) = parse_ulog_with_stats(&bytes).unwrap();
        assert_eq!(stats.unknown_types, 1);
        assert_eq!(stats.unparseable, 0);
    }

    #[test]
    fn corrupt_when_many_unparseable() {
        let mut bytes = write_ulog(&two_topic_log()).unwrap();
        for _ in 0..10 {
            // data for a msg id nobody subscribed
            push_msg(&mut bytes, b'D', &[9, 9, 0, 0]).unwrap();
        }
        assert!(matches!(parse_ulog(&bytes), Err(FlightLogError::CorruptLog(_))));
    }

    #[test]
    fn decodes_px4_style_types_and_nesting() {
        let mut b = ULOG_MAGIC.to_vec();
        b.push(1);
        b.extend_from_slice(&0u64.to_le_bytes());
        push_msg(&mut b, b'F', b"vec3:float x;float y;float z;").unwrap();
        push_msg(
            &mut b,
            b'F',
            b"sensor_gps:uint64_t timestamp;int32_t lat;uint8_t satellites_used;bool fix;char[2] tag;uint8_t[3] _padding0;vec3 vel;int16_t[2] n;",
        )
        .unwrap();
        push_msg(&mut b, b'A', &[1, 7, 0, b's', b'e', b'n', b's', b'o', b'r', b'_', b'g', b'p', b's']).unwrap();
        let mut d = vec![7, 0];
        d.extend_from_slice(&500u64.to_le_bytes());
        d.extend_from_slice(&(-473977420i32).to_le_bytes());
        d.push(11);
        d.push(1);
        d.extend_from_slice(b"ab");
        d.extend_from_slice(&[0, 0, 0]);
        for v in [1.5f32, -2.0, 0.25] {
            d.extend_from_slice(&v.to_le_bytes());
        }
        d.extend_from_slice(&(-3i16).to_le_bytes());
        d.extend_from_slice(&7i16.to_le_bytes());
        push_msg(&mut b, b'D', &d).unwrap();
        let log = parse_ulog(&b).unwrap();
        let get = |k: &str| log.series[k].values[0];
        assert_eq!(get("sensor_gps_1.lat"), -473977420.0);
        assert_eq!(get("sensor_gps_1.satellites_used"), 11.0);
        assert_eq!(get("sensor_gps_1.fix"), 1.0);
        assert_eq!(get("sensor_gps_1.vel.y"), -2.0);
        assert_eq!(get("sensor_gps_1.n[0]"), -3.0);
        assert_eq!(get("sensor_gps_1.n[1]"), 7.0);
        assert!(!log.series.keys().any(|k| k.contains("padding") || k.contains("tag")));
        assert_eq!(log.series["sensor_gps_1.lat"].timestamps, [500]);
    }
}
