use std::collections::BTreeMap;

use super::{FlightLog, FlightLogError, SourceFormat, TimeSeries};

/// Wide CSV: a `timestamp_us` column followed by one column per series.
/// Empty cells mean "not sampled"; `nan` is kept as a value.
pub fn parse_csv(bytes: &[u8]) -> Result<FlightLog, FlightLogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr
        .headers()
        .map_err(|_| FlightLogError::MissingHeader)?
        .clone();
    if headers.get(0) != Some("timestamp_us") {
        return Err(FlightLogError::MissingHeader);
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<TimeSeries> = vec![TimeSeries::default(); names.len()];
    let mut last_ts: Option<u64> = None;
    let mut start_time = None;
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| FlightLogError::InvalidLog(format!("row {row}: {e}")))?;
        let raw_ts = rec.get(0).unwrap_or("");
        let ts: u64 = raw_ts.parse().map_err(|_| FlightLogError::BadCell {
            row,
            column: 0,
            value: raw_ts.to_string(),
        })?;
        if last_ts.is_some_and(|l| ts <= l) {
            return Err(FlightLogError::NonMonotonicTimestamps { row });
        }
        last_ts = Some(ts);
        start_time.get_or_insert(ts);
        rows += 1;
        for (c, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| FlightLogError::BadCell {
                row,
                column: c,
                value: cell.to_string(),
            })?;
            if v.is_infinite() {
                return Err(FlightLogError::BadCell { row, column: c, value: cell.to_string() });
            }
            columns[c - 1].timestamps.push(ts);
            columns[c - 1].values.push(v);
        }
    }
    if rows == 0 {
        return Err(FlightLogError::NoDataRows);
    }
    let mut log = FlightLog::new(start_time.unwrap_or(0), SourceFormat::Csv);
    log.series = names
        .into_iter()
        .zip(columns)
        .filter(|(_, s)| !s.is_empty())
        .collect::<BTreeMap<_, _>>();
    if log.series.is_empty() {
        return Err(FlightLogError::EmptyLog);
    }
    Ok(log)
}

/// Inverse of [`parse_csv`] for the series; logged messages have no CSV
/// representation and are dropped.
pub fn write_csv(log: &FlightLog) -> Result<Vec<u8>, FlightLogError> {
    log.validate()?;
    let mut stamps: Vec<u64> = log.series.values().flat_map(|s| s.timestamps.iter().copied()).collect();
    stamps.sort_unstable();
    stamps.dedup();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| FlightLogError::InvalidLog(e.to_string());
    let mut header = vec!["timestamp_us".to_string()];
    header.extend(log.series.keys().cloned());
    wtr.write_record(&header).map_err(io)?;
    let mut cursors = vec![0usize; log.series.len()];
    for ts in stamps {
        let mut row = vec![ts.to_string()];
        for (cur, s) in cursors.iter_mut().zip(log.series.values()) {
            if s.timestamps.get(*cur) == Some(&ts) {
                row.push(format!("{:?}", s.values[*cur]).to_lowercase());
                *cur += 1;
            } else {
                row.push(String::new());
            }
        }
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.into_inner().map_err(|e| FlightLogError::InvalidLog(e.to_string()))
}
