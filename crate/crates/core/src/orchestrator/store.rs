use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::flightlog::{parse_any, FlightLog, SourceFormat};

use super::manifest::{now, RunManifest};
use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub log_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub format: SourceFormat,
    /// File name inside the log directory.
    pub file: String,
    pub ingested_at: String,
    pub series: usize,
    pub messages: usize,
    pub duration_us: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

/// Writes via a temporary sibling so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Ids become directory names, so only a plain alphabet is accepted.
pub fn check_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Plain-file persistence under one data directory.
pub struct RunStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl RunStore {
    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        for sub in ["runs", "logs", "analytics"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn log_dir(&self, log_id: &str) -> PathBuf {
        self.root.join("logs").join(log_id)
    }

    pub fn analytics_dir(&self, log_id: &str) -> PathBuf {
        self.root.join("analytics").join(log_id)
    }

    /// Serializes work on one key (a run or a log id) across threads.
    pub fn with_lock<T>(&self, key: &str, f: impl FnOnce() -> T) -> T {
        let lock = {
            let mut map = self.locks.lock().unwrap_or_else(|e| e.into_inner());
            map.entry(key.to_string()).or_default().clone()
        };
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        f()
    }

    pub fn exists(&self, run_id: &str) -> bool {
        check_id(run_id) && self.run_dir(run_id).join(MANIFEST_FILE).is_file()
    }

    pub fn load(&self, run_id: &str) -> Result<RunManifest, PipelineError> {
        if !self.exists(run_id) {
            return Err(PipelineError::UnknownRun(run_id.to_string()));
        }
        read_json(&self.run_dir(run_id).join(MANIFEST_FILE))
    }

    pub fn save(&self, manifest: &RunManifest) -> Result<(), PipelineError> {
        write_json(&self.run_dir(&manifest.run_id).join(MANIFEST_FILE), manifest)
    }

    pub fn list(&self) -> Result<Vec<RunManifest>, PipelineError> {
        let dir = self.root.join("runs");
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| self.exists(id))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }

    pub fn write_artifact(&self, run_id: &str, rel: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        let path = self.run_dir(run_id).join(rel);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    /// Resolves a path under the data directory, refusing anything that
    /// would climb out of it.
    pub fn resolve(&self, rel: &str) -> Option<PathBuf> {
        let p = Path::new(rel);
        if p.is_absolute() || p.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
            return None;
        }
        let full = self.root.join(p);
        full.is_file().then_some(full)
    }

    pub fn store_log(&self, bytes: &[u8], run_id: Option<&str>) -> Result<(LogRecord, FlightLog), PipelineError> {
        let log = parse_any(bytes)?;
        let log_id = ulid::Ulid::new().to_string();
        let file = match log.source_format {
            SourceFormat::Ulog => "flight.ulg",
            SourceFormat::Csv => "flight.csv",
        };
        let dir = self.log_dir(&log_id);
        write_atomic(&dir.join(file), bytes)?;
        let record = LogRecord {
            log_id,
            run_id: run_id.map(str::to_string),
            format: log.source_format,
            file: file.to_string(),
            ingested_at: now(),
            series: log.series.len(),
            messages: log.messages.len(),
            duration_us: log.duration_us(),
        };
        write_json(&dir.join("log.json"), &record)?;
        Ok((record, log))
    }

    pub fn load_log(&self, log_id: &str) -> Result<(LogRecord, FlightLog), PipelineError> {
        let dir = self.log_dir(log_id);
        if !check_id(log_id) || !dir.join("log.json").is_file() {
            return Err(PipelineError::UnknownLog(log_id.to_string()));
        }
        let record: LogRecord = read_json(&dir.join("log.json"))?;
        let path = dir.join(&record.file);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        Ok((record, parse_any(&bytes)?))
    }

    pub fn list_logs(&self) -> Result<Vec<LogRecord>, PipelineError> {
        let dir = self.root.join("logs");
        let mut out: Vec<LogRecord> = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| read_json(&e.path().join("log.json")).ok())
            .collect();
        out.sort_by(|a, b| a.log_id.cmp(&b.log_id));
        Ok(out)
    }

    /// Next free sequence number for an interactive query on `log_id`.
    pub fn next_query_seq(&self, log_id: &str) -> Result<u32, PipelineError> {
        let dir = self.analytics_dir(log_id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let used = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json")?.parse::<u32>().ok()
            })
            .max()
            .unwrap_or(0);
        Ok(used + 1)
    }
}
