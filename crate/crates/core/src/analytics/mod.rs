//! Phase 3: parameter selection, plotting, vision narrative and the
//! deterministic sensor checks that sit alongside it.

mod detectors;
mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flightlog::{field_part, render_plot, FlightLog, FlightLogError, PlotSpec, TimeSeries};
use crate::gateway::{ChatMessage, Gateway, ImageAttachment, LlmError};
use crate::knowledge::{tokenize, Embedder, KnowledgeError, ParamIndex, ParameterDoc};
use crate::prompting::{assemble, ContextChunk, PromptError, PromptSpec};

pub use detectors::{detect_sensor_failures, DetectorConfig, Evidence, Sensor, SensorVerdict};
pub use report::{render_markdown, write_report};

pub const DEFAULT_K_PARAMS: usize = 5;
pub const NARRATIVE_UNAVAILABLE: &str = "narrative unavailable";

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("analysis request needs at least one goal")]
    NoGoals,
    #[error("interactive analysis takes exactly one question, got {0}")]
    InteractiveGoalCount(usize),
    #[error("goal {0} is empty")]
    EmptyGoal(usize),
    #[error("k_params must be at least 1")]
    InvalidK,
    #[error("parameter knowledge base is empty")]
    EmptyIndex,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    FlightLog(#[from] FlightLogError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot write report to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisMode {
    #[default]
    Automated,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub mode: AnalysisMode,
    /// Test properties in automated mode, the one developer question otherwise.
    pub goals: Vec<String>,
    pub log_ref: String,
    #[serde(default = "default_k")]
    pub k_params: usize,
}

fn default_k() -> usize {
    DEFAULT_K_PARAMS
}

impl AnalysisRequest {
    pub fn automated(goals: Vec<String>, log_ref: impl Into<String>) -> Self {
        Self {
            mode: AnalysisMode::Automated,
            goals,
            log_ref: log_ref.into(),
            k_params: DEFAULT_K_PARAMS,
        }
    }

    pub fn interactive(question: impl Into<String>, log_ref: impl Into<String>) -> Self {
        Self {
            mode: AnalysisMode::Interactive,
            goals: vec![question.into()],
            log_ref: log_ref.into(),
            k_params: DEFAULT_K_PARAMS,
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.goals.is_empty() {
            return Err(AnalyticsError::NoGoals);
        }
        if self.mode == AnalysisMode::Interactive && self.goals.len() != 1 {
            return Err(AnalyticsError::InteractiveGoalCount(self.goals.len()));
        }
        if let Some(i) = self.goals.iter().position(|g| g.trim().is_empty()) {
            return Err(AnalyticsError::EmptyGoal(i));
        }
        if self.k_params == 0 {
            return Err(AnalyticsError::InvalidK);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedParameter {
    pub doc: ParameterDoc,
    pub score: f64,
    /// The log series it resolved to, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalAnalysis {
    pub goal: String,
    pub selected: Vec<SelectedParameter>,
    /// SVG paths relative to the analysis directory, one per plotted
    /// parameter; a PNG with the same stem sits next to each.
    pub plots: Vec<String>,
    pub narrative: String,
    /// Context handed to the model; kept for evaluation.
    pub context: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub request: AnalysisRequest,
    pub goals: Vec<GoalAnalysis>,
    pub selected_params: Vec<(ParameterDoc, f64)>,
    pub plots: Vec<String>,
    pub narrative: String,
    pub narrative_available: bool,
    pub detector_verdicts: Vec<SensorVerdict>,
    pub created_at: String,
}

impl AnalysisReport {
    pub fn verdict(&self, sensor: Sensor) -> Option<&SensorVerdict> {
        self.detector_verdicts.iter().find(|v| v.sensor == sensor)
    }

    pub fn failed_sensors(&self) -> Vec<Sensor> {
        self.detector_verdicts.iter().filter(|v| v.failed).map(|v| v.sensor).collect()
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "any", "are", "at", "be", "been", "by", "did", "do", "does", "during", "for", "from", "had",
    "has", "have", "how", "if", "in", "is", "it", "its", "of", "on", "or", "the", "there", "this", "to", "was",
    "were", "what", "when", "where", "which", "why", "with",
];

/// The goal without function words, which would otherwise match every
/// description that happens to use them. Falls back to the goal itself.
pub fn content_terms(goal: &str) -> String {
    let kept: Vec<String> = tokenize(goal).into_iter().filter(|t| !STOPWORDS.contains(&t.as_str())).collect();
    if kept.is_empty() {
        goal.to_string()
    } else {
        kept.join(" ")
    }
}

/// Top-`k` parameters for a goal, scored against names and descriptions.
pub fn select_parameters(
    goal: &str,
    index: &ParamIndex,
    embedder: &Embedder,
    k: usize,
) -> Result<Vec<(ParameterDoc, f64)>, AnalyticsError> {
    if index.is_empty() {
        return Err(AnalyticsError::EmptyIndex);
    }
    if k == 0 {
        return Err(AnalyticsError::InvalidK);
    }
    let mut hits = index.search(embedder, &content_terms(goal), k)?;
    // a zero score shares no term with the goal; plotting it would be noise
    hits.retain(|(_, score)| *score > 0.0);
    Ok(hits)
}

fn topic_base(topic: &str) -> &str {
    match topic.rsplit_once('_') {
        Some((base, n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => base,
        _ => topic,
    }
}

/// Log series for a parameter: the exact `topic.field` name, then another
/// instance of the same topic, then a field match when it is unambiguous.
pub fn resolve_series<'a>(log: &'a FlightLog, doc: &ParameterDoc) -> Option<(&'a str, &'a TimeSeries)> {
    let key = doc.key();
    if let Some((k, s)) = log.series.get_key_value(&key) {
        return Some((k.as_str(), s));
    }
    let same_topic = log.series.iter().find(|(name, _)| {
        let (topic, field) = name.split_once('.').unwrap_or(("", name.as_str()));
        field == doc.name && topic_base(topic) == doc.message_type
    });
    if let Some((k, s)) = same_topic {
        return Some((k.as_str(), s));
    }
    let by_field: Vec<_> = log.series.iter().filter(|(name, _)| field_part(name) == doc.name).collect();
    match by_field.as_slice() {
        [(k, s)] => Some((k.as_str(), s)),
        _ => None,
    }
}

pub fn sanitize_file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

fn series_summary(doc: &ParameterDoc, name: &str, s: &TimeSeries) -> String {
    let finite: Vec<f64> = s.values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut text = format!("{name}: {}", doc.description.trim());
    if !finite.is_empty() {
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        text.push_str(&format!(
            " Logged {} samples, min {min:.3}, max {max:.3}, mean {mean:.3}.",
            s.len()
        ));
    }
    text
}

/// Everything `analyze` needs besides the request and the log.
pub struct AnalysisContext<'a> {
    pub params: &'a ParamIndex,
    pub embedder: &'a Embedder,
    pub gateway: &'a Gateway,
    pub spec: PromptSpec,
    pub detectors: &'a DetectorConfig,
}

/// Runs the analysis and writes plots under `out_dir/plots`. Backend
/// failures degrade the narrative; the detector verdicts are always filled.
pub fn analyze(
    request: &AnalysisRequest,
    log: &FlightLog,
    ctx: &AnalysisContext<'_>,
    out_dir: &Path,
) -> Result<AnalysisReport, AnalyticsError> {
    request.validate()?;
    ctx.detectors.validate()?;
    let plot_dir = out_dir.join("plots");
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| AnalyticsError::Io { path, source }
    };
    std::fs::create_dir_all(&plot_dir).map_err(io_err(&plot_dir))?;

    let mut goals = Vec::new();
    let mut backend_down = false;
    for goal in &request.goals {
        let hits = select_parameters(goal, ctx.params, ctx.embedder, request.k_params)?;
        let mut selected = Vec::new();
        let mut plots = Vec::new();
        let mut images = Vec::new();
        let mut context = Vec::new();
        for (doc, score) in hits {
            let found = resolve_series(log, &doc);
            if let Some((name, series)) = found {
                let spec = PlotSpec::single(name, name, series.clone());
                let (svg, png) = render_plot(&spec)?;
                let stem = sanitize_file_stem(name);
                for (ext, bytes) in [("svg", &svg), ("png", &png)] {
                    let p = plot_dir.join(format!("{stem}.{ext}"));
                    std::fs::write(&p, bytes).map_err(io_err(&p))?;
                }
                plots.push(format!("plots/{stem}.svg"));
                images.push(ImageAttachment::png(png));
                context.push(series_summary(&doc, name, series));
            }
            selected.push(SelectedParameter {
                series: found.map(|(n, _)| n.to_string()),
                doc,
                score,
            });
        }

        if images.is_empty() {
            log::warn!("no parameter selected for {goal:?} is present in the log");
            goals.push(GoalAnalysis {
                goal: goal.clone(),
                selected,
                plots,
                narrative: String::new(),
                context,
                notice: Some("no matching parameters: none of the selected parameters appear in the log".into()),
            });
            continue;
        }

        let narrative = if backend_down {
            NARRATIVE_UNAVAILABLE.to_string()
        } else {
            let chunks = selected
                .iter()
                .zip(&context)
                .map(|(p, text)| ContextChunk {
                    source_id: p.series.clone().unwrap_or_else(|| p.doc.key()),
                    text: text.clone(),
                })
                .collect();
            let spec = ctx.spec.clone().with_user_goals(goal.clone()).with_context(chunks);
            let prompt = assemble(&spec)?;
            match ctx.gateway.complete_vision(&[ChatMessage::user_with_images(prompt, images)]) {
                Ok(text) => text.trim().to_string(),
                Err(e) => {
                    log::warn!("vision call for {goal:?} failed: {e}");
                    if matches!(e, LlmError::BackendUnavailable { .. } | LlmError::Timeout { .. }) {
                        backend_down = true;
                    }
                    NARRATIVE_UNAVAILABLE.to_string()
                }
            }
        };
        goals.push(GoalAnalysis {
            goal: goal.clone(),
            selected,
            plots,
            narrative,
            context,
            notice: None,
        });
    }

    let narrative_available = goals
        .iter()
        .any(|g| g.notice.is_none() && g.narrative != NARRATIVE_UNAVAILABLE);
    let narrative = goals
        .iter()
        .map(|g| {
            let body = g.notice.as_deref().unwrap_or(&g.narrative);
            format!("### {}\n\n{}", g.goal, body)
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let selected_params = goals
        .iter()
        .flat_map(|g| g.selected.iter().map(|p| (p.doc.clone(), p.score)))
        .collect();
    let plots = goals.iter().flat_map(|g| g.plots.iter().cloned()).collect();

    Ok(AnalysisReport {
        request: request.clone(),
        goals,
        selected_params,
        plots,
        narrative,
        narrative_available,
        detector_verdicts: detect_sensor_failures(log, ctx.detectors),
        created_at: chrono::Utc::now().to_rfc3339(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flightlog::SourceFormat;
    use crate::gateway::{ScriptEntry, ScriptedResponses};
    use crate::prompting::{builtin_spec, AgentKind};

    fn doc(name: &str, mt: &str, desc: &str) -> ParameterDoc {
        ParameterDoc {
            name: name.into(),
            message_type: mt.into(),
            description: desc.into(),
            source_file: format!("{mt}.msg"),
            flagged: false,
        }
    }

    fn baro_log() -> FlightLog {
        let mut log = FlightLog::new(0, SourceFormat::Csv);
        let ts: Vec<u64> = (0..50).map(|i| i * 100_000).collect();
        let vals = (0..50).map(|i| if i >= 30 { 75.0 } else { 50.0 }).collect();
        log.series.insert("vehicle_air_data.baro_alt_meter".into(), TimeSeries::new(ts, vals).unwrap());
        log
    }

    #[test]
    fn analyze_barometer_goal() {
        let idx = ParamIndex::build(
            vec![
                doc("baro_alt_meter", "vehicle_air_data", "Altitude above MSL calculated from temperature compensated baro sensor data"),
                doc("satellites_used", "sensor_gps", "Number of satellites used"),
                doc("alt", "vehicle_gps_position", "GPS altitude"),
            ],
            &Embedder::Hash,
        )
        .unwrap();
        let gw = Gateway::scripted(ScriptedResponses::new(
            vec![ScriptEntry::new("altitude", "The sudden spike in altitude readings is a sensor error.")],
            "nothing notable",
        ));
        let cfg = DetectorConfig::default();
        let ctx = AnalysisContext {
            params: &idx,
            embedder: &Embedder::Hash,
            gateway: &gw,
            spec: builtin_spec(AgentKind::AnalyticsAuto),
            detectors: &cfg,
        };
        let dir = tempfile::tempdir().unwrap();
        let mut req = AnalysisRequest::automated(vec!["Unexpected altitude change".into()], "log1");
        req.k_params = 2;
        let rep = analyze(&req, &baro_log(), &ctx, dir.path()).unwrap();
        assert!(rep.narrative.contains("### Unexpected altitude change"));
        assert!(rep.narrative.contains("sudden spike in altitude readings"));
        assert_eq!(rep.failed_sensors(), [Sensor::Barometer]);
        assert_eq!(rep.plots, ["plots/vehicle_air_data.baro_alt_meter.svg"]);
        assert!(dir.path().join("plots/vehicle_air_data.baro_alt_meter.png").exists());
        assert_eq!(rep.selected_params.len(), 2);
        assert!(rep.goals[0].selected[0].series.is_none());
    }

    #[test]
    fn request_validation() {
        assert!(matches!(AnalysisRequest::automated(vec![], "l").validate(), Err(AnalyticsError::NoGoals)));
        let mut r = AnalysisRequest::interactive("q?", "l");
        r.goals.push("again".into());
        assert!(matches!(r.validate(), Err(AnalyticsError::InteractiveGoalCount(2))));
        assert!(AnalysisRequest::automated(vec!["  ".into()], "l").validate().is_err());
    }

    #[test]
    fn resolves_other_instance_and_bare_field() {
        let mut log = FlightLog::new(0, SourceFormat::Ulog);
        let s = TimeSeries::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        log.series.insert("battery_status_1.remaining".into(), s.clone());
        log.series.insert("remaining_flight_time".into(), s);
        let d = doc("remaining", "battery_status", "");
        assert_eq!(resolve_series(&log, &d).unwrap().0, "battery_status_1.remaining");
        assert!(resolve_series(&log, &doc("voltage_v", "battery_status", "")).is_none());
        assert_eq!(sanitize_file_stem("t.accel_bias[0]"), "t.accel_bias_0_");
    }
}
