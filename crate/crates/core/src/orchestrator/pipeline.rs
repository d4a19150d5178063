use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytics::{self, AnalysisContext, AnalysisReport, AnalysisRequest, DetectorConfig};
use crate::evaluation::{EvalItem, EvalReport, Evaluator, RelevanceLabels};
use crate::fixtures;
use crate::gateway::{BackendConfig, Gateway, ScriptedResponses};
use crate::knowledge::{load_jsonl, Embedder, ParamIndex, VectorIndex};
use crate::prompting::{AgentKind, PromptPack};
use crate::scenario::{FeedbackNote, ScenarioAgent, ScenarioBlueprint, ScenarioError};
use crate::scriptgen::{validation_record, RuleSet, ScriptAgent, ScriptError, ScriptKind, Validated};

use super::config::{EmbedderKind, PipelineConfig};
use super::manifest::{ConfigSnapshot, RunManifest, Stage};
use super::store::{read_json, write_json, LogRecord, RunStore, MANIFEST_FILE};
use super::{PipelineError, CODE_BACKEND_UNAVAILABLE, CODE_VALIDATION_FAILED};

/// Artifact name and its path inside a finished run directory.
pub const ARTIFACT_SET: [(&str, &str); 7] = [
    ("blueprint", "blueprint.json"),
    ("mission_plan", "mission.plan.json"),
    ("sim_settings", "sim.settings.json"),
    ("validation", "validation.json"),
    ("analysis_report", "analysis/report.json"),
    ("eval", "eval.json"),
    ("manifest", MANIFEST_FILE),
];

fn artifact_path(name: &str) -> &'static str {
    ARTIFACT_SET.iter().find(|(n, _)| *n == name).map(|(_, p)| *p).expect("known artifact")
}

/// Result of an interactive analytics query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub log_id: String,
    pub seq: u32,
    /// Paths relative to the data directory.
    pub report_path: String,
    pub plot_paths: Vec<String>,
    pub report: AnalysisReport,
}

fn scenario_failure(e: &ScenarioError) -> &'static str {
    match e {
        ScenarioError::BackendUnavailable(_) => CODE_BACKEND_UNAVAILABLE,
        ScenarioError::Llm(_) => "BackendError",
        ScenarioError::UnparseableBlueprint(_) => "UnparseableBlueprint",
        ScenarioError::Incomplete(_) => "IncompleteBlueprint",
        ScenarioError::Knowledge(_) => "KnowledgeError",
        _ => "ScenarioError",
    }
}

fn script_failure(e: &ScriptError) -> &'static str {
    match e {
        ScriptError::BackendUnavailable(_) => CODE_BACKEND_UNAVAILABLE,
        ScriptError::Llm(_) => "BackendError",
        _ => "ScriptError",
    }
}

/// Prose form of a blueprint, used as the evaluated response.
pub fn blueprint_text(bp: &ScenarioBlueprint) -> String {
    let env = bp.environment.summary();
    [bp.use_case.as_str(), env.as_str(), bp.mission_description.as_str()]
        .iter()
        .map(|s| s.trim().trim_end_matches('.'))
        .filter(|s| !s.is_empty())
        .map(|s| format!("{s}. "))
        .collect::<String>()
        + &format!("Test properties: {}.", bp.test_properties.join(", "))
}

pub struct Pipeline {
    pub config: PipelineConfig,
    store: RunStore,
    chat: Arc<Gateway>,
    vision: Arc<Gateway>,
    critic: Arc<Gateway>,
    embedder: Embedder,
    index: VectorIndex,
    params: ParamIndex,
    mission_rules: RuleSet,
    env_rules: RuleSet,
    prompts: PromptPack,
    detectors: DetectorConfig,
    labels: Option<RelevanceLabels>,
}

fn cfg_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::InvalidConfig(e.to_string())
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let store = RunStore::open(&config.data_dir)?;

        let scripted = match &config.scripted_responses {
            Some(p) => Some(ScriptedResponses::load(p).map_err(cfg_err)?),
            None => None,
        };
        let build = |b: Option<&BackendConfig>| -> Result<Arc<Gateway>, PipelineError> {
            if config.mock {
                return Ok(Arc::new(fixtures::mock_gateway()));
            }
            let b = b.or(config.chat.as_ref()).expect("validated chat backend");
            Gateway::from_config(b.clone(), scripted.clone()).map(Arc::new).map_err(cfg_err)
        };
        let chat = build(config.chat.as_ref())?;
        let vision = build(config.vision.as_ref())?;
        let critic = build(config.critic.as_ref())?;
        let embedder = match config.embedder {
            EmbedderKind::Hash => Embedder::Hash,
            EmbedderKind::Remote => Embedder::Remote(chat.clone()),
        };

        let index_path = config.corpus_index_path();
        let index = if index_path.is_file() {
            VectorIndex::load(&index_path)?
        } else if config.mock {
            let chunks = fixtures::CORPUS
                .iter()
                .map(|(id, text)| {
                    let source = id.split('/').next().unwrap_or_default();
                    crate::knowledge::DocumentChunk::embed(*id, source, text.trim(), &embedder)
                })
                .collect::<Result<Vec<_>, _>>()?;
            VectorIndex::build(chunks)?
        } else {
            return Err(cfg_err(format!(
                "no incident index at {}; run ingest-corpus first",
                index_path.display()
            )));
        };

        let kb_path = config.param_kb_path();
        let docs = if kb_path.is_file() {
            load_jsonl(&kb_path)?
        } else if config.mock {
            fixtures::param_docs()
        } else {
            return Err(cfg_err(format!(
                "no parameter knowledge base at {}; run build-param-kb first",
                kb_path.display()
            )));
        };
        let params = ParamIndex::build(docs, &embedder)?;

        let mut mission_rules = match &config.mission_rules {
            Some(p) => RuleSet::load(p).map_err(cfg_err)?,
            None => RuleSet::default_mission(),
        };
        if !config.use_case_rules.is_empty() {
            let ids: Vec<&str> = config.use_case_rules.iter().map(String::as_str).collect();
            let extra = RuleSet::use_case().only(&ids);
            if extra.rules().count() != ids.len() {
                return Err(cfg_err(format!("unknown use-case rule in {:?}", config.use_case_rules)));
            }
            mission_rules = mission_rules.merged(extra).map_err(cfg_err)?;
        }
        let env_rules = match &config.env_rules {
            Some(p) => RuleSet::load(p).map_err(cfg_err)?,
            None => RuleSet::default_env(),
        };
        let prompts = match &config.prompt_pack {
            Some(p) => PromptPack::load(p).map_err(cfg_err)?,
            None => PromptPack::default(),
        };
        let detectors = match &config.detector_config {
            Some(p) => DetectorConfig::load(p)?,
            None => DetectorConfig::default(),
        };
        let labels = match &config.labels {
            Some(p) => Some(RelevanceLabels::load(p)?),
            None if config.mock => Some(fixtures::labels()),
            None => None,
        };
        Ok(Self {
            config,
            store,
            chat,
            vision,
            critic,
            embedder,
            index,
            params,
            mission_rules,
            env_rules,
            prompts,
            detectors,
            labels,
        })
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            mock: self.config.mock,
            chat_model: self.chat.config().model_id.clone(),
            vision_model: self.vision.config().model_id.clone(),
            critic_model: self.critic.config().model_id.clone(),
            chat_temperature: self.chat.config().temperature,
            embedder: self.embedder.name().to_string(),
            mission_rules: self.mission_rules.rules().map(|r| r.id.clone()).collect(),
            env_rules: self.env_rules.rules().map(|r| r.id.clone()).collect(),
            k_retrieval: self.config.k_retrieval,
            k_params: self.config.k_params,
            max_attempts: self.config.max_attempts,
        }
    }

    fn scenario_agent(&self) -> ScenarioAgent<'_> {
        let mut agent = ScenarioAgent::new(&self.index, &self.embedder, &self.chat);
        agent.spec = self.prompts.spec(AgentKind::Scenario);
        agent.k = self.config.k_retrieval;
        agent
    }

    fn expect_stage(m: &RunManifest, allowed: &[Stage]) -> Result<(), PipelineError> {
        if allowed.contains(&m.stage) {
            Ok(())
        } else {
            Err(PipelineError::WrongStage {
                run_id: m.run_id.clone(),
                stage: m.stage,
                expected: allowed.to_vec(),
            })
        }
    }

    fn advance(m: &mut RunManifest, next: Stage) -> Result<(), PipelineError> {
        m.advance(next).map_err(|(from, _)| PipelineError::WrongStage {
            run_id: m.run_id.clone(),
            stage: from,
            expected: vec![next],
        })
    }

    fn fail(&self, m: &mut RunManifest, code: &str, message: String) -> PipelineError {
        log::error!("run {} failed in {}: {message}", m.run_id, m.stage);
        m.fail(code, message);
        if let Err(e) = self.store.save(m) {
            return e;
        }
        PipelineError::RunFailed {
            run_id: m.run_id.clone(),
            failure: m.failure.clone().expect("failure recorded"),
        }
    }

    fn put_artifact<T: Serialize>(&self, m: &mut RunManifest, name: &str, value: &T) -> Result<(), PipelineError> {
        let rel = artifact_path(name);
        write_json(&self.store.run_dir(&m.run_id).join(rel), value)?;
        m.artifact_paths.insert(name.to_string(), rel.to_string());
        Ok(())
    }

    pub fn load(&self, run_id: &str) -> Result<RunManifest, PipelineError> {
        self.store.load(run_id)
    }

    pub fn list(&self) -> Result<Vec<RunManifest>, PipelineError> {
        self.store.list()
    }

    pub fn blueprint(&self, run_id: &str) -> Result<ScenarioBlueprint, PipelineError> {
        let m = self.store.load(run_id)?;
        let rel = m.artifact("blueprint").ok_or_else(|| PipelineError::UnknownArtifact("blueprint".into()))?;
        read_json(&self.store.run_dir(run_id).join(rel))
    }

    /// Absolute path of a named artifact, or of any file inside the run
    /// directory given by relative path.
    pub fn artifact_file(&self, run_id: &str, name: &str) -> Result<PathBuf, PipelineError> {
        let m = self.store.load(run_id)?;
        let rel = m.artifact(name).map(str::to_string).unwrap_or_else(|| name.to_string());
        self.store
            .resolve(&format!("runs/{run_id}/{rel}"))
            .ok_or_else(|| PipelineError::UnknownArtifact(name.to_string()))
    }

    pub fn start_run(&self, user_goal: &str) -> Result<RunManifest, PipelineError> {
        let goal = user_goal.trim();
        if goal.is_empty() {
            return Err(PipelineError::EmptyGoal);
        }
        let run_id = ulid::Ulid::new().to_string();
        let mut m = RunManifest::new(run_id.clone(), goal.to_string(), self.snapshot());
        m.artifact_paths.insert("manifest".into(), MANIFEST_FILE.into());
        self.store.with_lock(&run_id, || {
            self.store.save(&m)?;
            match self.scenario_agent().generate(goal) {
                Ok(gen) => {
                    self.put_artifact(&mut m, "blueprint", &gen.blueprint)?;
                    Self::advance(&mut m, Stage::AwaitingApproval)?;
                    self.store.save(&m)?;
                    log::info!("run {run_id} drafted a blueprint after {} attempt(s)", gen.attempts);
                    Ok(m)
                }
                Err(e) => Err(self.fail(&mut m, scenario_failure(&e), e.to_string())),
            }
        })
    }

    pub fn submit_feedback(&self, run_id: &str, note: FeedbackNote) -> Result<RunManifest, PipelineError> {
        if note.text.trim().is_empty() {
            return Err(PipelineError::InvalidInput("feedback text must not be empty".into()));
        }
        self.store.with_lock(run_id, || {
            let mut m = self.store.load(run_id)?;
            Self::expect_stage(&m, &[Stage::AwaitingApproval])?;
            let prior = self.blueprint(run_id)?;
            match self.scenario_agent().refine(&prior, &note) {
                Ok(gen) => {
                    Self::advance(&mut m, Stage::BlueprintDrafted)?;
                    self.put_artifact(&mut m, "blueprint", &gen.blueprint)?;
                    m.revision_count += 1;
                    m.feedback.push(note);
                    Self::advance(&mut m, Stage::AwaitingApproval)?;
                    self.store.save(&m)?;
                    Ok(m)
                }
                Err(e) => Err(self.fail(&mut m, scenario_failure(&e), e.to_string())),
            }
        })
    }

    fn generate(&self, kind: ScriptKind, bp: &ScenarioBlueprint, rules: &RuleSet) -> Result<Validated, ScriptError> {
        let mut agent = ScriptAgent::new(kind, &self.chat);
        agent.spec = self.prompts.spec(kind.agent());
        agent.generate_validated(bp, rules, self.config.max_attempts)
    }

    /// Passes the stage gate, then generates and validates both scripts.
    pub fn approve(&self, run_id: &str) -> Result<RunManifest, PipelineError> {
        self.store.with_lock(run_id, || {
            let mut m = self.store.load(run_id)?;
            Self::expect_stage(&m, &[Stage::AwaitingApproval])?;
            let bp = self.blueprint(run_id)?;
            Self::advance(&mut m, Stage::Approved)?;
            self.store.save(&m)?;

            let mission = match self.generate(ScriptKind::Mission, &bp, &self.mission_rules) {
                Ok(v) => v,
                Err(e) => return Err(self.fail(&mut m, script_failure(&e), e.to_string())),
            };
            let env = match self.generate(ScriptKind::Env, &bp, &self.env_rules) {
                Ok(v) => v,
                Err(e) => return Err(self.fail(&mut m, script_failure(&e), e.to_string())),
            };
            for (name, v) in [("mission_plan", &mission), ("sim_settings", &env)] {
                let doc = match (&v.artifact, &v.document) {
                    (Some(a), _) => a.to_document(),
                    (None, Some(d)) => d.clone(),
                    (None, None) => serde_json::Value::Null,
                };
                self.put_artifact(&mut m, name, &doc)?;
            }
            Self::advance(&mut m, Stage::ScriptsGenerated)?;
            self.put_artifact(&mut m, "validation", &validation_record(&mission, &env))?;
            if !(mission.report.ok && env.report.ok) {
                let mut lines = Vec::new();
                if !mission.report.ok {
                    lines.push(format!("mission: {}", mission.report.describe()));
                }
                if !env.report.ok {
                    lines.push(format!("sim settings: {}", env.report.describe()));
                }
                return Err(self.fail(&mut m, CODE_VALIDATION_FAILED, lines.join("\n")));
            }
            Self::advance(&mut m, Stage::ScriptsValidated)?;
            self.store.save(&m)?;
            Ok(m)
        })
    }

    /// The scripts were handed to the simulator; a log is expected next.
    pub fn mark_executed(&self, run_id: &str) -> Result<RunManifest, PipelineError> {
        self.store.with_lock(run_id, || {
            let mut m = self.store.load(run_id)?;
            Self::expect_stage(&m, &[Stage::ScriptsValidated])?;
            Self::advance(&mut m, Stage::AwaitingLog)?;
            self.store.save(&m)?;
            Ok(m)
        })
    }

    fn analysis_context(&self, agent: AgentKind) -> AnalysisContext<'_> {
        AnalysisContext {
            params: &self.params,
            embedder: &self.embedder,
            gateway: &self.vision,
            spec: self.prompts.spec(agent),
            detectors: &self.detectors,
        }
    }

    /// Stores the log, runs the automated analysis over the blueprint's test
    /// properties and then the evaluation. Unparseable bytes leave the run
    /// untouched.
    pub fn ingest_flight_log(&self, run_id: &str, bytes: &[u8]) -> Result<RunManifest, PipelineError> {
        self.store.with_lock(run_id, || {
            let mut m = self.store.load(run_id)?;
            Self::expect_stage(&m, &[Stage::ScriptsValidated, Stage::AwaitingLog])?;
            let (record, log) = self.store.store_log(bytes, Some(run_id))?;
            if m.stage == Stage::ScriptsValidated {
                Self::advance(&mut m, Stage::AwaitingLog)?;
            }
            Self::advance(&mut m, Stage::LogIngested)?;
            m.log_id = Some(record.log_id.clone());
            self.store.save(&m)?;

            let bp = self.blueprint(run_id)?;
            let mut request = AnalysisRequest::automated(bp.test_properties.clone(), record.log_id.clone());
            request.k_params = self.config.k_params;
            let dir = self.store.run_dir(run_id).join("analysis");
            let report = match analytics::analyze(&request, &log, &self.analysis_context(AgentKind::AnalyticsAuto), &dir) {
                Ok(r) => r,
                Err(e) => return Err(self.fail(&mut m, "AnalysisFailed", e.to_string())),
            };
            if let Err(e) = analytics::write_report(&report, &dir) {
                return Err(self.fail(&mut m, "AnalysisFailed", e.to_string()));
            }
            m.artifact_paths.insert("analysis_report".into(), artifact_path("analysis_report").into());
            Self::advance(&mut m, Stage::Analyzed)?;
            self.store.save(&m)?;

            match self.evaluate_locked(&mut m, &bp, &report) {
                Ok(_) => {
                    Self::advance(&mut m, Stage::Evaluated)?;
                    self.store.save(&m)?;
                    Ok(m)
                }
                Err(e) => Err(self.fail(&mut m, "EvaluationFailed", e.to_string())),
            }
        })
    }

    fn eval_items(&self, m: &RunManifest, bp: &ScenarioBlueprint, report: &AnalysisReport) -> Vec<EvalItem> {
        let mut items = Vec::new();
        let contexts: Vec<(String, String)> = bp
            .provenance
            .iter()
            .filter_map(|id| self.index.get(id).map(|c| (id.clone(), c.text.clone())))
            .collect();
        if !contexts.is_empty() {
            items.push(EvalItem {
                id: "scenario".into(),
                query_id: Some(m.user_goal.clone()),
                query: m.user_goal.clone(),
                response: blueprint_text(bp),
                retrieved_ids: contexts.iter().map(|(id, _)| id.clone()).collect(),
                contexts: contexts.into_iter().map(|(_, t)| t).collect(),
            });
        }
        for (i, g) in report.goals.iter().enumerate() {
            if g.notice.is_some() || g.narrative == analytics::NARRATIVE_UNAVAILABLE || g.context.is_empty() {
                continue;
            }
            items.push(EvalItem {
                id: format!("analysis/{i}"),
                query_id: None,
                query: g.goal.clone(),
                response: g.narrative.clone(),
                contexts: g.context.clone(),
                retrieved_ids: Vec::new(),
            });
        }
        items
    }

    fn evaluate_locked(
        &self,
        m: &mut RunManifest,
        bp: &ScenarioBlueprint,
        report: &AnalysisReport,
    ) -> Result<EvalReport, PipelineError> {
        let items = self.eval_items(m, bp, report);
        let evaluator = Evaluator {
            config: self.config.eval.clone(),
            critic: Some(&self.critic),
        };
        let eval = evaluator.evaluate(&items, self.labels.as_ref())?;
        self.put_artifact(m, "eval", &eval)?;
        Ok(eval)
    }

    /// Recomputes `eval.json` for an analysed run.
    pub fn evaluate_run(&self, run_id: &str) -> Result<EvalReport, PipelineError> {
        self.store.with_lock(run_id, || {
            let mut m = self.store.load(run_id)?;
            Self::expect_stage(&m, &[Stage::Analyzed, Stage::Evaluated])?;
            let bp = self.blueprint(run_id)?;
            let report: AnalysisReport = read_json(&self.store.run_dir(run_id).join(artifact_path("analysis_report")))?;
            let eval = self.evaluate_locked(&mut m, &bp, &report)?;
            if m.stage == Stage::Analyzed {
                Self::advance(&mut m, Stage::Evaluated)?;
            }
            self.store.save(&m)?;
            Ok(eval)
        })
    }

    /// A log that belongs to no run, for the analytics console.
    pub fn ingest_log(&self, bytes: &[u8]) -> Result<LogRecord, PipelineError> {
        Ok(self.store.store_log(bytes, None)?.0)
    }

    pub fn list_logs(&self) -> Result<Vec<LogRecord>, PipelineError> {
        self.store.list_logs()
    }

    pub fn query_analytics(&self, log_id: &str, question: &str) -> Result<QueryOutcome, PipelineError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        let (_, log) = self.store.load_log(log_id)?;
        self.store.with_lock(&format!("log-{log_id}"), || {
            let seq = self.store.next_query_seq(log_id)?;
            let dir = self.store.analytics_dir(log_id);
            let out = dir.join(seq.to_string());
            let mut request = AnalysisRequest::interactive(question, log_id);
            request.k_params = self.config.k_params;
            let report = analytics::analyze(&request, &log, &self.analysis_context(AgentKind::AnalyticsInteractive), &out)?;
            write_json(&dir.join(format!("{seq}.json")), &report)?;
            std::fs::write(dir.join(format!("{seq}.md")), analytics::render_markdown(&report))
                .map_err(|e| PipelineError::Io(e.to_string()))?;
            let prefix = format!("analytics/{log_id}/{seq}");
            Ok(QueryOutcome {
                log_id: log_id.to_string(),
                seq,
                report_path: format!("analytics/{log_id}/{seq}.json"),
                plot_paths: report.plots.iter().map(|p| format!("{prefix}/{p}")).collect(),
                report,
            })
        })
    }
}
