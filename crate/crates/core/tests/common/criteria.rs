//! One check per acceptance criterion. Each returns a short summary on
//! success and the reason on failure.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ast_core::analytics::{detect_sensor_failures, DetectorConfig, Sensor};
use ast_core::evaluation::{context_precision, diversity_of_texts, jaccard, Evaluator};
use ast_core::fixtures;
use ast_core::flightlog::{parse_ulog, render_plot, write_ulog, PlotSeries, PlotSpec, TimeSeries};
use ast_core::gateway::{Gateway, ScriptEntry, ScriptedResponses};
use ast_core::knowledge::{parse_msg_definitions, DocumentChunk, Embedder, VectorIndex};
use ast_core::prompting::SCENARIO_SAMPLE;
use ast_core::scenario::parse_blueprint;
use ast_core::scriptgen::{validate_mission_value, validate_sim_settings_value, RuleSet, ScriptAgent, ScriptKind};
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

use super::{cases, gen, oracle};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

pub fn validator_suite() -> Outcome {
    let start = Instant::now();
    let mission = RuleSet::default_mission();
    let env = RuleSet::default_env();
    let mut checked = 0;
    for (kind, list) in [("mission", cases::mission_cases()), ("settings", cases::settings_cases())] {
        for c in list {
            let r = if kind == "mission" {
                validate_mission_value(&c.doc, &mission)
            } else {
                validate_sim_settings_value(&c.doc, &env)
            };
            let ids: BTreeSet<&str> = r.rule_ids().into_iter().collect();
            ensure(!r.ok && ids == BTreeSet::from([c.expect]), || {
                format!("{kind} case {:?}: expected only {}, got {ids:?}\n{}", c.name, c.expect, r.describe())
            })?;
            checked += 1;
        }
    }
    for (name, is_mission, doc) in cases::boundary_cases() {
        let r = if is_mission {
            validate_mission_value(&doc, &mission)
        } else {
            validate_sim_settings_value(&doc, &env)
        };
        ensure(r.ok, || format!("boundary {name:?} rejected: {}", r.describe()))?;
        checked += 1;
    }
    for (name, is_mission, doc) in [
        ("base plan", true, cases::base_plan()),
        ("base settings", false, cases::base_settings()),
    ] {
        let r = if is_mission {
            validate_mission_value(&doc, &mission)
        } else {
            validate_sim_settings_value(&doc, &env)
        };
        ensure(r.ok, || format!("{name} rejected: {}", r.describe()))?;
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("{checked} documents classified in {:?}", start.elapsed()))
}

fn plan_with_alt(alt: f64) -> String {
    let mut doc = cases::base_plan();
    doc["mission"]["items"][1]["Altitude"] = alt.into();
    doc["mission"]["items"][1]["params"][6] = alt.into();
    doc.to_string()
}

pub fn regeneration_loop() -> Outcome {
    let blueprint = parse_blueprint(SCENARIO_SAMPLE).map_err(|e| format!("sample blueprint: {e}"))?;
    let rules = RuleSet::default_mission();

    let gw = Gateway::scripted(ScriptedResponses::new(
        vec![ScriptEntry::new("VALIDATION ERRORS", plan_with_alt(80.0))],
        plan_with_alt(150.0),
    ));
    let v = ScriptAgent::new(ScriptKind::Mission, &gw)
        .generate_validated(&blueprint, &rules, 3)
        .map_err(|e| e.to_string())?;
    ensure(v.report.ok && v.attempts_used == 2 && v.artifact.is_some(), || {
        format!("fix-on-retry: ok={} attempts={}", v.report.ok, v.attempts_used)
    })?;
    ensure(v.prompts.len() == 2 && v.prompts[1].contains("VALIDATION ERRORS") && v.prompts[1].contains("altitude_max"), || {
        "retry prompt lacks the violation list".into()
    })?;

    let gw = Gateway::scripted(ScriptedResponses::new(vec![], plan_with_alt(150.0)));
    for max in [1, 3, 5] {
        let v = ScriptAgent::new(ScriptKind::Mission, &gw)
            .generate_validated(&blueprint, &rules, max)
            .map_err(|e| e.to_string())?;
        ensure(!v.report.ok && v.attempts_used == max && v.prompts.len() == max as usize, || {
            format!("always failing, max {max}: ok={} attempts={}", v.report.ok, v.attempts_used)
        })?;
        ensure(v.report.rule_ids() == ["altitude_max"], || format!("final report {:?}", v.report.rule_ids()))?;
    }
    Ok("fixed on attempt 2; always-failing stops at max_attempts".into())
}

pub fn ulog_round_trip() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&gen::flight_log(), |log| {
            let bytes = write_ulog(&log).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
            let back = parse_ulog(&bytes).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert!(back.bitwise_eq(&log), "round trip differs");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(5))?;
    Ok(format!("100 logs bit-exact in {:?}", start.elapsed()))
}

pub fn sensor_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = DetectorConfig::default();
    let clean: Vec<Sensor> = detect_sensor_failures(&fixtures::synthetic_log(None), &cfg)
        .into_iter()
        .filter(|v| v.failed)
        .map(|v| v.sensor)
        .collect();
    ensure(clean.is_empty(), || format!("clean log flagged {clean:?}"))?;
    for s in Sensor::ALL {
        let verdicts = detect_sensor_failures(&fixtures::synthetic_log(Some(s)), &cfg);
        ensure(verdicts.len() == 7, || format!("{} verdicts", verdicts.len()))?;
        let failed: Vec<Sensor> = verdicts.iter().filter(|v| v.failed).map(|v| v.sensor).collect();
        ensure(failed == [s], || format!("{s:?} injected, flagged {failed:?}"))?;
    }
    within(start, Duration::from_secs(2))?;
    Ok(format!("7/7 exact, clean log unflagged, {:?}", start.elapsed()))
}

pub fn retrieval() -> Outcome {
    let embedder = Embedder::Hash;
    let chunks = fixtures::CORPUS
        .iter()
        .map(|(id, text)| {
            let source = id.split('/').next().unwrap_or_default();
            DocumentChunk::embed(*id, source, text.trim(), &embedder)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let index = VectorIndex::build(chunks).map_err(|e| e.to_string())?;
    let labels = fixtures::labels();
    let docs: Vec<(&str, &str)> = fixtures::CORPUS.iter().map(|(id, t)| (*id, t.trim())).collect();
    ensure(labels.0.len() == 5, || format!("{} labeled queries", labels.0.len()))?;
    let mut worst = 1.0f64;
    for (query, relevant) in &labels.0 {
        let hits = index.search(&embedder, query, 5).map_err(|e| e.to_string())?;
        let got: Vec<&str> = hits.iter().map(|h| h.chunk.id.as_str()).collect();
        let want: Vec<&str> = oracle::rank(query, &docs, 5).into_iter().map(|(id, _)| id).collect();
        ensure(got == want, || format!("{query:?}: index {got:?}, oracle {want:?}"))?;
        let expected = oracle::precision(&want, relevant);
        let retrieved: Vec<String> = got.iter().map(|s| s.to_string()).collect();
        let p = context_precision(&retrieved, &labels, query).map_err(|e| e.to_string())?;
        ensure((p.value - expected).abs() < 1e-12, || format!("{query:?}: precision {} vs {expected}", p.value))?;
        ensure(p.value >= 0.8, || format!("{query:?}: precision {} below 0.8", p.value))?;
        worst = worst.min(p.value);
    }
    Ok(format!("5 queries match the oracle ranking, min precision {worst}"))
}

pub fn metrics() -> Outcome {
    let j = jaccard("alpha beta", "beta gamma");
    ensure(j == 1.0 / 3.0, || format!("jaccard {j}"))?;
    let same = ["the drone flies over the city"; 5];
    let d = diversity_of_texts("x", &same).map_err(|e| e.to_string())?;
    ensure(d.mean == 1.0, || format!("identical diversity {}", d.mean))?;
    let disjoint = ["alpha one", "bravo two", "charlie three", "delta four", "echo five"];
    let d = diversity_of_texts("x", &disjoint).map_err(|e| e.to_string())?;
    ensure(d.mean == 0.0, || format!("disjoint diversity {}", d.mean))?;

    let ev = Evaluator::fixture();
    let ctx = vec![
        "Strong gusts pushed the quadcopter off course near the tower. The pilot landed safely.".to_string(),
    ];
    let f = ev
        .faithfulness("Strong gusts pushed the quadcopter off course near the tower.", &ctx)
        .map_err(|e| e.to_string())?;
    ensure(f == 1.0, || format!("copied-sentence faithfulness {f}"))?;
    let f = ev.faithfulness("Zebras graze quietly in savanna meadows.", &ctx).map_err(|e| e.to_string())?;
    ensure(f == 0.0, || format!("disjoint faithfulness {f}"))?;

    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let text = "[a-z ]{1,40}";
    runner
        .run(&(text, text, text), |(a, b, c)| {
            let j = jaccard(&a, &b);
            proptest::prop_assert!((0.0..=1.0).contains(&j));
            if let Ok(d) = diversity_of_texts("x", &[&a, &b, &c]) {
                proptest::prop_assert!((0.0..=1.0).contains(&d.mean));
            }
            if let Ok(f) = ev.faithfulness(&a, &[b.clone(), c.clone()]) {
                proptest::prop_assert!((0.0..=1.0).contains(&f));
            }
            if let Ok(r) = ev.response_relevancy(&a, &b) {
                proptest::prop_assert!((0.0..=1.0).contains(&r));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("exact values hold; 200 random inputs stay in [0, 1]".into())
}

fn ast(data: &Path, args: &[&str]) -> Result<Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ast"))
        .arg("--mock")
        .arg("--json")
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .output()
        .map_err(|e| format!("spawn ast: {e}"))?;
    if !out.status.success() {
        return Err(format!("ast {args:?} exited {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("ast {args:?} output: {e}"))
}

fn keys(v: &Value) -> BTreeSet<&str> {
    v.as_object().map(|o| o.keys().map(String::as_str).collect()).unwrap_or_default()
}

fn expect_keys(v: &Value, want: &[&str], what: &str) -> Result<(), String> {
    let got = keys(v);
    let want: BTreeSet<&str> = want.iter().copied().collect();
    ensure(got == want, || format!("{what} keys {got:?}, expected {want:?}"))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");

    let m = ast(&data, &["run", "--goal", "city surveillance"])?;
    ensure(m["stage"] == "awaiting_approval", || format!("after run: {}", m["stage"]))?;
    let id = m["run_id"].as_str().ok_or("no run_id")?.to_string();
    let m = ast(&data, &["approve", &id])?;
    ensure(m["stage"] == "scripts_validated", || format!("after approve: {}", m["stage"]))?;

    let log = tmp.path().join("flight.ulg");
    let bytes = write_ulog(&fixtures::synthetic_log(Some(Sensor::Barometer))).map_err(|e| e.to_string())?;
    std::fs::write(&log, bytes).map_err(|e| e.to_string())?;
    let m = ast(&data, &["ingest-log", &id, log.to_str().ok_or("path")?])?;
    ensure(m["stage"] == "evaluated", || format!("after ingest: {} {}", m["stage"], m["failure"]))?;

    let run_dir = data.join("runs").join(&id);
    let artifacts = m["artifact_paths"].as_object().ok_or("no artifact_paths")?;
    let names: BTreeSet<&str> = artifacts.keys().map(String::as_str).collect();
    let want: BTreeSet<&str> = [
        "blueprint",
        "mission_plan",
        "sim_settings",
        "validation",
        "analysis_report",
        "eval",
        "manifest",
    ]
    .into();
    ensure(names == want, || format!("artifact set {names:?}"))?;
    for rel in artifacts.values() {
        let p = run_dir.join(rel.as_str().ok_or("artifact path")?);
        ensure(p.is_file(), || format!("missing {}", p.display()))?;
    }

    let plan = read_json(&run_dir.join(artifacts["mission_plan"].as_str().unwrap_or_default()))?;
    let mission = &plan["mission"];
    expect_keys(mission, &["cruiseSpeed", "hoverSpeed", "items", "plannedHomePosition"], "mission")?;
    let items = mission["items"].as_array().ok_or("items not an array")?;
    ensure(!items.is_empty(), || "no mission items".into())?;
    for it in items {
        expect_keys(
            it,
            &["AMSLAltAboveTerrain", "Altitude", "AltitudeMode", "autoContinue", "command", "frame", "params", "type"],
            "mission item",
        )?;
    }
    let home = &mission["plannedHomePosition"];
    ensure(home[0] == 40.7128 && home[1] == -74.006, || format!("home {home}"))?;
    let with_nyc = items.iter().any(|it| it["params"][4] == 40.7128 && it["params"][5] == -74.006);
    ensure(with_nyc, || "no item at the NYC coordinates".into())?;
    let r = validate_mission_value(&plan, &RuleSet::default_mission());
    ensure(r.ok, || r.describe())?;

    let settings = read_json(&run_dir.join(artifacts["sim_settings"].as_str().unwrap_or_default()))?;
    expect_keys(&settings, &["SimulatorSettings", "Vehicles"], "settings")?;
    expect_keys(&settings["SimulatorSettings"], &["Weather"], "SimulatorSettings")?;
    let weather = keys(&settings["SimulatorSettings"]["Weather"]);
    let allowed: BTreeSet<&str> = ["RainIntensity", "WindSpeed", "WindDirection", "Visibility", "LightIntensity"].into();
    ensure(weather.is_subset(&allowed) && weather.contains("WindSpeed"), || format!("Weather keys {weather:?}"))?;
    let vehicles = settings["Vehicles"].as_object().ok_or("Vehicles not an object")?;
    ensure(!vehicles.is_empty(), || "no vehicles".into())?;
    for v in vehicles.values() {
        expect_keys(v, &["VehicleType", "Pose", "HomeLocation"], "vehicle")?;
        expect_keys(&v["Pose"], &["X", "Y", "Z", "Roll", "Pitch", "Yaw"], "Pose")?;
        expect_keys(&v["HomeLocation"], &["Latitude", "Longitude", "Altitude"], "HomeLocation")?;
    }
    let r = validate_sim_settings_value(&settings, &RuleSet::default_env());
    ensure(r.ok, || r.describe())?;

    within(start, Duration::from_secs(10))?;
    Ok(format!("run {id} evaluated in {:?}", start.elapsed()))
}

fn plot_spec() -> PlotSpec {
    let ts: Vec<u64> = (0..500).map(|i| i * 100_000).collect();
    let a: Vec<f64> = ts.iter().map(|t| (*t as f64 / 3e6).sin() * 10.0).collect();
    let b: Vec<f64> = ts.iter().map(|t| (*t as f64 / 1e6).cos() + if *t == 2_000_000 { f64::NAN } else { 0.0 }).collect();
    PlotSpec::new(
        "Barometer vs GPS altitude",
        "m",
        vec![
            PlotSeries { label: "baro".into(), series: TimeSeries { timestamps: ts.clone(), values: a } },
            PlotSeries { label: "gps".into(), series: TimeSeries { timestamps: ts, values: b } },
        ],
    )
}

pub fn plot_determinism() -> Outcome {
    let (svg1, png1) = render_plot(&plot_spec()).map_err(|e| e.to_string())?;
    let (svg2, png2) = render_plot(&plot_spec()).map_err(|e| e.to_string())?;
    ensure(svg1 == svg2, || "SVG differs between runs".into())?;
    ensure(png1 == png2, || "PNG differs between runs".into())?;
    ensure(png1.starts_with(b"\x89PNG\r\n\x1a\n"), || "PNG signature missing".into())?;
    ensure(String::from_utf8_lossy(&svg1).contains("<svg"), || "not an SVG".into())?;
    Ok(format!("SVG {} bytes, PNG {} bytes, identical", svg1.len(), png1.len()))
}

pub fn msg_definitions() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("SensorAccelTest.msg");
    std::fs::write(&path, cases::MSG_FIXTURE).map_err(|e| e.to_string())?;
    let parsed = parse_msg_definitions(&[path]).map_err(|e| e.to_string())?;
    ensure(parsed.malformed.is_empty(), || format!("malformed lines {:?}", parsed.malformed))?;
    ensure(parsed.docs.len() == 14, || format!("{} docs", parsed.docs.len()))?;
    for (doc, (name, desc)) in parsed.docs.iter().zip(cases::MSG_EXPECTED) {
        ensure(doc.name == name && doc.description == desc, || {
            format!("got {:?} {:?}, expected {name:?} {desc:?}", doc.name, doc.description)
        })?;
        ensure(doc.flagged == desc.is_empty(), || format!("{name}: flagged {}", doc.flagged))?;
        ensure(doc.message_type == "sensor_accel_test", || format!("message type {}", doc.message_type))?;
    }
    Ok("14 docs with expected descriptions, one flagged".into())
}

pub type Check = fn() -> Outcome;

pub const ALL: [(&str, Check); 9] = [
    ("validator_suite", validator_suite),
    ("regeneration_loop", regeneration_loop),
    ("ulog_round_trip", ulog_round_trip),
    ("sensor_failure_oracle", sensor_oracle),
    ("retrieval_precision", retrieval),
    ("text_metrics", metrics),
    ("end_to_end_mock_run", end_to_end),
    ("plot_determinism", plot_determinism),
    ("msg_definitions", msg_definitions),
];
