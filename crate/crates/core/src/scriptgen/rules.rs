//! JSON rule engine. Rules address document values with a small selector
//! language (`$.a.b`, `[n]`, `[*]` over arrays, `.*` over object values) and
//! report every violation with a concrete path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ScriptError;
use crate::validation::{ValidationReport, Violation};

/// Tolerance for inclusive bounds, so bounds converted from mph or feet
/// accept the exact converted value.
pub const BOUND_EPSILON: f64 = 1e-9;
const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Speed,
    Length,
    Angle,
    Scalar,
}

/// Factor to SI (m/s, m), degrees for angles.
fn unit_factor(unit: &str) -> Option<(Dimension, f64)> {
    Some(match unit.trim().to_ascii_lowercase().as_str() {
        "m/s" | "mps" => (Dimension::Speed, 1.0),
        "mph" => (Dimension::Speed, 0.44704),
        "km/h" | "kph" => (Dimension::Speed, 1.0 / 3.6),
        "kn" | "kt" | "knots" => (Dimension::Speed, 1852.0 / 3600.0),
        "m" => (Dimension::Length, 1.0),
        "ft" => (Dimension::Length, 0.3048),
        "km" => (Dimension::Length, 1000.0),
        "mi" => (Dimension::Length, 1609.344),
        "deg" => (Dimension::Angle, 1.0),
        "rad" => (Dimension::Angle, 180.0 / std::f64::consts::PI),
        "" => (Dimension::Scalar, 1.0),
        _ => return None,
    })
}

fn si_unit(d: Dimension) -> &'static str {
    match d {
        Dimension::Speed => "m/s",
        Dimension::Length => "m",
        Dimension::Angle => "deg",
        Dimension::Scalar => "",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Key(String),
    Index(usize),
    Wild,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    toks: Vec<Tok>,
}

impl Selector {
    /// Parses `$.a.b[0][*].*`; relative selectors (`params[4]`, `[1]`,
    /// `HomeLocation.Latitude`) omit the `$`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let body = s.strip_prefix('$').unwrap_or(s);
        let chars: Vec<char> = body.chars().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        let mut expect_key = !body.starts_with(['.', '[']) && !body.is_empty();
        while i < chars.len() || expect_key {
            if expect_key || chars[i] == '.' {
                if !expect_key {
                    i += 1;
                }
                expect_key = false;
                if chars.get(i) == Some(&'*') {
                    toks.push(Tok::Wild);
                    i += 1;
                    continue;
                }
                let start = i;
                while i < chars.len() && chars[i] != '.' && chars[i] != '[' {
                    i += 1;
                }
                if i == start {
                    return Err(format!("empty key in selector {s:?}"));
                }
                toks.push(Tok::Key(chars[start..i].iter().collect()));
            } else if chars[i] == '[' {
                let close = chars[i..].iter().position(|&c| c == ']').map(|p| p + i).ok_or_else(|| format!("unclosed [ in {s:?}"))?;
                let inner: String = chars[i + 1..close].iter().collect();
                if inner == "*" {
                    toks.push(Tok::Wild);
                } else {
                    toks.push(Tok::Index(inner.parse().map_err(|_| format!("bad index {inner:?} in {s:?}"))?));
                }
                i = close + 1;
            } else {
                return Err(format!("unexpected {:?} in selector {s:?}", chars[i]));
            }
        }
        Ok(Self { toks })
    }

    /// Every location the selector reaches. A missing key or index yields
    /// its would-be path with `None`; wildcards over absent containers yield
    /// nothing.
    pub fn select<'v>(&self, root: &'v Value, base: &str) -> Vec<(String, Option<&'v Value>)> {
        let mut out = Vec::new();
        walk(root, &self.toks, base.to_string(), &mut out);
        out
    }
}

fn key_path(path: &str, key: &str) -> String {
    if key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        format!("{path}.{key}")
    } else {
        format!("{path}[{}]", Value::String(key.into()))
    }
}

fn walk<'v>(v: &'v Value, toks: &[Tok], path: String, out: &mut Vec<(String, Option<&'v Value>)>) {
    let Some((head, rest)) = toks.split_first() else {
        out.push((path, Some(v)));
        return;
    };
    match head {
        Tok::Key(k) => match v.as_object().and_then(|o| o.get(k)) {
            Some(child) => walk(child, rest, key_path(&path, k), out),
            None => out.push((key_path(&path, k), None)),
        },
        Tok::Index(i) => match v.as_array().and_then(|a| a.get(*i)) {
            Some(child) => walk(child, rest, format!("{path}[{i}]"), out),
            None => out.push((format!("{path}[{i}]"), None)),
        },
        Tok::Wild => match v {
            Value::Array(a) => {
                for (i, child) in a.iter().enumerate() {
                    walk(child, rest, format!("{path}[{i}]"), out);
                }
            }
            Value::Object(o) => {
                for (k, child) in o {
                    walk(child, rest, key_path(&path, k), out);
                }
            }
            _ => {}
        },
    }
}

/// Resolves a concrete path produced by [`Selector::select`].
pub fn resolve<'v>(root: &'v Value, path: &str) -> Option<&'v Value> {
    let sel = Selector::parse(path).ok()?;
    if sel.toks.contains(&Tok::Wild) {
        return None;
    }
    match sel.select(root, "$").pop() {
        Some((_, v)) => v,
        None => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    #[default]
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Number,
    Integer,
    String,
    Bool,
    Array,
    Object,
    Any,
}

impl FieldType {
    fn matches(self, v: &Value) -> bool {
        match self {
            FieldType::Number => v.is_number(),
            FieldType::Integer => v.is_i64() || v.is_u64() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
            FieldType::String => v.is_string(),
            FieldType::Bool => v.is_boolean(),
            FieldType::Array => v.is_array(),
            FieldType::Object => v.is_object(),
            FieldType::Any => true,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FieldType::Number => "number",
            FieldType::Integer => "integer",
            FieldType::String => "string",
            FieldType::Bool => "bool",
            FieldType::Array => "array",
            FieldType::Object => "object",
            FieldType::Any => "any value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRequirement {
    pub path: String,
    #[serde(rename = "type", default = "any_type")]
    pub field_type: FieldType,
    #[serde(default)]
    pub nullable: bool,
    #[serde(default)]
    pub optional: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_len: Option<usize>,
}

fn any_type() -> FieldType {
    FieldType::Any
}

fn default_command_field() -> String {
    "command".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTarget {
    pub base: String,
    pub lat: String,
    pub lon: String,
    /// Only elements whose command is listed are checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commands: Option<Vec<i64>>,
    #[serde(default = "default_command_field")]
    pub command_field: String,
    /// Missing or null coordinates count as violations.
    #[serde(default)]
    pub required: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeArgs {
    pub paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default)]
    pub min_exclusive: bool,
    #[serde(default)]
    pub max_exclusive: bool,
    /// Unit the bounds are written in.
    #[serde(default)]
    pub unit: String,
    /// Unit of the document values when `unit_field` is absent; SI by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_unit: Option<String>,
    /// Absolute path of a string naming the value unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_field: Option<String>,
    #[serde(default = "yes")]
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeRef {
    pub base: String,
    pub lat: String,
    pub lon: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum Predicate {
    Range(RangeArgs),
    LatLonValid { targets: Vec<GeoTarget> },
    Required { fields: Vec<FieldRequirement> },
    MaxDistanceFromHome {
        home: HomeRef,
        points: GeoTarget,
        max: f64,
        #[serde(default = "metres")]
        unit: String,
    },
    Custom {
        check: String,
        #[serde(flatten)]
        args: Map<String, Value>,
    },
}

fn metres() -> String {
    "m".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub predicate: Predicate,
    #[serde(default)]
    pub severity: Severity,
}

/// A rule with its bounds converted to SI.
#[derive(Debug, Clone)]
struct Compiled {
    rule: Rule,
    kind: CompiledKind,
}

#[derive(Debug, Clone)]
enum CompiledKind {
    Range {
        paths: Vec<Selector>,
        min: Option<f64>,
        max: Option<f64>,
        dim: Dimension,
        input_unit: String,
        unit_field: Option<String>,
    },
    Geo(Vec<(Selector, Selector, Selector, GeoTarget)>),
    Required(Vec<(Selector, FieldRequirement)>),
    Distance {
        home: (Selector, Selector, Selector),
        points: (Selector, Selector, Selector, GeoTarget),
        max_m: f64,
    },
    ValidWaypoints {
        items: Selector,
        lat: Selector,
        lon: Selector,
        altitude: Selector,
        commands: Vec<i64>,
        coords_optional: Vec<i64>,
        max_leg_m: Option<f64>,
    },
    FirstCommand {
        items: Selector,
        command: i64,
    },
    MinEntries {
        path: Selector,
        min: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetFile {
    #[serde(default)]
    pub name: String,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    pub name: String,
    compiled: Vec<Compiled>,
}

fn sel(s: &str, rule: &str) -> Result<Selector, ScriptError> {
    Selector::parse(s).map_err(|e| ScriptError::InvalidRuleSet(format!("rule {rule}: {e}")))
}

fn convert_bound(v: f64, unit: &str, rule: &str) -> Result<(f64, Dimension), ScriptError> {
    let (dim, f) = unit_factor(unit).ok_or_else(|| ScriptError::InvalidRuleSet(format!("rule {rule}: unknown unit {unit:?}")))?;
    Ok((v * f, dim))
}

fn geo_sels(t: &GeoTarget, rule: &str) -> Result<(Selector, Selector, Selector, GeoTarget), ScriptError> {
    Ok((sel(&t.base, rule)?, sel(&t.lat, rule)?, sel(&t.lon, rule)?, t.clone()))
}

fn arg_str<'a>(args: &'a Map<String, Value>, key: &str, rule: &str) -> Result<&'a str, ScriptError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ScriptError::InvalidRuleSet(format!("rule {rule}: missing string argument {key}")))
}

fn arg_ints(args: &Map<String, Value>, key: &str) -> Vec<i64> {
    args.get(key)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_i64).collect())
        .unwrap_or_default()
}

fn compile(rule: Rule) -> Result<Compiled, ScriptError> {
    let id = rule.id.clone();
    let kind = match &rule.predicate {
        Predicate::Range(a) => {
            if a.paths.is_empty() {
                return Err(ScriptError::InvalidRuleSet(format!("rule {id}: no paths")));
            }
            if a.min.is_none() && a.max.is_none() {
                return Err(ScriptError::InvalidRuleSet(format!("rule {id}: range needs min or max")));
            }
            let (_, dim) = convert_bound(0.0, &a.unit, &id)?;
            let min = a.min.map(|m| convert_bound(m, &a.unit, &id).map(|x| x.0)).transpose()?;
            let max = a.max.map(|m| convert_bound(m, &a.unit, &id).map(|x| x.0)).transpose()?;
            if let (Some(lo), Some(hi)) = (min, max) {
                if lo > hi {
                    return Err(ScriptError::InvalidRuleSet(format!("rule {id}: min exceeds max")));
                }
            }
            let input_unit = a.input_unit.clone().unwrap_or_else(|| si_unit(dim).into());
            match unit_factor(&input_unit) {
                Some((d, _)) if d == dim => {}
                _ => return Err(ScriptError::InvalidRuleSet(format!("rule {id}: input unit {input_unit:?} does not match {:?}", a.unit))),
            }
            CompiledKind::Range {
                paths: a.paths.iter().map(|p| sel(p, &id)).collect::<Result<_, _>>()?,
                min,
                max,
                dim,
                input_unit,
                unit_field: a.unit_field.clone(),
            }
        }
        Predicate::LatLonValid { targets } => {
            CompiledKind::Geo(targets.iter().map(|t| geo_sels(t, &id)).collect::<Result<_, _>>()?)
        }
        Predicate::Required { fields } => CompiledKind::Required(
            fields.iter().map(|f| Ok((sel(&f.path, &id)?, f.clone()))).collect::<Result<_, ScriptError>>()?,
        ),
        Predicate::MaxDistanceFromHome { home, points, max, unit } => {
            let (max_m, dim) = convert_bound(*max, unit, &id)?;
            if dim != Dimension::Length {
                return Err(ScriptError::InvalidRuleSet(format!("rule {id}: distance unit must be a length")));
            }
            CompiledKind::Distance {
                home: (sel(&home.base, &id)?, sel(&home.lat, &id)?, sel(&home.lon, &id)?),
                points: geo_sels(points, &id)?,
                max_m,
            }
        }
        Predicate::Custom { check, args } => match check.as_str() {
            "valid_waypoints" => {
                let max_leg_m = match args.get("max_leg").and_then(Value::as_f64) {
                    Some(v) => {
                        let unit = args.get("max_leg_unit").and_then(Value::as_str).unwrap_or("m");
                        Some(convert_bound(v, unit, &id)?.0)
                    }
                    None => None,
                };
                CompiledKind::ValidWaypoints {
                    items: sel(arg_str(args, "items", &id)?, &id)?,
                    lat: sel(arg_str(args, "lat", &id)?, &id)?,
                    lon: sel(arg_str(args, "lon", &id)?, &id)?,
                    altitude: sel(arg_str(args, "altitude", &id)?, &id)?,
                    commands: arg_ints(args, "commands"),
                    coords_optional: arg_ints(args, "coords_optional"),
                    max_leg_m,
                }
            }
            "first_command" => CompiledKind::FirstCommand {
                items: sel(arg_str(args, "items", &id)?, &id)?,
                command: args
                    .get("command")
                    .and_then(Value::as_i64)
                    .ok_or_else(|| ScriptError::InvalidRuleSet(format!("rule {id}: missing command")))?,
            },
            "min_entries" => CompiledKind::MinEntries {
                path: sel(arg_str(args, "path", &id)?, &id)?,
                min: args.get("min").and_then(Value::as_u64).unwrap_or(1) as usize,
            },
            other => return Err(ScriptError::InvalidRuleSet(format!("rule {id}: unknown custom check {other:?}"))),
        },
    };
    Ok(Compiled { rule, kind })
}

pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

struct Sink<'r> {
    rule: &'r Rule,
    errors: Vec<Violation>,
}

impl Sink<'_> {
    fn push(&mut self, path: String, message: String, observed: Option<&Value>) {
        self.errors.push(Violation {
            rule_id: self.rule.id.clone(),
            json_path: path,
            message,
            observed_value: observed.cloned().unwrap_or(Value::Null),
        });
    }
}

fn in_commands(elem: &Value, t: &GeoTarget) -> bool {
    match &t.commands {
        None => true,
        Some(list) => elem
            .get(&t.command_field)
            .and_then(Value::as_i64)
            .is_some_and(|c| list.contains(&c)),
    }
}

fn first_value<'v>(s: &Selector, elem: &'v Value, base: &str) -> (String, Option<&'v Value>) {
    s.select(elem, base).into_iter().next().unwrap_or_else(|| (base.to_string(), None))
}

fn bound_text(v: f64, unit: &str) -> String {
    let v = (v * 1e6).round() / 1e6;
    if unit.is_empty() { format!("{v}") } else { format!("{v} {unit}") }
}

impl RuleSet {
    pub fn from_file(file: RuleSetFile) -> Result<Self, ScriptError> {
        let mut seen = std::collections::HashSet::new();
        for r in &file.rules {
            if !seen.insert(r.id.clone()) {
                return Err(ScriptError::InvalidRuleSet(format!("duplicate rule id {}", r.id)));
            }
        }
        Ok(Self {
            name: file.name,
            compiled: file.rules.into_iter().map(compile).collect::<Result<_, _>>()?,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let file: RuleSetFile = serde_json::from_str(text).map_err(|e| ScriptError::InvalidRuleSet(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScriptError::InvalidRuleSet(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn default_mission() -> Self {
        Self::from_json(include_str!("../../rulesets/mission.default.json")).expect("bundled mission ruleset")
    }

    pub fn default_env() -> Self {
        Self::from_json(include_str!("../../rulesets/env.default.json")).expect("bundled env ruleset")
    }

    /// Optional use-case rules: missing-person geolocation and delivery radius.
    pub fn use_case() -> Self {
        Self::from_json(include_str!("../../rulesets/usecase.json")).expect("bundled use-case ruleset")
    }

    /// Adds the rules of `other`; ids must stay unique.
    pub fn merged(mut self, other: RuleSet) -> Result<Self, ScriptError> {
        for c in other.compiled {
            if self.compiled.iter().any(|x| x.rule.id == c.rule.id) {
                return Err(ScriptError::InvalidRuleSet(format!("duplicate rule id {}", c.rule.id)));
            }
            self.compiled.push(c);
        }
        Ok(self)
    }

    /// Keeps only the named rules.
    pub fn only(mut self, ids: &[&str]) -> Self {
        self.compiled.retain(|c| ids.contains(&c.rule.id.as_str()));
        self
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.compiled.iter().map(|c| &c.rule)
    }

    pub fn to_file(&self) -> RuleSetFile {
        RuleSetFile {
            name: self.name.clone(),
            rules: self.rules().cloned().collect(),
        }
    }

    /// Runs every rule over `doc`; all violations are reported.
    pub fn validate(&self, doc: &Value) -> ValidationReport {
        let mut violations = Vec::new();
        let mut warnings = Vec::new();
        for c in &self.compiled {
            let mut sink = Sink {
                rule: &c.rule,
                errors: Vec::new(),
            };
            check(c, doc, &mut sink);
            match c.rule.severity {
                Severity::Error => violations.extend(sink.errors),
                Severity::Warning => warnings.extend(sink.errors),
            }
        }
        let mut report = ValidationReport::from_violations(violations);
        report.warnings = warnings;
        report
    }
}

fn check(c: &Compiled, doc: &Value, sink: &mut Sink<'_>) {
    match &c.kind {
        CompiledKind::Range {
            paths,
            min,
            max,
            dim,
            input_unit,
            unit_field,
        } => {
            let Predicate::Range(args) = &c.rule.predicate else { unreachable!() };
            let declared = unit_field.as_deref().and_then(|p| resolve(doc, p)).and_then(Value::as_str);
            let unit = declared.unwrap_or(input_unit);
            let factor = match unit_factor(unit) {
                Some((d, f)) if d == *dim => f,
                _ => {
                    sink.push(
                        unit_field.clone().unwrap_or_else(|| "$".into()),
                        format!("unit {unit:?} cannot be compared with {}", si_unit(*dim)),
                        declared.map(|d| Value::String(d.into())).as_ref(),
                    );
                    return;
                }
            };
            let su = si_unit(*dim);
            for s in paths {
                for (path, v) in s.select(doc, "$") {
                    let Some(v) = v.filter(|v| !v.is_null()) else {
                        if !args.optional {
                            sink.push(path, "value is required".into(), None);
                        }
                        continue;
                    };
                    // type errors belong to the format rule
                    let Some(raw) = v.as_f64() else { continue };
                    let x = raw * factor;
                    if let Some(lo) = *min {
                        let bad = if args.min_exclusive { x <= lo } else { x < lo - BOUND_EPSILON };
                        if bad {
                            let op = if args.min_exclusive { ">" } else { "≥" };
                            sink.push(path.clone(), format!("{} must be {op} {}", bound_text(x, su), bound_text(lo, su)), Some(v));
                            continue;
                        }
                    }
                    if let Some(hi) = *max {
                        let bad = if args.max_exclusive { x >= hi } else { x > hi + BOUND_EPSILON };
                        if bad {
                            let op = if args.max_exclusive { "<" } else { "≤" };
                            sink.push(path, format!("{} must be {op} {}", bound_text(x, su), bound_text(hi, su)), Some(v));
                        }
                    }
                }
            }
        }
        CompiledKind::Geo(targets) => {
            for (base, lat_s, lon_s, t) in targets {
                for (bpath, elem) in base.select(doc, "$") {
                    let Some(elem) = elem else {
                        if t.required {
                            sink.push(bpath, "geolocation is required".into(), None);
                        }
                        continue;
                    };
                    if !in_commands(elem, t) {
                        continue;
                    }
                    for (s, name, limit) in [(lat_s, "latitude", 90.0), (lon_s, "longitude", 180.0)] {
                        let (path, v) = first_value(s, elem, &bpath);
                        match v.filter(|v| !v.is_null()) {
                            None if t.required => sink.push(path, format!("{name} is required"), v),
                            None => {}
                            Some(v) => match v.as_f64() {
                                Some(x) if x.abs() <= limit => {}
                                Some(_) => sink.push(path, format!("{name} must lie in [-{limit}, {limit}]"), Some(v)),
                                None if t.required => sink.push(path, format!("{name} must be a number"), Some(v)),
                                None => {}
                            },
                        }
                    }
                }
            }
        }
        CompiledKind::Required(fields) => {
            for (s, req) in fields {
                for (path, v) in s.select(doc, "$") {
                    let Some(v) = v else {
                        if !req.optional {
                            sink.push(path, "required field is missing".into(), None);
                        }
                        continue;
                    };
                    if v.is_null() {
                        if !req.nullable {
                            sink.push(path, format!("expected {}, found null", req.field_type.name()), Some(v));
                        }
                        continue;
                    }
                    if !req.field_type.matches(v) {
                        sink.push(path, format!("expected {}", req.field_type.name()), Some(v));
                        continue;
                    }
                    let len = match v {
                        Value::Array(a) => Some(a.len()),
                        Value::Object(o) => Some(o.len()),
                        Value::String(s) => Some(s.chars().count()),
                        _ => None,
                    };
                    if let (Some(want), Some(n)) = (req.len, len) {
                        if n != want {
                            sink.push(path.clone(), format!("expected exactly {want} entries, found {n}"), Some(v));
                        }
                    }
                    if let (Some(want), Some(n)) = (req.min_len, len) {
                        if n < want {
                            sink.push(path, format!("expected at least {want} entries, found {n}"), Some(v));
                        }
                    }
                }
            }
        }
        CompiledKind::Distance { home, points, max_m } => {
            let (hb, hlat, hlon) = home;
            let Some((hpath, Some(h))) = hb.select(doc, "$").into_iter().next() else { return };
            let hl = first_value(hlat, h, &hpath).1.and_then(Value::as_f64);
            let hn = first_value(hlon, h, &hpath).1.and_then(Value::as_f64);
            let (Some(hl), Some(hn)) = (hl, hn) else { return };
            let (base, lat_s, lon_s, t) = points;
            for (bpath, elem) in base.select(doc, "$") {
                let Some(elem) = elem.filter(|e| in_commands(e, t)) else { continue };
                let lat = first_value(lat_s, elem, &bpath).1.and_then(Value::as_f64);
                let lon = first_value(lon_s, elem, &bpath).1.and_then(Value::as_f64);
                if let (Some(lat), Some(lon)) = (lat, lon) {
                    let d = haversine_m(hl, hn, lat, lon);
                    if d > max_m + BOUND_EPSILON {
                        sink.push(
                            bpath,
                            format!("{} from home exceeds {}", bound_text(d, "m"), bound_text(*max_m, "m")),
                            Some(&Value::from(d)),
                        );
                    }
                }
            }
        }
        CompiledKind::ValidWaypoints {
            items,
            lat,
            lon,
            altitude,
            commands,
            coords_optional,
            max_leg_m,
        } => {
            let mut prev: Option<(f64, f64)> = None;
            for (ipath, item) in items.select(doc, "$") {
                let Some(item) = item else { continue };
                let Some(cmd) = item.get("command").and_then(Value::as_i64) else { continue };
                if !commands.is_empty() && !commands.contains(&cmd) {
                    continue;
                }
                let (apath, alt) = first_value(altitude, item, &ipath);
                if let Some(a) = alt.and_then(Value::as_f64) {
                    if a <= 0.0 {
                        sink.push(apath, "waypoint altitude must be above 0".into(), alt);
                    }
                }
                let (lat_path, la) = first_value(lat, item, &ipath);
                let (lon_path, lo) = first_value(lon, item, &ipath);
                let la_n = la.and_then(Value::as_f64);
                let lo_n = lo.and_then(Value::as_f64);
                match (la_n, lo_n) {
                    (Some(a), Some(b)) => {
                        if let (Some((pa, pb)), Some(limit)) = (prev, max_leg_m) {
                            let d = haversine_m(pa, pb, a, b);
                            if d > limit + BOUND_EPSILON {
                                sink.push(
                                    ipath.clone(),
                                    format!("leg of {} exceeds {}", bound_text(d, "m"), bound_text(*limit, "m")),
                                    Some(&Value::from(d)),
                                );
                            }
                        }
                        prev = Some((a, b));
                    }
                    _ if coords_optional.contains(&cmd) => {}
                    _ => {
                        let (path, v) = if la_n.is_none() { (lat_path, la) } else { (lon_path, lo) };
                        if v.is_none_or(|v| v.is_null()) {
                            sink.push(path, "waypoint needs finite coordinates".into(), v);
                        }
                    }
                }
            }
        }
        CompiledKind::FirstCommand { items, command } => {
            for (path, v) in items.select(doc, "$") {
                let Some(first) = v.and_then(Value::as_array).and_then(|a| a.first()) else { continue };
                match first.get("command").and_then(Value::as_i64) {
                    Some(c) if c == *command => {}
                    Some(_) => sink.push(
                        format!("{path}[0].command"),
                        format!("first item must be command {command}"),
                        first.get("command"),
                    ),
                    None => {}
                }
            }
        }
        CompiledKind::MinEntries { path, min } => {
            for (p, v) in path.select(doc, "$") {
                let n = match v {
                    Some(Value::Array(a)) => a.len(),
                    Some(Value::Object(o)) => o.len(),
                    _ => 0,
                };
                if n < *min {
                    sink.push(p, format!("expected at least {min} entries, found {n}"), v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn selector_parsing() {
        let s = Selector::parse("$.mission.items[*].params[4]").unwrap();
        let doc = json!({"mission": {"items": [{"params": [0,0,0,0,1.5]}, {"params": []}]}});
        let got = s.select(&doc, "$");
        assert_eq!(got[0], ("$.mission.items[0].params[4]".into(), Some(&json!(1.5))));
        assert_eq!(got[1], ("$.mission.items[1].params[4]".into(), None));
        let rel = Selector::parse("[1]").unwrap();
        assert_eq!(rel.select(&json!([3, 4]), "$.p"), vec![("$.p[1]".into(), Some(&json!(4)))]);
        let obj = Selector::parse("$.Vehicles.*.VehicleType").unwrap();
        let doc = json!({"Vehicles": {"B": {"VehicleType": "x"}, "A": {}}});
        let paths: Vec<_> = obj.select(&doc, "$").into_iter().map(|p| p.0).collect();
        assert_eq!(paths, ["$.Vehicles.A.VehicleType", "$.Vehicles.B.VehicleType"]);
        assert!(Selector::parse("$.a[").is_err());
        assert!(Selector::parse("$..a").is_err());
    }

    #[test]
    fn resolve_round_trips_paths() {
        let doc = json!({"a": {"b": [1, {"c": 2}]}});
        assert_eq!(resolve(&doc, "$.a.b[1].c"), Some(&json!(2)));
        assert_eq!(resolve(&doc, "$.a.x"), None);
    }

    #[test]
    fn bundled_rulesets_compile() {
        assert_eq!(RuleSet::default_mission().rules().count(), 6);
        assert_eq!(RuleSet::default_env().rules().count(), 7);
        assert_eq!(RuleSet::use_case().rules().count(), 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = r#"{"rules":[{"id":"a","predicate":"range","paths":["$.x"],"max":1},{"id":"a","predicate":"range","paths":["$.y"],"max":1}]}"#;
        assert!(matches!(RuleSet::from_json(r), Err(ScriptError::InvalidRuleSet(_))));
    }

    #[test]
    fn converted_bounds() {
        let rs = RuleSet::from_json(r#"{"rules":[{"id":"v","predicate":"range","paths":["$.v"],"min":0,"max":30,"unit":"mph"}]}"#).unwrap();
        assert!(rs.validate(&json!({"v": 13.4112})).ok);
        assert!(!rs.validate(&json!({"v": 13.42})).ok);
        assert!(rs.validate(&json!({"v": 0})).ok);
        assert!(!rs.validate(&json!({"v": -0.001})).ok);
    }

    #[test]
    fn unit_field_overrides_input_unit() {
        let rs = RuleSet::default_env().only(&["wind_range"]);
        let ok = json!({"SimulatorSettings": {"Weather": {"WindSpeed": 50, "WindSpeedUnit": "mph"}}});
        let bad = json!({"SimulatorSettings": {"Weather": {"WindSpeed": 50.1, "WindSpeedUnit": "mph"}}});
        let weird = json!({"SimulatorSettings": {"Weather": {"WindSpeed": 5, "WindSpeedUnit": "ft"}}});
        assert!(rs.validate(&ok).ok);
        assert_eq!(rs.validate(&bad).violations.len(), 1);
        assert_eq!(rs.validate(&weird).violations.len(), 1);
    }

    #[test]
    fn haversine_reference() {
        // one degree of latitude
        let d = haversine_m(0.0, 0.0, 1.0, 0.0);
        assert!((d - 111_194.93).abs() < 0.1, "{d}");
    }

    #[test]
    fn delivery_radius() {
        let rs = RuleSet::use_case().only(&["delivery_within_2_miles"]);
        let near = json!({"mission": {"plannedHomePosition": [40.0, -74.0, 0], "items": [
            {"command": 16, "params": [0,0,0,null,40.01,-74.0,30]}]}});
        let far = json!({"mission": {"plannedHomePosition": [40.0, -74.0, 0], "items": [
            {"command": 16, "params": [0,0,0,null,40.05,-74.0,30]}]}});
        assert!(rs.validate(&near).ok);
        let r = rs.validate(&far);
        assert_eq!(r.violations[0].json_path, "$.mission.items[0]");
    }

    #[test]
    fn missing_person_required() {
        let rs = RuleSet::use_case().only(&["sar_missing_person_geolocated"]);
        assert!(!rs.validate(&json!({"mission": {}})).ok);
        assert!(rs.validate(&json!({"mission": {"missingPerson": {"lat": 44.1, "lon": -110.5}}})).ok);
        assert!(!rs.validate(&json!({"mission": {"missingPerson": {"lat": 95.0, "lon": -110.5}}})).ok);
    }

    #[test]
    fn warnings_do_not_fail() {
        let rs = RuleSet::from_json(r#"{"rules":[{"id":"w","predicate":"range","paths":["$.v"],"max":1,"severity":"warning"}]}"#).unwrap();
        let r = rs.validate(&json!({"v": 2}));
        assert!(r.ok);
        assert_eq!(r.warnings.len(), 1);
    }
}
