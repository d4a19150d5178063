use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::KnowledgeError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterDoc {
    pub name: String,
    pub message_type: String,
    pub description: String,
    pub source_file: String,
    /// Set when the field carried no comment at all.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

impl ParameterDoc {
    /// `<message_type>.<name>`, the series name the same field gets in a log.
    pub fn key(&self) -> String {
        format!("{}.{}", self.message_type, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub file: String,
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Default)]
pub struct ParsedDefinitions {
    pub docs: Vec<ParameterDoc>,
    pub malformed: Vec<MalformedLine>,
}

fn field_re() -> Regex {
    // <type>[<n>] <name>, type possibly namespaced (px4/msg/Foo)
    Regex::new(r"^([A-Za-z_][A-Za-z0-9_/]*)(?:\[(\d*)\])?\s+([A-Za-z_][A-Za-z0-9_]*)$").expect("static regex")
}

/// Parses one `.msg` body. Comments directly above a field (no blank line in
/// between) and a trailing `#` comment together form its description.
pub fn parse_msg_str(message_type: &str, source_file: &str, content: &str) -> ParsedDefinitions {
    let re = field_re();
    let mut out = ParsedDefinitions::default();
    let mut pending: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            pending.clear();
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            let c = c.trim();
            if !c.is_empty() {
                pending.push(c.to_string());
            }
            continue;
        }
        let (decl, trailing) = match line.split_once('#') {
            Some((d, t)) => (d.trim(), t.trim()),
            None => (line, ""),
        };
        if decl.contains('=') {
            // constant definition, not a logged field
            pending.clear();
            continue;
        }
        let decl = decl.split_whitespace().collect::<Vec<_>>().join(" ");
        let Some(caps) = re.captures(&decl) else {
            log::warn!("{source_file}:{}: malformed field line {line:?}", lineno + 1);
            out.malformed.push(MalformedLine {
                file: source_file.to_string(),
                line: lineno + 1,
                text: raw.to_string(),
            });
            pending.clear();
            continue;
        };
        let name = &caps[3];
        let mut parts: Vec<String> = std::mem::take(&mut pending);
        if !trailing.is_empty() {
            parts.push(trailing.to_string());
        }
        let description = parts.join(" ");
        let flagged = description.is_empty();
        let names: Vec<String> = match caps.get(2).map(|m| m.as_str()) {
            Some(n) if !n.is_empty() => {
                let count: usize = n.parse().unwrap_or(0);
                (0..count).map(|i| format!("{name}[{i}]")).collect()
            }
            // unbounded arrays are logged as a single entry
            _ => vec![name.to_string()],
        };
        for n in names {
            if !seen.insert(n.clone()) {
                log::warn!("{source_file}: duplicate field {n}");
                continue;
            }
            out.docs.push(ParameterDoc {
                name: n,
                message_type: message_type.to_string(),
                description: description.clone(),
                source_file: source_file.to_string(),
                flagged,
            });
        }
    }
    out
}

pub fn parse_msg_definitions(files: &[PathBuf]) -> Result<ParsedDefinitions, KnowledgeError> {
    let mut out = ParsedDefinitions::default();
    for f in files {
        let content = std::fs::read_to_string(f).map_err(|e| KnowledgeError::Io(f.display().to_string(), e))?;
        let message_type = f
            .file_stem()
            .map(|s| to_snake_case(&s.to_string_lossy()))
            .unwrap_or_default();
        let source = f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let parsed = parse_msg_str(&message_type, &source, &content);
        out.docs.extend(parsed.docs);
        out.malformed.extend(parsed.malformed);
    }
    Ok(out)
}

/// All `*.msg` files directly inside `dir`, sorted.
pub fn msg_files(dir: &Path) -> Result<Vec<PathBuf>, KnowledgeError> {
    let rd = std::fs::read_dir(dir).map_err(|e| KnowledgeError::Io(dir.display().to_string(), e))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("msg"))
        .collect();
    files.sort();
    Ok(files)
}

/// PX4 message files are CamelCase (`SensorGps.msg`) while topics are snake_case.
pub fn to_snake_case(s: &str) -> String {
    let mut out = String::new();
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_uppercase() {
            let prev_lower = i > 0 && (chars[i - 1].is_lowercase() || chars[i - 1].is_ascii_digit());
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            let prev_upper = i > 0 && chars[i - 1].is_uppercase();
            if i > 0 && (prev_lower || (prev_upper && next_lower)) {
                out.push('_');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

pub fn write_jsonl(docs: &[ParameterDoc], path: &Path) -> Result<(), KnowledgeError> {
    let io = |e| KnowledgeError::Io(path.display().to_string(), e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for d in docs {
        serde_json::to_writer(&mut f, d).map_err(|e| KnowledgeError::Parse(e.to_string()))?;
        f.write_all(b"\n").map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn read_jsonl(text: &str) -> Result<Vec<ParameterDoc>, KnowledgeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: ParameterDoc = serde_json::from_str(line)
            .map_err(|e| KnowledgeError::Parse(format!("line {}: {e}", i + 1)))?;
        out.push(doc);
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<ParameterDoc>, KnowledgeError> {
    let f = std::fs::File::open(path).map_err(|e| KnowledgeError::Io(path.display().to_string(), e))?;
    let mut text = String::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(|e| KnowledgeError::Io(path.display().to_string(), e))?;
        text.push_str(&line);
        text.push('\n');
    }
    read_jsonl(&text)
}
