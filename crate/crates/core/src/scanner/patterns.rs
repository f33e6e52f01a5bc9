//! Textual permission-API detection over script bodies.
//!
//! Matching is purely lexical: hits inside comments and string literals are
//! reported like any other.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::snapshot::{ScriptSource, SiteSnapshot};
use crate::registry::Registry;

pub const UNKNOWN_QUERY_PATTERN: &str = "permissions-query-unknown";

// Bounds the argument scan for getUserMedia(...).
const MAX_CALL_ARGS: usize = 4096;

static SW_REGISTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"serviceWorker\s*\.\s*register\s*\(").unwrap());
static VIDEO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bvideo\b").unwrap());
static AUDIO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\baudio\b").unwrap());

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("pattern table does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("pattern `{id}`: invalid expression: {source}")]
    Regex {
        id: String,
        #[source]
        source: regex::Error,
    },
    #[error("pattern `{id}`: unknown descriptor `{descriptor}`")]
    UnknownDescriptor { id: String, descriptor: String },
    #[error("pattern `{id}`: {reason}")]
    Invalid { id: String, reason: &'static str },
    #[error("duplicate pattern id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    /// Every match attributes all listed descriptors.
    Direct,
    /// `getUserMedia`-style call: `descriptors` is [audio, video]; the call's
    /// argument text decides which apply, both when it names neither.
    MediaConstraints,
    /// Capture group 1 is a descriptor name.
    PermissionsQuery,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRule {
    id: String,
    kind: PatternKind,
    expression: String,
    #[serde(default)]
    descriptors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PatternRule {
    pub id: String,
    pub kind: PatternKind,
    pub descriptors: Vec<String>,
    regex: Regex,
}

impl PatternRule {
    pub fn expression(&self) -> &str {
        self.regex.as_str()
    }
}

#[derive(Debug, Clone)]
pub struct PatternTable {
    rules: Vec<PatternRule>,
}

impl PatternTable {
    pub fn from_json(text: &str, registry: &Registry) -> Result<PatternTable, PatternError> {
        #[derive(Deserialize)]
        struct Doc {
            patterns: Vec<RawRule>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        let mut rules: Vec<PatternRule> = Vec::with_capacity(doc.patterns.len());
        for raw in doc.patterns {
            if rules.iter().any(|r| r.id == raw.id) {
                return Err(PatternError::DuplicateId(raw.id));
            }
            let regex = Regex::new(&raw.expression).map_err(|source| PatternError::Regex {
                id: raw.id.clone(),
                source,
            })?;
            let mut descriptors = Vec::with_capacity(raw.descriptors.len());
            for d in &raw.descriptors {
                let canonical =
                    registry
                        .resolve_name(d)
                        .ok_or_else(|| PatternError::UnknownDescriptor {
                            id: raw.id.clone(),
                            descriptor: d.clone(),
                        })?;
                descriptors.push(canonical.to_string());
            }
            let invalid = |reason| PatternError::Invalid {
                id: raw.id.clone(),
                reason,
            };
            match raw.kind {
                PatternKind::Direct if descriptors.is_empty() => {
                    return Err(invalid("direct patterns need at least one descriptor"))
                }
                PatternKind::MediaConstraints if descriptors.len() != 2 => {
                    return Err(invalid("media patterns need [audio, video] descriptors"))
                }
                PatternKind::PermissionsQuery if regex.captures_len() < 2 => {
                    return Err(invalid("permissions-query patterns need a capture group"))
                }
                _ => {}
            }
            rules.push(PatternRule {
                id: raw.id,
                kind: raw.kind,
                descriptors,
                regex,
            });
        }
        Ok(PatternTable { rules })
    }

    pub fn embedded(registry: &Registry) -> PatternTable {
        PatternTable::from_json(crate::data::EMBEDDED_PATTERNS, registry)
            .expect("embedded pattern table is valid")
    }

    pub fn rules(&self) -> &[PatternRule] {
        &self.rules
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsageFinding {
    /// `None` only for `permissions.query` calls naming an unknown descriptor.
    pub descriptor: Option<String>,
    pub pattern_id: String,
    pub source: ScriptSource,
    pub script_index: usize,
    /// 1-based line.
    pub line: usize,
    /// 1-based column, in characters.
    pub column: usize,
    /// Byte offset of the excerpt in the script body.
    pub offset: usize,
    pub excerpt: String,
}

/// Runs every rule over every script of the snapshot.
///
/// Findings are ordered by script, then offset, then rule order.
pub fn find_permission_usages(
    snapshot: &SiteSnapshot,
    registry: &Registry,
    table: &PatternTable,
) -> Vec<UsageFinding> {
    let mut findings = Vec::new();
    for (script_index, script) in snapshot.scripts.iter().enumerate() {
        let mut hits = scan_body(&script.body, registry, table);
        hits.sort_by_key(|h| (h.offset, h.rule));
        findings.extend(hits.into_iter().map(|h| {
            let (line, column) = line_col(&script.body, h.offset);
            UsageFinding {
                descriptor: h.descriptor,
                pattern_id: h.pattern_id,
                source: script.source.clone(),
                script_index,
                line,
                column,
                offset: h.offset,
                excerpt: script.body[h.offset..h.end].to_string(),
            }
        }));
    }
    findings
}

struct Hit {
    rule: usize,
    descriptor: Option<String>,
    pattern_id: String,
    offset: usize,
    end: usize,
}

fn scan_body(body: &str, registry: &Registry, table: &PatternTable) -> Vec<Hit> {
    let mut hits = Vec::new();
    for (rule_index, rule) in table.rules.iter().enumerate() {
        match rule.kind {
            PatternKind::Direct => {
                for m in rule.regex.find_iter(body) {
                    for d in &rule.descriptors {
                        hits.push(Hit {
                            rule: rule_index,
                            descriptor: Some(d.clone()),
                            pattern_id: rule.id.clone(),
                            offset: m.start(),
                            end: m.end(),
                        });
                    }
                }
            }
            PatternKind::MediaConstraints => {
                for m in rule.regex.find_iter(body) {
                    let (end, args) = match call_arguments(body, m.end()) {
                        Some(close) => (close + 1, &body[m.end()..close]),
                        None => (m.end(), ""),
                    };
                    let audio = AUDIO.is_match(args);
                    let video = VIDEO.is_match(args);
                    let undecided = audio == video;
                    let picks = [audio || undecided, video || undecided];
                    for (d, pick) in rule.descriptors.iter().zip(picks) {
                        if pick {
                            hits.push(Hit {
                                rule: rule_index,
                                descriptor: Some(d.clone()),
                                pattern_id: rule.id.clone(),
                                offset: m.start(),
                                end,
                            });
                        }
                    }
                }
            }
            PatternKind::PermissionsQuery => {
                for c in rule.regex.captures_iter(body) {
                    let m = c.get(0).unwrap();
                    let named = c.get(1).map_or("", |g| g.as_str());
                    let (descriptor, pattern_id) = match registry.resolve_name(named) {
                        Some(d) => (Some(d.to_string()), rule.id.clone()),
                        None => (None, UNKNOWN_QUERY_PATTERN.to_string()),
                    };
                    hits.push(Hit {
                        rule: rule_index,
                        descriptor,
                        pattern_id,
                        offset: m.start(),
                        end: m.end(),
                    });
                }
            }
        }
    }
    hits
}

/// Byte index of the `)` closing a call whose argument list starts at
/// `open_end` (just past the `(`).
fn call_arguments(body: &str, open_end: usize) -> Option<usize> {
    let mut depth = 1usize;
    for (i, b) in body.as_bytes()[open_end..]
        .iter()
        .enumerate()
        .take(MAX_CALL_ARGS)
    {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open_end + i);
                }
            }
            _ => {}
        }
    }
    None
}

fn line_col(body: &str, offset: usize) -> (usize, usize) {
    let before = &body[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, body[line_start..offset].chars().count() + 1)
}

/// True when any script calls `serviceWorker.register(`.
pub fn detect_sw(snapshot: &SiteSnapshot) -> bool {
    snapshot
        .scripts
        .iter()
        .any(|s| SW_REGISTER.is_match(&s.body))
}
