//! Scenario documents: a store configuration, a cast of actors and an
//! ordered event list, replayed against a fresh [`PermissionStore`].

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use super::audit::{leakage_audit, LeakageReport};
use super::scope::{Scope, ScopingMode};
use super::store::{
    Actor, PermissionStore, Policy, QueryOutcome, StoreConfig, StoreError, UserAction,
    DEFAULT_AUTO_DENY_THRESHOLD,
};
use crate::manifest::AppManifest;
use crate::matrix::{PermissionMatrix, QueryContext};
use crate::origin::normalize_origin;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate actor label `{0}`")]
    DuplicateActor(String),
    #[error("actor `{label}`: {reason}")]
    InvalidActor { label: String, reason: String },
    #[error("event {index}: unknown actor `{label}`")]
    UnknownActor { index: usize, label: String },
    #[error("event {index}: unknown permission descriptor `{name}`")]
    UnknownDescriptor { index: usize, name: String },
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: &'static str },
    #[error("invalid store configuration: {0}")]
    Config(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PolicyName {
    Persistent,
    Adaptive,
    Ephemeral,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scoping_mode: ScopingMode,
    #[serde(default = "default_policy")]
    policy: PolicyName,
    #[serde(default = "default_target")]
    target: String,
    #[serde(default)]
    context: QueryContext,
    #[serde(default = "default_threshold")]
    auto_deny_threshold: u32,
    exceptions: Option<BTreeSet<String>>,
}

fn default_policy() -> PolicyName {
    PolicyName::Persistent
}

fn default_target() -> String {
    StoreConfig::default().target
}

fn default_threshold() -> u32 {
    DEFAULT_AUTO_DENY_THRESHOLD
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActor {
    label: String,
    origin: String,
    document_url: Option<String>,
    manifest: Option<serde_json::Value>,
    manifest_url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Request,
    Query,
    SessionEnd,
    ClosePwa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ActionName {
    Allow,
    Deny,
    Ignore,
    None,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    actor: String,
    kind: EventKind,
    descriptor: Option<String>,
    action: Option<ActionName>,
    #[serde(default)]
    remember: bool,
    expect: Option<QueryOutcome>,
    expect_prompt: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    config: Option<RawConfig>,
    #[serde(default)]
    actors: Vec<RawActor>,
    #[serde(default)]
    events: Vec<RawEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    Request {
        descriptor: String,
        action: UserAction,
    },
    Query {
        descriptor: String,
    },
    SessionEnd,
    ClosePwa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub actor: String,
    pub action: EventAction,
    pub expect: Option<QueryOutcome>,
    pub expect_prompt: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioActor {
    pub label: String,
    pub actor: Actor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub config: StoreConfig,
    pub actors: Vec<ScenarioActor>,
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    /// Parses and validates a scenario document. Descriptor names must exist
    /// in the matrix's registry.
    pub fn from_json(text: &str, matrix: &PermissionMatrix) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text)?;

        let config = raw.config.map_or_else(StoreConfig::default, build_config);

        let mut actors = Vec::with_capacity(raw.actors.len());
        let mut labels = HashMap::new();
        for a in raw.actors {
            if labels.insert(a.label.clone(), actors.len()).is_some() {
                return Err(ScenarioError::DuplicateActor(a.label));
            }
            actors.push(build_actor(a)?);
        }

        let mut events = Vec::with_capacity(raw.events.len());
        for (index, e) in raw.events.into_iter().enumerate() {
            if !labels.contains_key(&e.actor) {
                return Err(ScenarioError::UnknownActor {
                    index,
                    label: e.actor,
                });
            }
            let descriptor = || -> Result<String, ScenarioError> {
                let name = e.descriptor.clone().ok_or(ScenarioError::InvalidEvent {
                    index,
                    reason: "missing `descriptor`",
                })?;
                if matrix.resolve_descriptor(&name).is_none() {
                    return Err(ScenarioError::UnknownDescriptor { index, name });
                }
                Ok(name)
            };
            let action = match e.kind {
                EventKind::Request => {
                    let action = match e.action.ok_or(ScenarioError::InvalidEvent {
                        index,
                        reason: "request needs an `action`",
                    })? {
                        ActionName::Allow => UserAction::Allow {
                            remember: e.remember,
                        },
                        ActionName::Deny => UserAction::Deny {
                            remember: e.remember,
                        },
                        ActionName::Ignore => UserAction::Ignore,
                        ActionName::None => UserAction::NoPromptNeeded,
                    };
                    EventAction::Request {
                        descriptor: descriptor()?,
                        action,
                    }
                }
                EventKind::Query => EventAction::Query {
                    descriptor: descriptor()?,
                },
                EventKind::SessionEnd | EventKind::ClosePwa => {
                    if e.expect.is_some() || e.expect_prompt.is_some() {
                        return Err(ScenarioError::InvalidEvent {
                            index,
                            reason: "session events have no outcome to expect",
                        });
                    }
                    if e.kind == EventKind::SessionEnd {
                        EventAction::SessionEnd
                    } else {
                        EventAction::ClosePwa
                    }
                }
            };
            events.push(ScenarioEvent {
                actor: e.actor,
                action,
                expect: e.expect,
                expect_prompt: e.expect_prompt,
            });
        }

        Ok(Scenario {
            name: raw.name,
            description: raw.description,
            config,
            actors,
            events,
        })
    }

    fn actor(&self, label: &str) -> &Actor {
        &self
            .actors
            .iter()
            .find(|a| a.label == label)
            .expect("validated actor label")
            .actor
    }
}

fn build_config(c: RawConfig) -> StoreConfig {
    StoreConfig {
        scoping_mode: c.scoping_mode,
        policy: match c.policy {
            PolicyName::Persistent => Policy::Persistent,
            PolicyName::Adaptive => Policy::Adaptive,
            PolicyName::Ephemeral => match c.exceptions {
                Some(exceptions) => Policy::Ephemeral { exceptions },
                None => Policy::ephemeral_default(),
            },
        },
        target: c.target,
        context: c.context,
        auto_deny_threshold: c.auto_deny_threshold,
    }
}

impl StoreConfig {
    /// Parses the `config` object of a scenario document. Missing fields take
    /// their defaults. Validation happens in [`PermissionStore::new`].
    ///
    /// [`PermissionStore::new`]: super::PermissionStore::new
    pub fn from_json(text: &str) -> Result<StoreConfig, serde_json::Error> {
        serde_json::from_str(text).map(build_config)
    }
}

fn build_actor(raw: RawActor) -> Result<ScenarioActor, ScenarioError> {
    let invalid = |reason: String| ScenarioError::InvalidActor {
        label: raw.label.clone(),
        reason,
    };
    let origin = normalize_origin(&raw.origin)
        .ok_or_else(|| invalid(format!("`{}` is not an http(s) origin", raw.origin)))?;
    let document_url = match &raw.document_url {
        Some(u) => Url::parse(u).map_err(|e| invalid(format!("document_url: {e}")))?,
        None => Url::parse(&origin).expect("normalized origin parses"),
    };
    let manifest_url = raw
        .manifest_url
        .as_deref()
        .map(|u| document_url.join(u))
        .transpose()
        .map_err(|e| invalid(format!("manifest_url: {e}")))?;
    let manifest = raw
        .manifest
        .clone()
        .map(|v| {
            AppManifest::from_value(v, manifest_url)
                .ok_or_else(|| invalid("manifest must be a JSON object".into()))
        })
        .transpose()?;
    let actor = Actor::from_url(document_url, manifest).map_err(|e| invalid(e.to_string()))?;
    if actor.origin != origin {
        return Err(invalid(format!(
            "document_url origin `{}` differs from `{origin}`",
            actor.origin
        )));
    }
    Ok(ScenarioActor {
        label: raw.label,
        actor,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub index: usize,
    pub actor: String,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<String>,
    pub outcome: Option<QueryOutcome>,
    pub expected: Option<QueryOutcome>,
    pub prompted: bool,
    /// Set when the outcome rests on another app's decision.
    pub inherited_from: Option<Scope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioTrace {
    pub scenario: String,
    pub passed: bool,
    pub events: Vec<TraceEvent>,
    /// Leakage audit over all actors after the last event.
    pub leakage: LeakageReport,
}

impl ScenarioTrace {
    pub fn failed_indices(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.index)
            .collect()
    }
}

/// Replays the scenario on a fresh store. An event that errors (for example
/// an action mismatch) is recorded as failed and the run continues.
pub fn run_scenario(
    scenario: &Scenario,
    matrix: Arc<PermissionMatrix>,
) -> Result<ScenarioTrace, ScenarioError> {
    let mut store = PermissionStore::new(scenario.config.clone(), matrix)?;
    let mut events = Vec::with_capacity(scenario.events.len());

    for (index, event) in scenario.events.iter().enumerate() {
        let actor = scenario.actor(&event.actor);
        let (kind, descriptor, result) = match &event.action {
            EventAction::Request { descriptor, action } => (
                EventKind::Request,
                Some(descriptor.clone()),
                Some(store.request_detailed(actor, descriptor, *action)),
            ),
            EventAction::Query { descriptor } => (
                EventKind::Query,
                Some(descriptor.clone()),
                Some(Ok(store.query_detailed(actor, descriptor))),
            ),
            EventAction::SessionEnd => {
                store.session_end(actor);
                (EventKind::SessionEnd, None, None)
            }
            EventAction::ClosePwa => {
                store.close_pwa(actor);
                (EventKind::ClosePwa, None, None)
            }
        };

        let mut trace = TraceEvent {
            index,
            actor: event.actor.clone(),
            kind,
            descriptor,
            outcome: None,
            expected: event.expect,
            prompted: false,
            inherited_from: None,
            error: None,
            pass: true,
        };
        match result {
            None => {}
            Some(Ok(res)) => {
                trace.outcome = Some(res.outcome);
                trace.prompted = res.prompted;
                trace.inherited_from = res.inherited_from;
                trace.pass = event.expect.is_none_or(|e| e == res.outcome)
                    && event.expect_prompt.is_none_or(|p| p == res.prompted);
            }
            Some(Err(err)) => {
                trace.error = Some(err.to_string());
                trace.pass = false;
            }
        }
        events.push(trace);
    }

    let actors: Vec<Actor> = scenario.actors.iter().map(|a| a.actor.clone()).collect();
    let leakage = leakage_audit(&store, &actors);
    Ok(ScenarioTrace {
        scenario: scenario.name.clone(),
        passed: events.iter().all(|e| e.pass),
        events,
        leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;

    fn matrix() -> Arc<PermissionMatrix> {
        Arc::new(PermissionMatrix::embedded(&Registry::embedded()))
    }

    fn run(text: &str) -> ScenarioTrace {
        let m = matrix();
        let s = Scenario::from_json(text, &m).unwrap();
        run_scenario(&s, m).unwrap()
    }

    const TWO_APPS: &str = r#"
        {"label":"pwa1","origin":"https://games.example","document_url":"https://games.example/g1/",
         "manifest":{"id":"game-1","name":"One","display":"standalone"}},
        {"label":"pwa2","origin":"https://games.example","document_url":"https://games.example/g2/",
         "manifest":{"id":"game-2","name":"Two","display":"standalone"}}"#;

    #[test]
    fn store_config_from_json() {
        assert_eq!(
            StoreConfig::from_json("{}").unwrap(),
            StoreConfig::default()
        );
        let c = StoreConfig::from_json(
            r#"{"scoping_mode":"per-app","policy":"ephemeral","context":"installed","auto_deny_threshold":5}"#,
        )
        .unwrap();
        assert_eq!(c.scoping_mode, ScopingMode::PerApp);
        assert_eq!(c.policy, Policy::ephemeral_default());
        assert_eq!(c.context, QueryContext::InstalledPwa);
        assert_eq!(c.auto_deny_threshold, 5);
        assert!(StoreConfig::from_json(r#"{"colour":"red"}"#).is_err());
    }

    fn leakage_doc(mode: &str, expect_second: &str) -> String {
        format!(
            r#"{{"name":"leak","config":{{"scoping_mode":"{mode}","policy":"persistent","target":"android-chrome"}},
            "actors":[{TWO_APPS}],
            "events":[
              {{"actor":"pwa1","kind":"request","descriptor":"geolocation","action":"allow","expect":"granted"}},
              {{"actor":"pwa2","kind":"query","descriptor":"geolocation","expect":"{expect_second}"}}
            ]}}"#
        )
    }

    #[test]
    fn per_origin_leaks_without_prompt() {
        let t = run(&leakage_doc("per-origin", "granted"));
        assert!(t.passed, "{t:?}");
        let second = &t.events[1];
        assert!(!second.prompted);
        assert_eq!(second.inherited_from, Some(Scope::App("game-1".into())));
        assert_eq!(t.leakage.entries.len(), 1);
    }

    #[test]
    fn per_app_prompts_second_app() {
        let t = run(&leakage_doc("per-app", "prompt"));
        assert!(t.passed, "{t:?}");
        assert!(t.leakage.is_empty());
    }

    #[test]
    fn empty_event_list() {
        let t = run(r#"{"name":"empty","actors":[],"events":[]}"#);
        assert!(t.events.is_empty());
        assert!(t.passed);
    }

    #[test]
    fn failed_expectation_is_reported() {
        let t = run(&leakage_doc("per-app", "granted"));
        assert!(!t.passed);
        assert_eq!(t.failed_indices(), [1]);
    }

    #[test]
    fn action_mismatch_fails_event_without_aborting() {
        let doc = format!(
            r#"{{"config":{{"target":"android-chrome"}},"actors":[{TWO_APPS}],"events":[
              {{"actor":"pwa1","kind":"request","descriptor":"background-sync","action":"allow"}},
              {{"actor":"pwa1","kind":"query","descriptor":"background-sync","expect":"granted"}}]}}"#
        );
        let t = run(&doc);
        assert!(!t.events[0].pass);
        assert!(t.events[0]
            .error
            .as_deref()
            .unwrap()
            .contains("action mismatch"));
        assert!(t.events[1].pass);
    }

    #[test]
    fn invalid_documents() {
        let m = matrix();
        let dup = r#"{"actors":[{"label":"a","origin":"https://x.example"},
                               {"label":"a","origin":"https://y.example"}]}"#;
        assert!(matches!(
            Scenario::from_json(dup, &m),
            Err(ScenarioError::DuplicateActor(_))
        ));
        let unknown_actor = r#"{"actors":[],"events":[{"actor":"ghost","kind":"session-end"}]}"#;
        assert!(matches!(
            Scenario::from_json(unknown_actor, &m),
            Err(ScenarioError::UnknownActor { index: 0, .. })
        ));
        let bad_desc = r#"{"actors":[{"label":"a","origin":"https://x.example"}],
            "events":[{"actor":"a","kind":"query","descriptor":"teleport"}]}"#;
        assert!(matches!(
            Scenario::from_json(bad_desc, &m),
            Err(ScenarioError::UnknownDescriptor { .. })
        ));
        let no_action = r#"{"actors":[{"label":"a","origin":"https://x.example"}],
            "events":[{"actor":"a","kind":"request","descriptor":"camera"}]}"#;
        assert!(matches!(
            Scenario::from_json(no_action, &m),
            Err(ScenarioError::InvalidEvent { .. })
        ));
        assert!(matches!(
            Scenario::from_json("[", &m),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn runs_are_deterministic() {
        let doc = leakage_doc("per-origin", "granted");
        assert_eq!(run(&doc), run(&doc));
    }
}
