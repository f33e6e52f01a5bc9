use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use super::scope::{resolve_scope, Scope, ScopeError, ScopingMode};
use crate::manifest::AppManifest;
use crate::matrix::{PermissionMatrix, PermissionState, QueryContext};
use crate::origin::origin_of;

pub const DEFAULT_AUTO_DENY_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("unknown browser target `{0}`")]
    UnknownTarget(String),
    #[error("ephemeral exception `{0}` is not a registry descriptor")]
    UnknownException(String),
    #[error("auto_deny_threshold must be positive")]
    InvalidThreshold,
    #[error("actor URL `{0}` is not an absolute http(s) URL")]
    InvalidActor(String),
    #[error(transparent)]
    Scope(#[from] ScopeError),
    #[error("action mismatch for `{descriptor}`: {detail}")]
    ActionMismatch {
        descriptor: String,
        detail: &'static str,
    },
}

/// Lifecycle rule for stored decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// Kept until revoked.
    Persistent,
    /// Kept only when the user ticks "remember".
    Adaptive,
    /// Dropped at every session boundary except for the listed descriptors.
    Ephemeral { exceptions: BTreeSet<String> },
}

impl Policy {
    pub fn ephemeral_default() -> Policy {
        Policy::Ephemeral {
            exceptions: BTreeSet::from(["geolocation".to_string()]),
        }
    }

    fn remembers(&self, user_choice: bool) -> bool {
        match self {
            Policy::Persistent => true,
            Policy::Adaptive => user_choice,
            Policy::Ephemeral { .. } => false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Persistent => "persistent",
            Policy::Adaptive => "adaptive",
            Policy::Ephemeral { .. } => "ephemeral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserAction {
    Allow {
        remember: bool,
    },
    Deny {
        remember: bool,
    },
    Ignore,
    /// Used when the caller expects no prompt to be shown.
    NoPromptNeeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryOutcome {
    Granted,
    Denied,
    Prompt,
    Unsupported,
}

impl fmt::Display for QueryOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryOutcome::Granted => "granted",
            QueryOutcome::Denied => "denied",
            QueryOutcome::Prompt => "prompt",
            QueryOutcome::Unsupported => "unsupported",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordState {
    Default,
    Granted,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrantRecord {
    pub state: RecordState,
    pub remembered: bool,
    pub ignore_count: u32,
    /// Per-app scope of the actor whose decision set `state`.
    pub decided_by: Option<Scope>,
}

/// The page or installed app talking to the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub origin: String,
    pub document_url: Url,
    pub manifest: Option<AppManifest>,
}

impl Actor {
    pub fn new(document_url: &str, manifest: Option<AppManifest>) -> Result<Actor, StoreError> {
        let url = Url::parse(document_url)
            .map_err(|_| StoreError::InvalidActor(document_url.to_string()))?;
        Actor::from_url(url, manifest)
    }

    pub fn from_url(document_url: Url, manifest: Option<AppManifest>) -> Result<Actor, StoreError> {
        let origin = origin_of(&document_url)
            .ok_or_else(|| StoreError::InvalidActor(document_url.to_string()))?;
        Ok(Actor {
            origin,
            document_url,
            manifest,
        })
    }

    pub fn scope(&self, mode: ScopingMode) -> Result<Scope, ScopeError> {
        resolve_scope(
            &self.origin,
            self.manifest.as_ref(),
            &self.document_url,
            mode,
        )
    }

    /// Scope this actor would get under per-app scoping; falls back to the
    /// origin when no app id can be derived.
    pub fn app_scope(&self) -> Scope {
        self.scope(ScopingMode::PerApp)
            .unwrap_or_else(|_| Scope::Origin(self.origin.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    pub scoping_mode: ScopingMode,
    pub policy: Policy,
    pub target: String,
    pub context: QueryContext,
    pub auto_deny_threshold: u32,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            scoping_mode: ScopingMode::PerOrigin,
            policy: Policy::Persistent,
            target: "android-chrome".to_string(),
            context: QueryContext::BrowserTab,
            auto_deny_threshold: DEFAULT_AUTO_DENY_THRESHOLD,
        }
    }
}

/// Result of a query or request with the bookkeeping the scenario trace
/// reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub outcome: QueryOutcome,
    /// A prompt was shown to the user.
    pub prompted: bool,
    /// The outcome came from a decision made by a different app.
    pub inherited_from: Option<Scope>,
}

impl Resolution {
    fn plain(outcome: QueryOutcome) -> Self {
        Resolution {
            outcome,
            prompted: false,
            inherited_from: None,
        }
    }
}

/// Simulated permission store for one browser target and surface.
///
/// Granted-by-default descriptors never create records; their state always
/// comes from the matrix.
#[derive(Debug, Clone)]
pub struct PermissionStore {
    config: StoreConfig,
    matrix: Arc<PermissionMatrix>,
    records: BTreeMap<(Scope, String), GrantRecord>,
}

impl PartialEq for PermissionStore {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.records == other.records
    }
}

impl PermissionStore {
    pub fn new(config: StoreConfig, matrix: Arc<PermissionMatrix>) -> Result<Self, StoreError> {
        matrix
            .target(&config.target)
            .map_err(|_| StoreError::UnknownTarget(config.target.clone()))?;
        if config.auto_deny_threshold == 0 {
            return Err(StoreError::InvalidThreshold);
        }
        let mut config = config;
        if let Policy::Ephemeral { exceptions } = &mut config.policy {
            let mut canonical = BTreeSet::new();
            for name in exceptions.iter() {
                let c = matrix
                    .resolve_descriptor(name)
                    .ok_or_else(|| StoreError::UnknownException(name.clone()))?;
                canonical.insert(c.to_string());
            }
            *exceptions = canonical;
        }
        Ok(PermissionStore {
            config,
            matrix,
            records: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn matrix(&self) -> &Arc<PermissionMatrix> {
        &self.matrix
    }

    pub fn records(&self) -> impl Iterator<Item = (&Scope, &str, &GrantRecord)> {
        self.records.iter().map(|((s, d), r)| (s, d.as_str(), r))
    }

    pub fn record(&self, scope: &Scope, descriptor: &str) -> Option<&GrantRecord> {
        self.records.get(&(scope.clone(), descriptor.to_string()))
    }

    /// Matrix default for a supported descriptor, `None` when the name is
    /// unknown or the target does not support it.
    fn supported_default(&self, descriptor: &str) -> Option<(&str, PermissionState)> {
        let name = self.matrix.resolve_descriptor(descriptor)?;
        let state = self
            .matrix
            .default_state(name, &self.config.target, self.config.context)
            .ok()?;
        (state != PermissionState::Unsupported).then_some((name, state))
    }

    fn scope_for(&self, actor: &Actor) -> Result<Scope, ScopeError> {
        actor.scope(self.config.scoping_mode)
    }

    pub fn query(&self, actor: &Actor, descriptor: &str) -> QueryOutcome {
        self.query_detailed(actor, descriptor).outcome
    }

    /// Total over every input: unknown or unsupported names come back as
    /// `Unsupported`, and the store is never touched.
    pub fn query_detailed(&self, actor: &Actor, descriptor: &str) -> Resolution {
        let Some((name, default)) = self.supported_default(descriptor) else {
            return Resolution::plain(QueryOutcome::Unsupported);
        };
        // An app whose id cannot be derived is treated like a plain site.
        let scope = self
            .scope_for(actor)
            .unwrap_or_else(|_| Scope::Origin(actor.origin.clone()));
        if let Some(record) = self.records.get(&(scope, name.to_string())) {
            let outcome = match record.state {
                RecordState::Granted => Some(QueryOutcome::Granted),
                RecordState::Denied => Some(QueryOutcome::Denied),
                RecordState::Default => None,
            };
            if let Some(outcome) = outcome {
                return Resolution {
                    outcome,
                    prompted: false,
                    inherited_from: self.foreign_decider(actor, record),
                };
            }
        }
        Resolution::plain(default_outcome(default))
    }

    fn foreign_decider(&self, actor: &Actor, record: &GrantRecord) -> Option<Scope> {
        let own = actor.app_scope();
        record.decided_by.clone().filter(|d| *d != own)
    }

    pub fn request(
        &mut self,
        actor: &Actor,
        descriptor: &str,
        action: UserAction,
    ) -> Result<QueryOutcome, StoreError> {
        self.request_detailed(actor, descriptor, action)
            .map(|r| r.outcome)
    }

    pub fn request_detailed(
        &mut self,
        actor: &Actor,
        descriptor: &str,
        action: UserAction,
    ) -> Result<Resolution, StoreError> {
        let Some((name, default)) = self.supported_default(descriptor) else {
            return Ok(Resolution::plain(QueryOutcome::Unsupported));
        };
        let name = name.to_string();
        let scope = self.scope_for(actor)?;

        let no_prompt = |outcome| -> Result<Resolution, StoreError> {
            if action != UserAction::NoPromptNeeded {
                return Err(StoreError::ActionMismatch {
                    descriptor: name.clone(),
                    detail: "a user action was supplied but no prompt is shown",
                });
            }
            Ok(Resolution::plain(outcome))
        };

        match default {
            PermissionState::Granted => return no_prompt(QueryOutcome::Granted),
            PermissionState::Denied => return no_prompt(QueryOutcome::Denied),
            PermissionState::Prompted => {}
            PermissionState::Unsupported => unreachable!("filtered by supported_default"),
        }

        let key = (scope, name.clone());
        if let Some(record) = self.records.get(&key) {
            let settled = match record.state {
                RecordState::Granted => Some(QueryOutcome::Granted),
                RecordState::Denied => Some(QueryOutcome::Denied),
                RecordState::Default => None,
            };
            if let Some(outcome) = settled {
                let inherited_from = self.foreign_decider(actor, record);
                let mut res = no_prompt(outcome)?;
                res.inherited_from = inherited_from;
                return Ok(res);
            }
        }

        let decider = Some(actor.app_scope());
        let threshold = self.config.auto_deny_threshold;
        let policy = self.config.policy.clone();
        let record = self.records.entry(key.clone());
        let outcome = match action {
            UserAction::NoPromptNeeded => {
                return Err(StoreError::ActionMismatch {
                    descriptor: name,
                    detail: "a prompt is shown but no user action was supplied",
                });
            }
            UserAction::Allow { remember } => {
                *record.or_insert_with(fresh_record) = GrantRecord {
                    state: RecordState::Granted,
                    remembered: policy.remembers(remember),
                    ignore_count: 0,
                    decided_by: decider,
                };
                QueryOutcome::Granted
            }
            UserAction::Deny { remember } => {
                *record.or_insert_with(fresh_record) = GrantRecord {
                    state: RecordState::Denied,
                    remembered: policy.remembers(remember),
                    ignore_count: 0,
                    decided_by: decider,
                };
                QueryOutcome::Denied
            }
            UserAction::Ignore => {
                let r = record.or_insert_with(fresh_record);
                r.ignore_count += 1;
                if r.ignore_count >= threshold {
                    r.state = RecordState::Denied;
                    r.remembered = policy.remembers(false);
                    r.decided_by = decider;
                    QueryOutcome::Denied
                } else {
                    QueryOutcome::Prompt
                }
            }
        };
        Ok(Resolution {
            outcome,
            prompted: true,
            inherited_from: None,
        })
    }

    /// Session boundary for the actor's scope.
    pub fn session_end(&mut self, actor: &Actor) {
        let scope = self
            .scope_for(actor)
            .unwrap_or_else(|_| Scope::Origin(actor.origin.clone()));
        match &self.config.policy {
            Policy::Persistent => {}
            Policy::Adaptive => self.records.retain(|(s, _), r| *s != scope || r.remembered),
            Policy::Ephemeral { exceptions } => self
                .records
                .retain(|(s, d), _| *s != scope || exceptions.contains(d)),
        }
    }

    /// Closing an installed app is modelled as a session boundary.
    pub fn close_pwa(&mut self, actor: &Actor) {
        self.session_end(actor);
    }
}

fn fresh_record() -> GrantRecord {
    GrantRecord {
        state: RecordState::Default,
        remembered: false,
        ignore_count: 0,
        decided_by: None,
    }
}

fn default_outcome(state: PermissionState) -> QueryOutcome {
    match state {
        PermissionState::Granted => QueryOutcome::Granted,
        PermissionState::Denied => QueryOutcome::Denied,
        PermissionState::Prompted => QueryOutcome::Prompt,
        PermissionState::Unsupported => QueryOutcome::Unsupported,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;

    fn matrix() -> Arc<PermissionMatrix> {
        Arc::new(PermissionMatrix::embedded(&Registry::embedded()))
    }

    fn store(policy: Policy, target: &str) -> PermissionStore {
        PermissionStore::new(
            StoreConfig {
                policy,
                target: target.to_string(),
                ..StoreConfig::default()
            },
            matrix(),
        )
        .unwrap()
    }

    fn app(path: &str, id: &str) -> Actor {
        let m = AppManifest::parse(&format!(r#"{{"id":"{id}"}}"#), None).unwrap();
        Actor::new(&format!("https://games.example/{path}"), Some(m)).unwrap()
    }

    const ALLOW: UserAction = UserAction::Allow { remember: false };
    const ALLOW_REMEMBER: UserAction = UserAction::Allow { remember: true };

    #[test]
    fn unsupported_query_leaves_store_untouched() {
        let s = store(Policy::Persistent, "android-samsung-internet");
        let before = s.clone();
        let a = app("a", "a");
        assert_eq!(s.query(&a, "keyboard-lock"), QueryOutcome::Unsupported);
        assert_eq!(
            s.query(&a, "totally-made-up-permission"),
            QueryOutcome::Unsupported
        );
        assert_eq!(s, before);
    }

    #[test]
    fn fresh_geolocation_prompts_everywhere() {
        for t in matrix().target_ids() {
            let s = store(Policy::Persistent, t);
            assert_eq!(s.query(&app("a", "a"), "geolocation"), QueryOutcome::Prompt);
        }
    }

    #[test]
    fn allow_persists_under_persistent() {
        let mut s = store(Policy::Persistent, "android-chrome");
        let a = app("a", "a");
        assert_eq!(
            s.request(&a, "geolocation", ALLOW).unwrap(),
            QueryOutcome::Granted
        );
        assert_eq!(s.query(&a, "geolocation"), QueryOutcome::Granted);
        s.session_end(&a);
        assert_eq!(s.query(&a, "geolocation"), QueryOutcome::Granted);
    }

    #[test]
    fn three_ignores_auto_deny() {
        let mut s = store(Policy::Persistent, "android-chrome");
        let a = app("a", "a");
        assert_eq!(
            s.request(&a, "geolocation", UserAction::Ignore).unwrap(),
            QueryOutcome::Prompt
        );
        assert_eq!(
            s.request(&a, "geolocation", UserAction::Ignore).unwrap(),
            QueryOutcome::Prompt
        );
        assert_eq!(s.query(&a, "geolocation"), QueryOutcome::Prompt);
        assert_eq!(
            s.request(&a, "geolocation", UserAction::Ignore).unwrap(),
            QueryOutcome::Denied
        );
        assert_eq!(s.query(&a, "geolocation"), QueryOutcome::Denied);
    }

    #[test]
    fn configurable_threshold() {
        let mut s = PermissionStore::new(
            StoreConfig {
                auto_deny_threshold: 1,
                ..StoreConfig::default()
            },
            matrix(),
        )
        .unwrap();
        let a = app("a", "a");
        assert_eq!(
            s.request(&a, "camera", UserAction::Ignore).unwrap(),
            QueryOutcome::Denied
        );
        assert_eq!(
            PermissionStore::new(
                StoreConfig {
                    auto_deny_threshold: 0,
                    ..StoreConfig::default()
                },
                matrix()
            )
            .unwrap_err(),
            StoreError::InvalidThreshold
        );
    }

    #[test]
    fn granted_by_default_needs_no_prompt() {
        let mut s = store(Policy::Persistent, "android-chrome");
        let a = app("a", "a");
        assert_eq!(
            s.request(&a, "background-sync", UserAction::NoPromptNeeded)
                .unwrap(),
            QueryOutcome::Granted
        );
        assert_eq!(s.records().count(), 0);
        assert!(matches!(
            s.request(&a, "background-sync", ALLOW),
            Err(StoreError::ActionMismatch { .. })
        ));
        assert!(matches!(
            s.request(&a, "camera", UserAction::NoPromptNeeded),
            Err(StoreError::ActionMismatch { .. })
        ));
    }

    #[test]
    fn unsupported_request_is_in_band() {
        let mut s = store(Policy::Persistent, "android-samsung-internet");
        let a = app("a", "a");
        assert_eq!(
            s.request(&a, "keyboard-lock", ALLOW).unwrap(),
            QueryOutcome::Unsupported
        );
        assert_eq!(s.records().count(), 0);
    }

    #[test]
    fn ephemeral_keeps_exceptions_only() {
        let mut s = store(Policy::ephemeral_default(), "android-chrome");
        let a = app("a", "a");
        s.request(&a, "camera", ALLOW).unwrap();
        s.request(&a, "geolocation", ALLOW).unwrap();
        s.session_end(&a);
        assert_eq!(s.query(&a, "camera"), QueryOutcome::Prompt);
        assert_eq!(s.query(&a, "geolocation"), QueryOutcome::Granted);
        let once = s.clone();
        s.session_end(&a);
        assert_eq!(s, once);
    }

    #[test]
    fn adaptive_respects_remember() {
        let mut s = store(Policy::Adaptive, "android-chrome");
        let a = app("a", "a");
        s.request(&a, "camera", ALLOW_REMEMBER).unwrap();
        s.request(&a, "microphone", ALLOW).unwrap();
        s.session_end(&a);
        assert_eq!(s.query(&a, "camera"), QueryOutcome::Granted);
        assert_eq!(s.query(&a, "microphone"), QueryOutcome::Prompt);
    }

    #[test]
    fn close_pwa_matches_session_end() {
        let mut s = store(Policy::ephemeral_default(), "android-chrome");
        let a = app("a", "a");
        s.request(&a, "notifications", ALLOW).unwrap();
        s.close_pwa(&a);
        assert_eq!(s.query(&a, "notifications"), QueryOutcome::Prompt);

        let mut s = store(Policy::Persistent, "android-chrome");
        s.request(&a, "notifications", ALLOW).unwrap();
        s.close_pwa(&a);
        assert_eq!(s.query(&a, "notifications"), QueryOutcome::Granted);

        let mut s = store(Policy::Persistent, "android-chrome");
        let fresh = s.clone();
        s.close_pwa(&a);
        assert_eq!(s, fresh);
    }

    #[test]
    fn same_origin_inheritance_under_per_origin() {
        let mut s = store(Policy::Persistent, "android-chrome");
        let a = app("one/", "pwa1");
        let b = app("two/", "pwa2");
        s.request(&a, "geolocation", ALLOW).unwrap();
        let r = s.query_detailed(&b, "geolocation");
        assert_eq!(r.outcome, QueryOutcome::Granted);
        assert!(!r.prompted);
        assert_eq!(r.inherited_from, Some(Scope::App("pwa1".into())));
        assert_eq!(s.query_detailed(&a, "geolocation").inherited_from, None);
    }

    #[test]
    fn per_app_isolates_same_origin_apps() {
        let mut s = PermissionStore::new(
            StoreConfig {
                scoping_mode: ScopingMode::PerApp,
                ..StoreConfig::default()
            },
            matrix(),
        )
        .unwrap();
        let a = app("one/", "pwa1");
        let b = app("two/", "pwa2");
        s.request(&a, "geolocation", ALLOW).unwrap();
        assert_eq!(s.query(&b, "geolocation"), QueryOutcome::Prompt);
    }

    #[test]
    fn unknown_exception_rejected() {
        let err = PermissionStore::new(
            StoreConfig {
                policy: Policy::Ephemeral {
                    exceptions: BTreeSet::from(["teleport".to_string()]),
                },
                ..StoreConfig::default()
            },
            matrix(),
        )
        .unwrap_err();
        assert_eq!(err, StoreError::UnknownException("teleport".into()));
    }
}
