//! Simulated permission store: origin- or app-scoped records under a
//! persistent, adaptive or ephemeral lifecycle policy, plus scenario replay
//! and a same-origin leakage audit.
//!
//! A store is a single-owner state machine; independent stores can run on
//! separate threads.

mod audit;
mod scenario;
mod scope;
mod store;

pub use audit::{leakage_audit, LeakageEntry, LeakageReport};
pub use scenario::{
    run_scenario, EventAction, EventKind, Scenario, ScenarioActor, ScenarioError, ScenarioEvent,
    ScenarioTrace, TraceEvent,
};
pub use scope::{derive_app_id, resolve_scope, Scope, ScopeError, ScopingMode};
pub use store::{
    Actor, GrantRecord, PermissionStore, Policy, QueryOutcome, RecordState, Resolution,
    StoreConfig, StoreError, UserAction, DEFAULT_AUTO_DENY_THRESHOLD,
};
