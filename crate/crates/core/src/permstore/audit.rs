use serde::Serialize;

use super::scope::Scope;
use super::store::{Actor, PermissionStore, RecordState};

/// Grants one app silently inherited from another app on the same origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakageEntry {
    pub origin: String,
    pub source_app: String,
    pub inheriting_app: String,
    pub descriptors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LeakageReport {
    pub entries: Vec<LeakageEntry>,
}

impl LeakageReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// For every ordered pair of same-origin apps with distinct app ids, lists
/// the descriptors the second app sees as Granted only because of a decision
/// the first app made. Under per-app scoping those descriptors would still be
/// at their default for the second app.
pub fn leakage_audit(store: &PermissionStore, apps: &[Actor]) -> LeakageReport {
    let mode = store.config().scoping_mode;
    let mut entries = Vec::new();
    for (i, source) in apps.iter().enumerate() {
        let Scope::App(source_id) = source.app_scope() else {
            continue;
        };
        for (j, heir) in apps.iter().enumerate() {
            if i == j || heir.origin != source.origin {
                continue;
            }
            let Scope::App(heir_id) = heir.app_scope() else {
                continue;
            };
            if heir_id == source_id {
                continue;
            }
            let Ok(actual) = heir.scope(mode) else {
                continue;
            };
            let source_scope = Scope::App(source_id.clone());
            let descriptors: Vec<String> = store
                .records()
                .filter(|(scope, _, record)| {
                    **scope == actual
                        && record.state == RecordState::Granted
                        && record.decided_by.as_ref() == Some(&source_scope)
                })
                .map(|(_, descriptor, _)| descriptor.to_string())
                .collect();
            if !descriptors.is_empty() {
                entries.push(LeakageEntry {
                    origin: heir.origin.clone(),
                    source_app: source_id.clone(),
                    inheriting_app: heir_id,
                    descriptors,
                });
            }
        }
    }
    entries.sort_by(|a, b| {
        (&a.origin, &a.source_app, &a.inheriting_app).cmp(&(
            &b.origin,
            &b.source_app,
            &b.inheriting_app,
        ))
    });
    entries.dedup();
    LeakageReport { entries }
}
