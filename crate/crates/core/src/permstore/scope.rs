use std::fmt;

use serde::Serialize;
use thiserror::Error;
use url::Url;

use crate::manifest::AppManifest;
use crate::origin::is_https_origin;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScopeError {
    #[error("manifest has neither `id` nor `start_url`")]
    NoAppId,
    #[error("start_url `{0}` does not resolve to an absolute URL")]
    BadStartUrl(String),
}

/// Key under which permission records are stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Origin(String),
    App(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Origin(o) => write!(f, "origin:{o}"),
            Scope::App(a) => write!(f, "app:{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, serde::Deserialize)]
pub enum ScopingMode {
    #[default]
    #[serde(rename = "per-origin")]
    PerOrigin,
    #[serde(rename = "per-app")]
    PerApp,
}

impl fmt::Display for ScopingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScopingMode::PerOrigin => "per-origin",
            ScopingMode::PerApp => "per-app",
        })
    }
}

/// App id: the manifest `id` verbatim, else `start_url` made absolute.
///
/// Relative `start_url` values resolve against the manifest's own URL when
/// known, otherwise against `document_url`. Fragments are stripped and
/// query strings kept.
pub fn derive_app_id(manifest: &AppManifest, document_url: &Url) -> Result<String, ScopeError> {
    if let Some(id) = &manifest.id {
        return Ok(id.clone());
    }
    let start_url = manifest.start_url.as_deref().ok_or(ScopeError::NoAppId)?;
    manifest
        .resolved_start_url(document_url)
        .map(|u| u.to_string())
        .ok_or_else(|| ScopeError::BadStartUrl(start_url.to_string()))
}

/// Per-app scoping applies only to https origins that serve a manifest;
/// everything else is scoped by origin.
pub fn resolve_scope(
    origin: &str,
    manifest: Option<&AppManifest>,
    document_url: &Url,
    mode: ScopingMode,
) -> Result<Scope, ScopeError> {
    match (mode, manifest) {
        (ScopingMode::PerApp, Some(m)) if is_https_origin(origin) => {
            derive_app_id(m, document_url).map(Scope::App)
        }
        _ => Ok(Scope::Origin(origin.to_string())),
    }
}
