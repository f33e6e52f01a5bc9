use serde::Serialize;
use url::Url;

use super::patterns::detect_sw;
use super::snapshot::SiteSnapshot;
use crate::permstore::derive_app_id;

/// `display` values that open the app in its own window.
pub const INSTALLABLE_DISPLAY_MODES: [&str; 3] = ["fullscreen", "standalone", "minimal-ui"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PwaCheck {
    pub document_url: Url,
    pub https: bool,
    pub has_manifest: bool,
    pub has_name: bool,
    pub has_display: bool,
    pub start_url_resolved: Option<Url>,
    pub sw_detected: bool,
    pub installable: bool,
    pub app_id: Option<String>,
}

/// Installability per the manifest criteria. A service worker is reported
/// but not required.
pub fn check_installable(snapshot: &SiteSnapshot) -> PwaCheck {
    let https = snapshot.document_url.scheme() == "https";
    let manifest = snapshot.manifest.as_ref();
    let has_manifest = manifest.is_some();
    let has_name = manifest
        .and_then(|m| m.name.as_deref())
        .is_some_and(|n| !n.trim().is_empty());
    let has_display = manifest
        .and_then(|m| m.display.as_deref())
        .is_some_and(|d| INSTALLABLE_DISPLAY_MODES.contains(&d.trim()));
    let start_url_resolved = manifest.and_then(|m| m.resolved_start_url(&snapshot.document_url));
    let app_id = manifest.and_then(|m| derive_app_id(m, &snapshot.document_url).ok());
    let installable = https && has_manifest && has_name && has_display;
    PwaCheck {
        document_url: snapshot.document_url.clone(),
        https,
        has_manifest,
        has_name,
        has_display,
        start_url_resolved,
        sw_detected: detect_sw(snapshot),
        installable,
        app_id,
    }
}
