use serde::Serialize;
use url::Url;

use crate::manifest::AppManifest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScriptSource {
    /// Inline `<script>`; `position` is the byte offset of its body in the
    /// document.
    Inline {
        position: usize,
    },
    External {
        url: Url,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptBody {
    pub source: ScriptSource,
    pub body: String,
}

/// One network request (or, for fixtures, one file read).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FetchRecord {
    pub url: String,
    pub status: Option<u16>,
    pub bytes: u64,
    pub duration_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything the analysis passes need from one page.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteSnapshot {
    pub document_url: Url,
    #[serde(skip)]
    pub html: String,
    #[serde(skip)]
    pub scripts: Vec<ScriptBody>,
    pub manifest_url: Option<Url>,
    #[serde(skip)]
    pub manifest: Option<AppManifest>,
    /// Why a linked manifest could not be used, if it could not.
    pub manifest_error: Option<String>,
    pub fetch_log: Vec<FetchRecord>,
}

impl SiteSnapshot {
    pub fn new(document_url: Url, html: String) -> Self {
        SiteSnapshot {
            document_url,
            html,
            scripts: Vec::new(),
            manifest_url: None,
            manifest: None,
            manifest_error: None,
            fetch_log: Vec::new(),
        }
    }

    /// Parses manifest text into `manifest`, or records why it failed.
    pub(crate) fn attach_manifest(&mut self, text: &str) {
        match AppManifest::parse(text, self.manifest_url.clone()) {
            Ok(m) => {
                self.manifest = Some(m);
                self.manifest_error = None;
            }
            Err(e) => {
                self.manifest = None;
                self.manifest_error = Some(e);
            }
        }
    }
}
