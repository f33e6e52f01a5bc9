//! Offline sites: a directory holding `site.json` plus the files it names.
//!
//! ```json
//! {"document_url": "https://a.example/",
//!  "files": [{"role": "document", "path": "index.html", "url": "https://a.example/"},
//!            {"role": "manifest", "path": "manifest.json", "url": "https://a.example/manifest.json"},
//!            {"role": "script", "path": "app.js", "url": "https://a.example/app.js"}]}
//! ```
//!
//! The document is processed exactly like a fetched one: its manifest link and
//! `<script src>` references are resolved and looked up among the listed files.
//! A referenced resource that is not listed is logged as a 404.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use url::Url;

use super::html::{extract, ScriptRef};
use super::snapshot::{FetchRecord, ScriptBody, ScriptSource, SiteSnapshot};

pub const SITE_FILE: &str = "site.json";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed site.json: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Role {
    Document,
    Manifest,
    Script,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntry {
    role: Role,
    path: String,
    url: Url,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteFile {
    document_url: Url,
    files: Vec<FileEntry>,
}

pub fn load_fixture(dir: &Path) -> Result<SiteSnapshot, FixtureError> {
    let site_path = dir.join(SITE_FILE);
    let text = fs::read_to_string(&site_path).map_err(|source| FixtureError::Io {
        path: site_path.clone(),
        source,
    })?;
    let site: SiteFile = serde_json::from_str(&text).map_err(|source| FixtureError::Parse {
        path: site_path.clone(),
        source,
    })?;
    let malformed = |reason: String| FixtureError::Malformed {
        path: site_path.clone(),
        reason,
    };

    let documents: Vec<&FileEntry> = site
        .files
        .iter()
        .filter(|f| f.role == Role::Document)
        .collect();
    let [document] = documents[..] else {
        return Err(malformed(format!(
            "expected exactly one document file, found {}",
            documents.len()
        )));
    };
    if document.url != site.document_url {
        return Err(malformed(
            "document file url differs from document_url".into(),
        ));
    }
    for f in &site.files {
        if Path::new(&f.path).is_absolute() || f.path.split(['/', '\\']).any(|c| c == "..") {
            return Err(malformed(format!(
                "file path `{}` leaves the fixture",
                f.path
            )));
        }
    }

    let read = |entry: &FileEntry| -> Result<String, FixtureError> {
        let path = dir.join(&entry.path);
        fs::read(&path)
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .map_err(|source| FixtureError::Io { path, source })
    };
    let record = |url: &Url, body: Option<&str>| FetchRecord {
        url: url.to_string(),
        status: Some(if body.is_some() { 200 } else { 404 }),
        bytes: body.map_or(0, |b| b.len() as u64),
        duration_ms: 0,
        error: body.is_none().then(|| "not present in fixture".to_string()),
    };
    let lookup =
        |url: &Url, role: Role| site.files.iter().find(|f| f.role == role && &f.url == url);

    let html = read(document)?;
    let refs = extract(&html, &site.document_url);
    let mut snapshot = SiteSnapshot::new(site.document_url.clone(), html);
    snapshot
        .fetch_log
        .push(record(&site.document_url, Some(&snapshot.html)));
    snapshot.manifest_url = refs.manifest.clone();

    if let Some(url) = &refs.manifest {
        match lookup(url, Role::Manifest) {
            Some(entry) => {
                let text = read(entry)?;
                snapshot.fetch_log.push(record(url, Some(&text)));
                snapshot.attach_manifest(&text);
            }
            None => {
                snapshot.fetch_log.push(record(url, None));
                snapshot.manifest_error = Some("manifest could not be fetched".into());
            }
        }
    }

    let mut seen: Vec<(Url, Option<String>)> = Vec::new();
    for script in refs.scripts {
        match script {
            ScriptRef::Inline { position, body } => snapshot.scripts.push(ScriptBody {
                source: ScriptSource::Inline { position },
                body,
            }),
            ScriptRef::External(url) => {
                let body = match seen.iter().find(|(u, _)| *u == url) {
                    Some((_, b)) => b.clone(),
                    None => {
                        let body = lookup(&url, Role::Script).map(read).transpose()?;
                        snapshot.fetch_log.push(record(&url, body.as_deref()));
                        seen.push((url.clone(), body.clone()));
                        body
                    }
                };
                if let Some(body) = body {
                    snapshot.scripts.push(ScriptBody {
                        source: ScriptSource::External { url },
                        body,
                    });
                }
            }
        }
    }
    Ok(snapshot)
}
