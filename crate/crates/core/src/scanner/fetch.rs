//! Live fetching with per-site limits.
//!
//! Redirects are followed by hand so that every hop lands in the fetch log
//! and counts against `max_redirects`. Each distinct URL is requested at most
//! once per site and nothing is retried.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;
use ureq::Agent;
use url::Url;

use super::html::{extract, ScriptRef};
use super::snapshot::{FetchRecord, ScriptBody, ScriptSource, SiteSnapshot};

pub const DEFAULT_SITE_CONCURRENCY: usize = 8;
/// Subresource requests in flight per site.
pub const PER_SITE_WORKERS: usize = 2;

const USER_AGENT: &str = concat!("permlab/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchLimits {
    pub per_site_timeout: Duration,
    pub max_redirects: u32,
    /// Per resource.
    pub max_body_bytes: u64,
    pub max_scripts: usize,
}

impl Default for FetchLimits {
    fn default() -> Self {
        FetchLimits {
            per_site_timeout: Duration::from_secs(30),
            max_redirects: 5,
            max_body_bytes: 5_242_880,
            max_scripts: 64,
        }
    }
}

impl FetchLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.per_site_timeout.is_zero() {
            return Err("per-site timeout must be positive".into());
        }
        if self.max_redirects == 0 {
            return Err("max_redirects must be positive".into());
        }
        if self.max_body_bytes == 0 {
            return Err("max_body_bytes must be positive".into());
        }
        if self.max_scripts == 0 {
            return Err("max_scripts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid site URL `{0}`: expected absolute http(s)")]
    InvalidUrl(String),
    #[error("invalid fetch limits: {0}")]
    InvalidLimits(String),
    #[error("{url} unreachable: {reason}")]
    Unreachable {
        url: String,
        reason: String,
        fetch_log: Vec<FetchRecord>,
    },
    #[error("{url}: more than {limit} redirects")]
    RedirectLimit {
        url: String,
        limit: u32,
        fetch_log: Vec<FetchRecord>,
    },
    #[error("{}: site timeout exceeded", .partial.document_url)]
    Timeout { partial: Box<SiteSnapshot> },
}

impl FetchError {
    pub fn kind(&self) -> &'static str {
        match self {
            FetchError::InvalidUrl(_) => "invalid-url",
            FetchError::InvalidLimits(_) => "invalid-limits",
            FetchError::Unreachable { .. } => "unreachable",
            FetchError::RedirectLimit { .. } => "redirect-limit",
            FetchError::Timeout { .. } => "timeout",
        }
    }

    pub fn fetch_log(&self) -> &[FetchRecord] {
        match self {
            FetchError::Unreachable { fetch_log, .. }
            | FetchError::RedirectLimit { fetch_log, .. } => fetch_log,
            FetchError::Timeout { partial } => &partial.fetch_log,
            _ => &[],
        }
    }
}

enum Failure {
    Timeout,
    Redirects,
    Other(String),
}

struct Fetched {
    final_url: Url,
    body: Vec<u8>,
}

struct Site<'a> {
    agent: Agent,
    limits: &'a FetchLimits,
    deadline: Instant,
}

impl Site<'_> {
    /// One resource, following redirects. Every request is appended to `log`.
    fn get(&self, url: &Url, log: &mut Vec<FetchRecord>) -> Result<Fetched, Failure> {
        let mut current = url.clone();
        let mut hops = 0u32;
        loop {
            let remaining = self.deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(Failure::Timeout);
            }
            let started = Instant::now();
            let mut record = FetchRecord {
                url: current.to_string(),
                status: None,
                bytes: 0,
                duration_ms: 0,
                error: None,
            };
            let result = self
                .agent
                .get(current.as_str())
                .config()
                .timeout_global(Some(remaining))
                .build()
                .call();
            let mut response = match result {
                Ok(r) => r,
                Err(e) => {
                    let timed_out = self.timed_out(&e);
                    record.duration_ms = elapsed_ms(started);
                    record.error = Some(e.to_string());
                    log.push(record);
                    return Err(if timed_out {
                        Failure::Timeout
                    } else {
                        Failure::Other(e.to_string())
                    });
                }
            };
            let status = response.status();
            record.status = Some(status.as_u16());
            if status.is_redirection() {
                record.duration_ms = elapsed_ms(started);
                let target = response
                    .headers()
                    .get("location")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|loc| current.join(loc).ok());
                let Some(target) = target else {
                    record.error = Some("redirect without a usable Location".into());
                    log.push(record);
                    return Err(Failure::Other(format!("HTTP {status} without Location")));
                };
                log.push(record);
                hops += 1;
                if hops > self.limits.max_redirects {
                    return Err(Failure::Redirects);
                }
                if !matches!(target.scheme(), "http" | "https") {
                    return Err(Failure::Other(format!("redirect to non-http URL {target}")));
                }
                current = target;
                continue;
            }
            let body = response
                .body_mut()
                .with_config()
                .limit(self.limits.max_body_bytes)
                .read_to_vec();
            record.duration_ms = elapsed_ms(started);
            match body {
                Ok(bytes) => {
                    record.bytes = bytes.len() as u64;
                    if !status.is_success() {
                        record.error = Some(format!("HTTP {}", status.as_u16()));
                        log.push(record);
                        return Err(Failure::Other(format!("HTTP {}", status.as_u16())));
                    }
                    log.push(record);
                    return Ok(Fetched {
                        final_url: current,
                        body: bytes,
                    });
                }
                Err(e) => {
                    let timed_out = self.timed_out(&e);
                    record.error = Some(e.to_string());
                    log.push(record);
                    return Err(if timed_out {
                        Failure::Timeout
                    } else {
                        Failure::Other(e.to_string())
                    });
                }
            }
        }
    }

    fn timed_out(&self, e: &ureq::Error) -> bool {
        matches!(e, ureq::Error::Timeout(_)) || Instant::now() >= self.deadline
    }
}

fn elapsed_ms(since: Instant) -> u64 {
    since.elapsed().as_millis().min(u64::MAX as u128) as u64
}

/// Fetches the document, its manifest and its external scripts.
///
/// Subresource failures are recorded in the fetch log and the resource is
/// left out; only document failures and the site deadline are errors.
pub fn fetch_site(url: &Url, limits: &FetchLimits) -> Result<SiteSnapshot, FetchError> {
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return Err(FetchError::InvalidUrl(url.to_string()));
    }
    limits.validate().map_err(FetchError::InvalidLimits)?;
    let config = Agent::config_builder()
        .http_status_as_error(false)
        .max_redirects(0)
        .user_agent(USER_AGENT)
        .build();
    let site = Site {
        agent: config.new_agent(),
        limits,
        deadline: Instant::now() + limits.per_site_timeout,
    };

    let mut log = Vec::new();
    let document = match site.get(url, &mut log) {
        Ok(d) => d,
        Err(Failure::Timeout) => {
            let mut partial = SiteSnapshot::new(url.clone(), String::new());
            partial.fetch_log = log;
            return Err(FetchError::Timeout {
                partial: Box::new(partial),
            });
        }
        Err(Failure::Redirects) => {
            return Err(FetchError::RedirectLimit {
                url: url.to_string(),
                limit: limits.max_redirects,
                fetch_log: log,
            })
        }
        Err(Failure::Other(reason)) => {
            return Err(FetchError::Unreachable {
                url: url.to_string(),
                reason,
                fetch_log: log,
            })
        }
    };

    let html = String::from_utf8_lossy(&document.body).into_owned();
    let refs = extract(&html, &document.final_url);
    let mut snapshot = SiteSnapshot::new(document.final_url, html);
    snapshot.manifest_url = refs.manifest.clone();

    // Distinct subresource URLs in document order, manifest first.
    let mut queue: Vec<Url> = Vec::new();
    if let Some(m) = &refs.manifest {
        queue.push(m.clone());
    }
    for script in refs.scripts.iter().take(limits.max_scripts) {
        if let ScriptRef::External(u) = script {
            if !queue.contains(u) {
                queue.push(u.clone());
            }
        }
    }

    let (results, sub_log, timed_out) = fetch_all(&site, &queue);
    log.extend(sub_log);
    snapshot.fetch_log = log;

    let body_of = |u: &Url| -> Option<String> {
        let i = queue.iter().position(|q| q == u)?;
        results[i]
            .as_ref()
            .map(|bytes| String::from_utf8_lossy(bytes).into_owned())
    };
    if let Some(m) = &refs.manifest {
        match body_of(m) {
            Some(text) => snapshot.attach_manifest(&text),
            None => snapshot.manifest_error = Some("manifest could not be fetched".into()),
        }
    }
    for script in refs.scripts.into_iter().take(limits.max_scripts) {
        match script {
            ScriptRef::Inline { position, body } => snapshot.scripts.push(ScriptBody {
                source: ScriptSource::Inline { position },
                body,
            }),
            ScriptRef::External(u) => {
                if let Some(body) = body_of(&u) {
                    snapshot.scripts.push(ScriptBody {
                        source: ScriptSource::External { url: u },
                        body,
                    });
                }
            }
        }
    }

    if timed_out {
        return Err(FetchError::Timeout {
            partial: Box::new(snapshot),
        });
    }
    Ok(snapshot)
}

/// Body (if fetched) and log entries for one queued URL.
type Slot = (Option<Vec<u8>>, Vec<FetchRecord>);

/// Fetches `urls` with at most [`PER_SITE_WORKERS`] requests in flight.
/// Log entries keep queue order.
fn fetch_all(site: &Site<'_>, urls: &[Url]) -> (Vec<Option<Vec<u8>>>, Vec<FetchRecord>, bool) {
    let next = Mutex::new(0usize);
    let slots: Mutex<Vec<Slot>> = Mutex::new((0..urls.len()).map(|_| (None, Vec::new())).collect());
    let timed_out = Mutex::new(false);
    thread::scope(|s| {
        for _ in 0..PER_SITE_WORKERS.min(urls.len()) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    if *n >= urls.len() || *timed_out.lock().unwrap() {
                        return;
                    }
                    *n += 1;
                    *n - 1
                };
                let mut log = Vec::new();
                let body = match site.get(&urls[i], &mut log) {
                    Ok(f) => Some(f.body),
                    Err(Failure::Timeout) => {
                        *timed_out.lock().unwrap() = true;
                        None
                    }
                    Err(_) => None,
                };
                slots.lock().unwrap()[i] = (body, log);
            });
        }
    });
    let mut bodies = Vec::with_capacity(urls.len());
    let mut log = Vec::new();
    for (body, entries) in slots.into_inner().unwrap() {
        bodies.push(body);
        log.extend(entries);
    }
    (bodies, log, timed_out.into_inner().unwrap())
}

/// Fetches many sites, at most `concurrency` at a time. Results keep input
/// order.
pub fn scan_sites(
    urls: &[Url],
    limits: &FetchLimits,
    concurrency: usize,
) -> Vec<Result<SiteSnapshot, FetchError>> {
    let queue = Mutex::new(urls.iter().enumerate().collect::<VecDeque<_>>());
    let results: Mutex<Vec<Option<Result<SiteSnapshot, FetchError>>>> =
        Mutex::new((0..urls.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..concurrency.max(1).min(urls.len()) {
            s.spawn(|| loop {
                let Some((i, url)) = queue.lock().unwrap().pop_front() else {
                    return;
                };
                let r = fetch_site(url, limits);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every site is fetched"))
        .collect()
}
