#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

#[derive(Clone)]
pub struct Route {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub delay: Duration,
}

impl Route {
    pub fn ok(body: &str) -> Route {
        Route {
            status: 200,
            headers: Vec::new(),
            body: body.as_bytes().to_vec(),
            delay: Duration::ZERO,
        }
    }

    pub fn redirect(to: &str) -> Route {
        Route {
            status: 302,
            headers: vec![("Location".into(), to.into())],
            body: Vec::new(),
            delay: Duration::ZERO,
        }
    }

    pub fn slow(body: &str, delay: Duration) -> Route {
        Route {
            delay,
            ..Route::ok(body)
        }
    }
}

/// Minimal HTTP/1.1 server on 127.0.0.1 that counts requests per path.
pub struct TestServer {
    pub base: String,
    hits: Arc<Mutex<HashMap<String, usize>>>,
}

impl TestServer {
    pub fn start(routes: Vec<(&str, Route)>) -> TestServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let routes: Arc<HashMap<String, Route>> = Arc::new(
            routes
                .into_iter()
                .map(|(p, r)| (p.to_string(), r))
                .collect(),
        );
        let hits = Arc::new(Mutex::new(HashMap::new()));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let routes = routes.clone();
                let counter = counter.clone();
                thread::spawn(move || serve(stream, &routes, &counter));
            }
        });
        TestServer { base, hits }
    }

    pub fn url(&self, path: &str) -> url::Url {
        url::Url::parse(&format!("{}{}", self.base, path)).unwrap()
    }

    pub fn hits(&self, path: &str) -> usize {
        self.hits.lock().unwrap().get(path).copied().unwrap_or(0)
    }

    pub fn total_hits(&self) -> usize {
        self.hits.lock().unwrap().values().sum()
    }
}

fn serve(stream: TcpStream, routes: &HashMap<String, Route>, hits: &Mutex<HashMap<String, usize>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) if line == "\r\n" || line == "\n" => break,
            Ok(_) => {}
        }
    }
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();
    *hits.lock().unwrap().entry(path.clone()).or_default() += 1;
    let route = routes.get(&path).cloned().unwrap_or(Route {
        status: 404,
        headers: Vec::new(),
        body: b"not found".to_vec(),
        delay: Duration::ZERO,
    });
    thread::sleep(route.delay);
    let mut out = stream;
    let mut head = format!(
        "HTTP/1.1 {} X\r\nContent-Length: {}\r\nConnection: close\r\n",
        route.status,
        route.body.len()
    );
    for (k, v) in &route.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    let _ = out.write_all(head.as_bytes());
    let _ = out.write_all(&route.body);
    let _ = out.flush();
}

/// A loopback port with nothing listening on it.
pub fn closed_port() -> u16 {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().port()
}

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn corpus_dir() -> PathBuf {
    crate_dir().join("fixtures").join("corpus")
}

pub fn corpus_sites() -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("site.json").is_file())
        .collect();
    dirs.sort();
    dirs
}

pub fn scenario_path(name: &str) -> PathBuf {
    crate_dir().join("scenarios").join(name)
}

/// Scans the bundled corpus and lists every difference from
/// `expected.json`. Empty means an exact match.
pub fn corpus_mismatches() -> Vec<String> {
    use permlab::scanner::{find_permission_usages, load_fixture, PatternTable, ScanReport};
    use permlab::Registry;
    use serde_json::{json, Value};
    use std::collections::BTreeMap;

    let expected: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus_dir().join("expected.json")).unwrap())
            .unwrap();
    let registry = Registry::embedded();
    let table = PatternTable::embedded(&registry);
    let mut problems = Vec::new();

    let mut snapshots = Vec::new();
    for site in expected["sites"].as_array().unwrap() {
        let dir = corpus_dir().join(site["dir"].as_str().unwrap());
        let snap = load_fixture(&dir).unwrap();
        let check = permlab::scanner::check_installable(&snap);
        let findings = find_permission_usages(&snap, &registry, &table);
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for d in findings.iter().filter_map(|f| f.descriptor.clone()) {
            *counts.entry(d).or_default() += 1;
        }
        let unknown = findings.iter().filter(|f| f.descriptor.is_none()).count();
        let actual = json!({
            "dir": site["dir"],
            "document_url": snap.document_url.as_str(),
            "installable": check.installable,
            "sw_detected": check.sw_detected,
            "app_id": check.app_id,
            "findings": counts,
            "unknown_queries": unknown,
            "fetch_log_entries": snap.fetch_log.len(),
        });
        if &actual != site {
            problems.push(format!(
                "site {}: expected {site}, got {actual}",
                site["dir"]
            ));
        }
        snapshots.push(snap);
    }

    let report = ScanReport::build(snapshots, Vec::new(), &registry, &table);
    let origins: Vec<Value> = report
        .origin_reports
        .iter()
        .map(|r| {
            json!({
                "origin": r.origin,
                "apps": r.apps.len(),
                "multi_pwa": r.multi_pwa,
                "shared_risk_descriptors": r.shared_risk_descriptors,
            })
        })
        .collect();
    if Value::Array(origins.clone()) != expected["origins"] {
        problems.push(format!(
            "origins: expected {}, got {:?}",
            expected["origins"], origins
        ));
    }
    let aggregate = serde_json::to_value(&report.aggregate).unwrap();
    if aggregate != expected["aggregate"] {
        problems.push(format!(
            "aggregate: expected {}, got {aggregate}",
            expected["aggregate"]
        ));
    }
    let counts: Vec<u64> = report
        .aggregate
        .descriptor_usage
        .iter()
        .map(|u| u.apps)
        .collect();
    if counts.windows(2).any(|w| w[0] < w[1]) {
        problems.push("descriptor usage is not sorted descending".into());
    }
    problems
}

pub mod sim {
    use std::sync::Arc;

    use permlab::permstore::{
        leakage_audit, Actor, GrantRecord, PermissionStore, Policy, QueryOutcome, Scope,
        ScopingMode, StoreConfig, UserAction,
    };
    use permlab::{AppManifest, PermissionMatrix, QueryContext, Registry};
    use rand::seq::SliceRandom;
    use rand::Rng;

    pub fn matrix() -> Arc<PermissionMatrix> {
        Arc::new(PermissionMatrix::embedded(&Registry::embedded()))
    }

    pub fn records(store: &PermissionStore) -> Vec<(Scope, String, GrantRecord)> {
        store
            .records()
            .map(|(s, d, r)| (s.clone(), d.to_string(), r.clone()))
            .collect()
    }

    /// Three installed apps with distinct ids on one https origin.
    pub fn suite_apps() -> Vec<Actor> {
        ["mail", "calendar", "drive"]
            .iter()
            .map(|slug| {
                let manifest = AppManifest::parse(
                    &format!(
                        r#"{{"name":"{slug}","display":"standalone","start_url":"/{slug}/"}}"#
                    ),
                    None,
                )
                .unwrap();
                Actor::new(&format!("https://suite.example/{slug}/"), Some(manifest)).unwrap()
            })
            .collect()
    }

    const DESCRIPTORS: [&str; 8] = [
        "geolocation",
        "camera",
        "microphone",
        "notifications",
        "clipboard-read",
        "clipboard-write",
        "midi",
        "nfc",
    ];

    #[derive(Debug, Default)]
    pub struct Trial {
        /// Prompts the user answered with Allow.
        pub grants: usize,
        /// Largest leakage audit seen after any event.
        pub max_leak_entries: usize,
        /// A query or request returned an outcome decided by another app.
        pub cross_app_visible: bool,
    }

    /// Replays one random event sequence against a fresh store in `mode`,
    /// auditing after every event. The same RNG state replays the same
    /// sequence in either mode.
    pub fn trial<R: Rng>(rng: &mut R, mode: ScopingMode, matrix: &Arc<PermissionMatrix>) -> Trial {
        let policy = match rng.gen_range(0..3) {
            0 => Policy::Persistent,
            1 => Policy::Adaptive,
            _ => Policy::ephemeral_default(),
        };
        let target = [
            "android-chrome",
            "desktop-chrome",
            "android-firefox",
            "ios-combined",
        ]
        .choose(rng)
        .unwrap()
        .to_string();
        let context = if rng.gen_bool(0.5) {
            QueryContext::InstalledPwa
        } else {
            QueryContext::BrowserTab
        };
        let mut store = PermissionStore::new(
            StoreConfig {
                scoping_mode: mode,
                policy,
                target,
                context,
                auto_deny_threshold: rng.gen_range(1..=4),
            },
            matrix.clone(),
        )
        .unwrap();
        let apps = suite_apps();
        let mut out = Trial::default();
        let steps = rng.gen_range(1..=24);
        for _ in 0..steps {
            let app = &apps[rng.gen_range(0..apps.len())];
            let descriptor = *DESCRIPTORS.choose(rng).unwrap();
            let roll = rng.gen_range(0..10);
            let intent = match rng.gen_range(0..3) {
                0 => UserAction::Allow {
                    remember: rng.gen_bool(0.5),
                },
                1 => UserAction::Deny {
                    remember: rng.gen_bool(0.5),
                },
                _ => UserAction::Ignore,
            };
            let resolution = match roll {
                0 => {
                    store.session_end(app);
                    None
                }
                1..=3 => Some(store.query_detailed(app, descriptor)),
                _ => {
                    // The prompt shows exactly when a query would say Prompt.
                    let prompts = store.query(app, descriptor) == QueryOutcome::Prompt;
                    let action = if prompts {
                        intent
                    } else {
                        UserAction::NoPromptNeeded
                    };
                    let r = store.request_detailed(app, descriptor, action).unwrap();
                    if r.prompted && matches!(action, UserAction::Allow { .. }) {
                        out.grants += 1;
                    }
                    Some(r)
                }
            };
            if let Some(r) = resolution {
                out.cross_app_visible |= r.inherited_from.is_some();
            }
            out.max_leak_entries = out
                .max_leak_entries
                .max(leakage_audit(&store, &apps).entries.len());
        }
        out
    }
}
