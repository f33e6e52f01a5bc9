//! C ABI for permlab.
//!
//! Structured values cross the boundary as UTF-8 JSON strings. Every function
//! returns a [`PermlabStatus`]; on failure a message is available from
//! [`permlab_last_error_message`] on the same thread. Strings handed out by
//! this library are released with [`permlab_string_free`], handles with
//! their matching `_free` function.
//!
//! A `PermlabLab` is immutable once built and may be shared across threads. A
//! `PermlabStore` is a mutable state machine and needs external
//! synchronization if used from more than one thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use permlab::fingerprint::partition;
use permlab::permstore::{
    leakage_audit, run_scenario, Actor, PermissionStore, QueryOutcome, Scenario, ScenarioError,
    StoreConfig, StoreError, UserAction,
};
use permlab::scanner::{load_fixture, PatternTable, ScanFailure, ScanReport};
use permlab::{
    classify, classify_among, load_matrix, load_registry, plan_probes, AppManifest, Observation,
    PermissionMatrix, QueryContext, Registry,
};
use serde_json::{json, Value};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermlabStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed JSON or a value outside its domain.
    InvalidInput = 3,
    /// Unknown descriptor, target or other name.
    NotFound = 4,
    /// A panic was caught at the boundary. The handle involved should not be
    /// used further.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermlabOutcome {
    Granted = 0,
    Denied = 1,
    Prompt = 2,
    Unsupported = 3,
}

impl From<QueryOutcome> for PermlabOutcome {
    fn from(o: QueryOutcome) -> Self {
        match o {
            QueryOutcome::Granted => PermlabOutcome::Granted,
            QueryOutcome::Denied => PermlabOutcome::Denied,
            QueryOutcome::Prompt => PermlabOutcome::Prompt,
            QueryOutcome::Unsupported => PermlabOutcome::Unsupported,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermlabAction {
    Allow = 0,
    Deny = 1,
    Ignore = 2,
    /// The caller expects no prompt.
    None = 3,
}

/// Registry, matrix and scanner patterns.
pub struct PermlabLab {
    registry: Registry,
    matrix: Arc<PermissionMatrix>,
    patterns: PatternTable,
}

/// A simulated permission store.
pub struct PermlabStore {
    store: PermissionStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

#[derive(Debug)]
struct Failure(PermlabStatus, String);

impl Failure {
    fn new(status: PermlabStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', "\\0")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records any error and converts panics to `Internal`.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> PermlabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PermlabStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            PermlabStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::new(
            PermlabStatus::NullArgument,
            format!("`{what}` is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PermlabStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure::new(PermlabStatus::NullArgument, format!("`{what}` is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Failure::new(PermlabStatus::NullArgument, format!("`{what}` is null")))
}

fn invalid(msg: impl ToString) -> Failure {
    Failure::new(PermlabStatus::InvalidInput, msg.to_string())
}

fn not_found(msg: impl ToString) -> Failure {
    Failure::new(PermlabStatus::NotFound, msg.to_string())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "\\u0000"))
        .expect("nul bytes replaced")
        .into_raw()
}

unsafe fn write_out<T>(out: *mut T, value: T) -> FfiResult<()> {
    let slot = mut_arg(out, "out")?;
    *slot = value;
    Ok(())
}

unsafe fn write_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> FfiResult<()> {
    let text = serde_json::to_string(value).map_err(invalid)?;
    let slot = mut_arg(out, "out")?;
    *slot = to_c_string(text);
    Ok(())
}

fn parse_context(s: Option<&str>) -> FfiResult<QueryContext> {
    s.map_or(Ok(QueryContext::default()), |s| s.parse().map_err(invalid))
}

/// Actor JSON: `{"document_url": "...", "manifest": {...}, "manifest_url": "..."}`
/// with `manifest` and `manifest_url` optional.
fn parse_actor(text: &str) -> FfiResult<Actor> {
    let v: Value = serde_json::from_str(text).map_err(|e| invalid(format!("actor: {e}")))?;
    actor_from_value(&v)
}

fn actor_from_value(v: &Value) -> FfiResult<Actor> {
    let doc = v
        .get("document_url")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("actor needs a string `document_url`"))?;
    let doc = url::Url::parse(doc).map_err(|e| invalid(format!("document_url: {e}")))?;
    let manifest_url = match v.get("manifest_url") {
        None | Some(Value::Null) => None,
        Some(Value::String(u)) => Some(
            doc.join(u)
                .map_err(|e| invalid(format!("manifest_url: {e}")))?,
        ),
        Some(_) => return Err(invalid("`manifest_url` must be a string")),
    };
    let manifest = match v.get("manifest") {
        None | Some(Value::Null) => None,
        Some(m) => Some(
            AppManifest::from_value(m.clone(), manifest_url)
                .ok_or_else(|| invalid("`manifest` must be a JSON object"))?,
        ),
    };
    Actor::from_url(doc, manifest).map_err(invalid)
}

fn store_error(e: StoreError) -> Failure {
    match e {
        StoreError::UnknownTarget(_) | StoreError::UnknownException(_) => not_found(e),
        _ => invalid(e),
    }
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn permlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message on this thread, or null when the last call
/// succeeded. Free with `permlab_string_free`.
#[no_mangle]
pub extern "C" fn permlab_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn permlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a lab. Each JSON argument may be null to use the embedded data.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_lab_new(
    registry_json: *const c_char,
    matrix_json: *const c_char,
    patterns_json: *const c_char,
    out: *mut *mut PermlabLab,
) -> PermlabStatus {
    guard(|| {
        let registry = match opt_str_arg(registry_json, "registry_json")? {
            Some(t) => load_registry(t).map_err(invalid)?,
            None => Registry::embedded(),
        };
        let matrix = match opt_str_arg(matrix_json, "matrix_json")? {
            Some(t) => load_matrix(t, &registry).map_err(invalid)?,
            None => PermissionMatrix::embedded(&registry),
        };
        let patterns = match opt_str_arg(patterns_json, "patterns_json")? {
            Some(t) => PatternTable::from_json(t, &registry).map_err(invalid)?,
            None => PatternTable::embedded(&registry),
        };
        let lab = Box::new(PermlabLab {
            registry,
            matrix: Arc::new(matrix),
            patterns,
        });
        write_out(out, Box::into_raw(lab))
    })
}

/// # Safety
/// `lab` must be null or a handle from `permlab_lab_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn permlab_lab_free(lab: *mut PermlabLab) {
    if !lab.is_null() {
        drop(Box::from_raw(lab));
    }
}

/// Writes the registry as a JSON array of descriptors.
///
/// # Safety
/// `lab` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_registry_json(
    lab: *const PermlabLab,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        write_json(out, &lab.registry.descriptors())
    })
}

/// Writes the raw state code (`g`, `p`, `d`, `-` or `g*`) of one matrix cell.
///
/// # Safety
/// `lab` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_matrix_cell(
    lab: *const PermlabLab,
    descriptor: *const c_char,
    target: *const c_char,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        let d = str_arg(descriptor, "descriptor")?;
        let t = str_arg(target, "target")?;
        let cell = lab.matrix.cell(d, t).map_err(not_found)?;
        write_out(out, to_c_string(cell.code().to_string()))
    })
}

/// Classifies an observation such as
/// `{"context": "tab", "states": {"nfc": "denied"}}`. `candidates_json` is
/// null for all targets or a JSON array of target ids.
///
/// # Safety
/// `lab` must be a live handle; strings null or NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_classify(
    lab: *const PermlabLab,
    observation_json: *const c_char,
    candidates_json: *const c_char,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        let obs = Observation::from_json(str_arg(observation_json, "observation_json")?)
            .map_err(invalid)?;
        let result = match opt_str_arg(candidates_json, "candidates_json")? {
            None => classify(&obs, &lab.matrix),
            Some(c) => {
                let ids: Vec<String> = serde_json::from_str(c).map_err(invalid)?;
                let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
                classify_among(&obs, &lab.matrix, &ids)
            }
        }
        .map_err(not_found)?;
        write_json(out, &result)
    })
}

/// Plans probes separating the targets in `targets_json` (a JSON array of
/// ids). `context` is `installed`, `tab` or null for tab. Writes
/// `{"probes": [...], "groups": [[...]], "verified": bool}`.
///
/// # Safety
/// `lab` must be a live handle; strings null or NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_plan_probes(
    lab: *const PermlabLab,
    targets_json: *const c_char,
    max_probes: u32,
    context: *const c_char,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        let ids: Vec<String> =
            serde_json::from_str(str_arg(targets_json, "targets_json")?).map_err(invalid)?;
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        let ctx = parse_context(opt_str_arg(context, "context")?)?;
        let probes = plan_probes(&ids, &lab.matrix, max_probes as usize, ctx).map_err(not_found)?;
        let groups = partition(&ids, &probes, &lab.matrix, ctx).map_err(not_found)?;
        let verified = groups.iter().all(|g| g.len() == 1);
        write_json(
            out,
            &json!({"probes": probes, "groups": groups, "verified": verified}),
        )
    })
}

/// Replays a scenario document and writes its trace. A scenario whose
/// expectations fail still returns `Ok`; check `"passed"` in the trace.
///
/// # Safety
/// `lab` must be a live handle; `scenario_json` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_run_scenario(
    lab: *const PermlabLab,
    scenario_json: *const c_char,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        let scenario = Scenario::from_json(str_arg(scenario_json, "scenario_json")?, &lab.matrix)
            .map_err(invalid)?;
        let trace = run_scenario(&scenario, lab.matrix.clone()).map_err(|e| match e {
            ScenarioError::Config(e) => store_error(e),
            e => invalid(e),
        })?;
        write_json(out, &trace)
    })
}

/// Scans offline fixture sites and writes the report. `dirs_json` is a JSON
/// array of directory paths. Unreadable fixtures appear under `"failures"`.
///
/// # Safety
/// `lab` must be a live handle; `dirs_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_scan_fixtures(
    lab: *const PermlabLab,
    dirs_json: *const c_char,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        let dirs: Vec<String> =
            serde_json::from_str(str_arg(dirs_json, "dirs_json")?).map_err(invalid)?;
        let mut snapshots = Vec::new();
        let mut failures = Vec::new();
        for dir in dirs {
            match load_fixture(Path::new(&dir)) {
                Ok(s) => snapshots.push(s),
                Err(e) => failures.push(ScanFailure {
                    target: dir,
                    kind: "fixture".into(),
                    message: e.to_string(),
                }),
            }
        }
        let report = ScanReport::build(snapshots, failures, &lab.registry, &lab.patterns);
        write_json(out, &report)
    })
}

/// Creates a store. `config_json` takes the shape of a scenario `config`
/// object; null means all defaults. The store stays valid after the lab is
/// freed.
///
/// # Safety
/// `lab` must be a live handle; `config_json` null or NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_store_new(
    lab: *const PermlabLab,
    config_json: *const c_char,
    out: *mut *mut PermlabStore,
) -> PermlabStatus {
    guard(|| {
        let lab = ref_arg(lab, "lab")?;
        let config = match opt_str_arg(config_json, "config_json")? {
            Some(t) => StoreConfig::from_json(t).map_err(invalid)?,
            None => StoreConfig::default(),
        };
        let store = PermissionStore::new(config, lab.matrix.clone()).map_err(store_error)?;
        write_out(out, Box::into_raw(Box::new(PermlabStore { store })))
    })
}

/// # Safety
/// `store` must be null or a handle from `permlab_store_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn permlab_store_free(store: *mut PermlabStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Read-only query. Unknown descriptor names yield `Unsupported`.
///
/// # Safety
/// `store` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_store_query(
    store: *const PermlabStore,
    actor_json: *const c_char,
    descriptor: *const c_char,
    out: *mut PermlabOutcome,
) -> PermlabStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        let actor = parse_actor(str_arg(actor_json, "actor_json")?)?;
        let d = str_arg(descriptor, "descriptor")?;
        write_out(out, store.store.query(&actor, d).into())
    })
}

/// Requests a permission, applying `action` if a prompt is shown.
///
/// # Safety
/// `store` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_store_request(
    store: *mut PermlabStore,
    actor_json: *const c_char,
    descriptor: *const c_char,
    action: PermlabAction,
    remember: bool,
    out: *mut PermlabOutcome,
) -> PermlabStatus {
    guard(|| {
        let store = mut_arg(store, "store")?;
        let actor = parse_actor(str_arg(actor_json, "actor_json")?)?;
        let d = str_arg(descriptor, "descriptor")?;
        let action = match action {
            PermlabAction::Allow => UserAction::Allow { remember },
            PermlabAction::Deny => UserAction::Deny { remember },
            PermlabAction::Ignore => UserAction::Ignore,
            PermlabAction::None => UserAction::NoPromptNeeded,
        };
        let outcome = store
            .store
            .request(&actor, d, action)
            .map_err(store_error)?;
        write_out(out, outcome.into())
    })
}

/// Session boundary for the actor's scope. Closing an installed app is the
/// same operation.
///
/// # Safety
/// `store` must be a live handle; `actor_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn permlab_store_session_end(
    store: *mut PermlabStore,
    actor_json: *const c_char,
) -> PermlabStatus {
    guard(|| {
        let store = mut_arg(store, "store")?;
        let actor = parse_actor(str_arg(actor_json, "actor_json")?)?;
        store.store.session_end(&actor);
        Ok(())
    })
}

/// Writes the leakage audit for the actors in `actors_json`, a JSON array of
/// actor objects.
///
/// # Safety
/// `store` must be a live handle; `actors_json` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_store_leakage_audit(
    store: *const PermlabStore,
    actors_json: *const c_char,
    out: *mut *mut c_char,
) -> PermlabStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        let v: Vec<Value> =
            serde_json::from_str(str_arg(actors_json, "actors_json")?).map_err(invalid)?;
        let actors = v
            .iter()
            .map(actor_from_value)
            .collect::<FfiResult<Vec<_>>>()?;
        write_json(out, &leakage_audit(&store.store, &actors))
    })
}
