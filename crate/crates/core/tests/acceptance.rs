//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use permlab::fingerprint::partition;
use permlab::permstore::{
    derive_app_id, resolve_scope, run_scenario, Actor, PermissionStore, QueryOutcome, Scenario,
    ScenarioTrace, Scope, ScopeError, ScopingMode, StoreConfig, UserAction,
};
use permlab::{
    classify, classify_among, plan_probes, AppManifest, DefaultState, Observation,
    PermissionMatrix, PermissionState, Platform, QueryContext, Registry,
};
use rand::distributions::{Alphanumeric, DistString};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use url::Url;

use common::sim;

type Check = Result<String, String>;

/// Number, name, time bound and check.
type Criterion = (u8, &'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn matrix_fidelity() -> Check {
    let m = PermissionMatrix::embedded(&Registry::embedded());
    let mut cells = vec![
        ("background-sync", "android-brave", DefaultState::Denied),
        ("midi", "desktop-edge", DefaultState::Prompted),
        ("nfc", "android-opera", DefaultState::Denied),
        (
            "periodic-background-sync",
            "android-chrome",
            DefaultState::GrantedWhenInstalled,
        ),
    ];
    let ids: Vec<String> = m.target_ids().map(str::to_string).collect();
    ensure(ids.len() == 9, format!("{} targets", ids.len()))?;
    for t in &ids {
        cells.push(("camera", t, DefaultState::Prompted));
    }
    for (d, t, want) in &cells {
        let got = m.cell(d, t).map_err(|e| e.to_string())?;
        ensure(
            got == *want,
            format!("({d}, {t}) = {} want {}", got.code(), want.code()),
        )?;
    }
    ensure(
        m.entry_count() == 297,
        format!("{} entries", m.entry_count()),
    )?;
    Ok(format!(
        "{} spot-check cells exact, 297 entries",
        cells.len()
    ))
}

fn android_distinctness() -> Check {
    let m = PermissionMatrix::embedded(&Registry::embedded());
    let android = m.targets_on(Platform::Android);
    ensure(android.len() == 6, "six Android targets")?;
    for (i, a) in android.iter().enumerate() {
        for b in &android[i + 1..] {
            let ca = m.column(a).unwrap();
            let cb = m.column(b).unwrap();
            ensure(ca != cb, format!("{a} and {b} have identical columns"))?;
        }
    }
    // Only installed context keeps the raw g*/d difference between
    // android-chrome and android-edge observable.
    let ctx = QueryContext::InstalledPwa;
    for t in &android {
        let obs = Observation::full_column(&m, t, ctx).map_err(|e| e.to_string())?;
        let r = classify_among(&obs, &m, &android).map_err(|e| e.to_string())?;
        ensure(
            r.exact == [t.to_string()],
            format!("{t} ({ctx}) classified among Android as {:?}", r.exact),
        )?;
    }
    Ok(format!("15 raw column pairs distinct; each full column ({ctx}) classifies to itself among the 6 Android targets"))
}

/// Readings of criterion 2 that do not hold for android-chrome. Reported
/// instead of hidden.
fn android_collisions() -> Vec<String> {
    let m = PermissionMatrix::embedded(&Registry::embedded());
    let android = m.targets_on(Platform::Android);
    let mut notes = Vec::new();
    for ctx in [QueryContext::InstalledPwa, QueryContext::BrowserTab] {
        for t in &android {
            let obs = Observation::full_column(&m, t, ctx).unwrap();
            let among = classify_among(&obs, &m, &android).unwrap();
            if among.exact.len() != 1 {
                notes.push(format!(
                    "among Android, {t} ({ctx}) matches {}",
                    among.exact.join(" + ")
                ));
            }
            let all = classify(&obs, &m).unwrap();
            if all.exact.len() != 1 {
                notes.push(format!(
                    "among all 9, {t} ({ctx}) matches {}",
                    all.exact.join(" + ")
                ));
            }
        }
    }
    notes
}

fn single_probes() -> Check {
    let m = PermissionMatrix::embedded(&Registry::embedded());
    let cases = [("accelerometer", "android-brave"), ("nfc", "android-opera")];
    for (d, want) in cases {
        let obs = Observation::new(QueryContext::BrowserTab).with(d, PermissionState::Denied);
        let r = classify(&obs, &m).map_err(|e| e.to_string())?;
        ensure(r.exact == [want], format!("{d}: denied -> {:?}", r.exact))?;
    }
    Ok("accelerometer=denied -> {android-brave}; nfc=denied -> {android-opera}".into())
}

fn separates(m: &PermissionMatrix, targets: &[&str], probes: &[String], ctx: QueryContext) -> bool {
    partition(targets, probes, m, ctx)
        .unwrap()
        .iter()
        .all(|g| g.len() == 1)
}

fn probe_planner() -> Check {
    let m = PermissionMatrix::embedded(&Registry::embedded());
    let android = m.targets_on(Platform::Android);
    let ctx = QueryContext::InstalledPwa;
    let ds: Vec<String> = m.descriptors().to_vec();
    let n = ds.len();
    // Exhaustive oracle over every subset of size 1..=4.
    let mut separating = 0usize;
    let mut smallest = usize::MAX;
    let mut subsets = 0usize;
    let mut visit = |set: &[usize]| {
        subsets += 1;
        let probes: Vec<String> = set.iter().map(|&i| ds[i].clone()).collect();
        if separates(&m, &android, &probes, ctx) {
            separating += 1;
            smallest = smallest.min(set.len());
        }
    };
    for a in 0..n {
        visit(&[a]);
        for b in a + 1..n {
            visit(&[a, b]);
            for c in b + 1..n {
                visit(&[a, b, c]);
                for d in c + 1..n {
                    visit(&[a, b, c, d]);
                }
            }
        }
    }
    ensure(
        separating > 0,
        "no subset of size <= 4 separates the Android targets",
    )?;
    let plan = plan_probes(&android, &m, 4, ctx).map_err(|e| e.to_string())?;
    ensure(plan.len() <= 4, format!("plan has {} probes", plan.len()))?;
    ensure(
        separates(&m, &android, &plan, ctx),
        format!("greedy plan {plan:?} does not separate"),
    )?;
    Ok(format!(
        "greedy plan [{}] separates all 6 ({ctx}); oracle: {separating} of {subsets} subsets separate, smallest size {smallest}",
        plan.join(", ")
    ))
}

fn scenario(file: &str) -> Result<ScenarioTrace, String> {
    let m = Arc::new(PermissionMatrix::embedded(&Registry::embedded()));
    let text = std::fs::read_to_string(common::scenario_path(file)).map_err(|e| e.to_string())?;
    let s = Scenario::from_json(&text, &m).map_err(|e| format!("{file}: {e}"))?;
    let t = run_scenario(&s, m).map_err(|e| format!("{file}: {e}"))?;
    ensure(
        t.passed,
        format!("{file}: failing events {:?}", t.failed_indices()),
    )?;
    Ok(t)
}

fn outcome(t: &ScenarioTrace, i: usize) -> Option<QueryOutcome> {
    t.events.get(i).and_then(|e| e.outcome)
}

fn scoping_and_lifecycle() -> Check {
    use QueryOutcome::*;
    let a = scenario("leakage_origin.json")?;
    let pwa2: Vec<_> = a.events.iter().filter(|e| e.actor == "pwa2").collect();
    ensure(
        outcome(&a, 2) == Some(Granted),
        "(a) second app not granted",
    )?;
    ensure(
        pwa2.iter().all(|e| !e.prompted),
        "(a) second app saw a prompt",
    )?;
    let b = scenario("leakage_perapp.json")?;
    ensure(
        outcome(&b, 1) == Some(Prompt),
        "(b) second app not at prompt",
    )?;
    let c = scenario("ephemeral_reset.json")?;
    ensure(
        (outcome(&c, 4), outcome(&c, 5)) == (Some(Granted), Some(Prompt)),
        "(c) ephemeral reset wrong",
    )?;
    let d = scenario("adaptive_remember.json")?;
    ensure(
        (outcome(&d, 4), outcome(&d, 5)) == (Some(Prompt), Some(Granted)),
        "(d) adaptive remember wrong",
    )?;
    let e = scenario("ignore_threshold.json")?;
    ensure(
        (outcome(&e, 2), outcome(&e, 3), outcome(&e, 8))
            == (Some(Prompt), Some(Denied), Some(Prompt)),
        "(e) ignore threshold wrong",
    )?;
    Ok("(a) inheritance with zero prompts (b) isolation (c) ephemeral exception (d) adaptive remember (e) 3 ignores deny, 2 pend".into())
}

fn crash_regression() -> Check {
    let registry = Registry::embedded();
    let m = sim::matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut names: Vec<String> = registry
        .descriptors()
        .iter()
        .map(|d| d.name.clone())
        .collect();
    let known = names.len();
    while names.len() < known + 1000 {
        let len = rng.gen_range(0..48);
        let name = match rng.gen_range(0..3) {
            0 => Alphanumeric.sample_string(&mut rng, len),
            1 => (0..len).map(|_| rng.gen::<char>()).collect(),
            _ => format!("{}-{}", names[rng.gen_range(0..known)], rng.gen::<u16>()),
        };
        if !registry.contains(&name) {
            names.push(name);
        }
    }
    let mut queries = 0usize;
    for target in m.target_ids() {
        for ctx in [QueryContext::InstalledPwa, QueryContext::BrowserTab] {
            let mut store = PermissionStore::new(
                StoreConfig {
                    target: target.to_string(),
                    context: ctx,
                    ..StoreConfig::default()
                },
                m.clone(),
            )
            .map_err(|e| e.to_string())?;
            let actor = Actor::new("https://attacker.example/", None).unwrap();
            if store.query(&actor, "geolocation") == QueryOutcome::Prompt {
                store
                    .request(&actor, "geolocation", UserAction::Allow { remember: true })
                    .map_err(|e| e.to_string())?;
            }
            let before = sim::records(&store);
            let result = catch_unwind(AssertUnwindSafe(|| {
                for (i, name) in names.iter().enumerate() {
                    let o = store.query(&actor, name);
                    if i >= known && o != QueryOutcome::Unsupported {
                        return Err(format!("unknown `{name}` gave {o} on {target}"));
                    }
                }
                Ok(())
            }));
            match result {
                Err(_) => return Err(format!("query panicked on {target}")),
                Ok(Err(e)) => return Err(e),
                Ok(Ok(())) => {}
            }
            ensure(
                sim::records(&store) == before,
                format!("store changed by queries on {target}"),
            )?;
            queries += names.len();
        }
    }
    Ok(format!("{queries} queries ({known} descriptors + 1000 unknown names x 9 targets x 2 contexts), all in-band, store unmodified"))
}

fn app_id_derivation() -> Check {
    let doc = Url::parse("https://o.example/index.html").unwrap();
    let parse = |j: &str, at: Option<&str>| {
        AppManifest::parse(j, at.map(|u| Url::parse(u).unwrap())).unwrap()
    };
    let m1 = parse(r#"{"id":"com.example.game","start_url":"/play"}"#, None);
    ensure(
        derive_app_id(&m1, &doc).as_deref() == Ok("com.example.game"),
        "id example",
    )?;
    let m2 = parse(
        r#"{"start_url":"/a"}"#,
        Some("https://o.example/m/manifest.json"),
    );
    ensure(
        derive_app_id(&m2, &doc).as_deref() == Ok("https://o.example/a"),
        "start_url example",
    )?;
    ensure(
        derive_app_id(&parse("{}", None), &doc) == Err(ScopeError::NoAppId),
        "empty manifest example",
    )?;

    let with_id = parse(r#"{"id":"game-1"}"#, None);
    ensure(
        resolve_scope(
            "https://o.example",
            Some(&with_id),
            &doc,
            ScopingMode::PerApp,
        ) == Ok(Scope::App("game-1".into())),
        "https + PerApp",
    )?;
    let http_doc = Url::parse("http://o.example/").unwrap();
    ensure(
        resolve_scope(
            "http://o.example",
            Some(&with_id),
            &http_doc,
            ScopingMode::PerApp,
        ) == Ok(Scope::Origin("http://o.example".into())),
        "http + PerApp",
    )?;
    ensure(
        resolve_scope(
            "https://o.example",
            Some(&with_id),
            &doc,
            ScopingMode::PerOrigin,
        ) == Ok(Scope::Origin("https://o.example".into())),
        "https + PerOrigin",
    )?;
    Ok("3 derive_app_id and 3 resolve_scope examples exact".into())
}

fn scanner_corpus() -> Check {
    let sites = common::corpus_sites().len();
    ensure(sites >= 6, format!("only {sites} fixture sites"))?;
    let problems = common::corpus_mismatches();
    ensure(problems.is_empty(), problems.join("; "))?;
    Ok(format!("{sites} sites: verdicts, finding counts, multi-PWA flags, shared risk and sorted aggregate match expected.json"))
}

fn isolation_property() -> Check {
    const SEQUENCES: u64 = 10_000;
    let m = sim::matrix();
    let mut with_grants = 0u64;
    for seed in 0..SEQUENCES {
        let per_app = sim::trial(
            &mut ChaCha8Rng::seed_from_u64(seed),
            ScopingMode::PerApp,
            &m,
        );
        ensure(
            per_app.max_leak_entries == 0 && !per_app.cross_app_visible,
            format!("per-app sequence {seed} leaked"),
        )?;
        let per_origin = sim::trial(
            &mut ChaCha8Rng::seed_from_u64(seed),
            ScopingMode::PerOrigin,
            &m,
        );
        if per_origin.grants > 0 {
            with_grants += 1;
            ensure(
                per_origin.max_leak_entries > 0,
                format!("per-origin sequence {seed} granted but never leaked"),
            )?;
        }
    }
    Ok(format!(
        "{SEQUENCES} sequences: per-app audits all empty; per-origin leaked in all {with_grants} sequences with a grant"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            1,
            "matrix fidelity",
            Duration::from_secs(1),
            matrix_fidelity,
        ),
        (
            2,
            "android column distinctness",
            Duration::from_secs(1),
            android_distinctness,
        ),
        (
            3,
            "single-probe identifications",
            Duration::from_secs(1),
            single_probes,
        ),
        (4, "probe planner", Duration::from_secs(10), probe_planner),
        (
            5,
            "scoping and lifecycle suite",
            Duration::from_secs(5),
            scoping_and_lifecycle,
        ),
        (
            6,
            "crash-attack regression",
            Duration::from_secs(5),
            crash_regression,
        ),
        (
            7,
            "app-id derivation",
            Duration::from_secs(1),
            app_id_derivation,
        ),
        (
            8,
            "scanner fixture corpus",
            Duration::from_secs(5),
            scanner_corpus,
        ),
        (
            9,
            "isolation property",
            Duration::from_secs(30),
            isolation_property,
        ),
    ];
    let mut failed = 0;
    for (n, name, bound, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let result = match result {
            Ok(detail) if elapsed > bound => Err(format!("{detail}; too slow")),
            other => other,
        };
        let (verdict, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {n} {verdict}: {name} [{} ms, bound {} ms] {detail}",
            elapsed.as_millis(),
            bound.as_millis()
        );
        if n == 2 {
            for note in android_collisions() {
                println!("criterion 2 note: {note}");
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
