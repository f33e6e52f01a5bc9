//! The `permlab` command line.
//!
//! [`run`] is the whole program short of process exit, so tests can drive it
//! in-process. Exit codes: 0 success, 1 findings with failures (a scenario
//! expectation failed, a scan was partial, a probe plan does not separate its
//! targets), 2 usage or configuration error.

mod table;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use url::Url;

use crate::data::{
    read_document, EMBEDDED_MATRIX, EMBEDDED_PATTERNS, EMBEDDED_REGISTRY, MATRIX_FILE,
    PATTERNS_FILE, REGISTRY_FILE,
};
use crate::fingerprint::{classify_among, partition, plan_probes, Observation};
use crate::matrix::{load_matrix, PermissionMatrix, Platform, QueryContext};
use crate::permstore::{run_scenario, Scenario};
use crate::registry::{load_registry, Category, PermissionDescriptor, Registry};
use crate::scanner::{
    load_fixture, scan_sites, FetchError, FetchLimits, PatternTable, ScanFailure, ScanReport,
    SiteSnapshot, DEFAULT_SITE_CONCURRENCY,
};
use table::{render, yes_no};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    Failures,
    Usage,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Failures => 1,
            ExitStatus::Usage => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "permlab",
    version,
    about = "Inspect PWA permission defaults, fingerprint browsers, simulate permission stores and scan sites"
)]
pub struct Cli {
    /// Registry document (default: embedded, or $PERMLAB_DATA_DIR/registry.json)
    #[arg(long, global = true, value_name = "FILE")]
    registry: Option<PathBuf>,
    /// Matrix document (default: embedded, or $PERMLAB_DATA_DIR/matrix.json)
    #[arg(long, global = true, value_name = "FILE")]
    matrix: Option<PathBuf>,
    /// Pattern table (default: embedded, or $PERMLAB_DATA_DIR/patterns.json)
    #[arg(long, global = true, value_name = "FILE")]
    patterns: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Sites scanned at once
    #[arg(long, global = true, default_value_t = DEFAULT_SITE_CONCURRENCY as u32,
          value_parser = clap::value_parser!(u32).range(1..))]
    concurrency: u32,
    /// Per-site timeout for live scans
    #[arg(long, global = true, default_value_t = 30,
          value_parser = clap::value_parser!(u64).range(1..))]
    timeout_secs: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Permission descriptor catalog
    #[command(subcommand)]
    Registry(RegistryCmd),
    /// Default permission states per browser target
    #[command(subcommand)]
    Matrix(MatrixCmd),
    /// Browser identification from observed default states
    #[command(subcommand)]
    Fingerprint(FingerprintCmd),
    /// Replay a permission-store scenario
    Simulate {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
    },
    /// Scan live sites or fixture directories
    Scan {
        #[arg(long = "url", value_name = "URL")]
        urls: Vec<String>,
        #[arg(long = "fixture-dir", value_name = "DIR")]
        fixture_dirs: Vec<PathBuf>,
        /// Also write the JSON report here
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum RegistryCmd {
    List {
        #[arg(long, value_parser = parse_category)]
        category: Option<Category>,
    },
    Show {
        name: String,
    },
}

#[derive(Debug, Subcommand)]
enum MatrixCmd {
    Show {
        #[arg(long)]
        target: String,
        /// Also resolve cells for this context (installed | tab)
        #[arg(long, value_parser = parse_context)]
        context: Option<QueryContext>,
    },
    Diff {
        a: String,
        b: String,
    },
}

#[derive(Debug, Subcommand)]
enum FingerprintCmd {
    Classify {
        #[arg(long, value_name = "FILE")]
        observation: PathBuf,
        /// Only consider targets on this platform (ios | android | desktop)
        #[arg(long, value_parser = parse_platform)]
        platform: Option<Platform>,
        /// Overrides the observation's context
        #[arg(long, value_parser = parse_context)]
        context: Option<QueryContext>,
    },
    Plan {
        /// Target ids or groups (ios, android, desktop, all), comma separated
        #[arg(long, required = true, value_delimiter = ',')]
        targets: Vec<String>,
        #[arg(long = "max", default_value_t = 4)]
        max_probes: usize,
        #[arg(long, default_value = "installed", value_parser = parse_context)]
        context: QueryContext,
    },
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse().map_err(|_| {
        let tokens: Vec<&str> = Category::ALL.iter().map(|c| c.token()).collect();
        format!("expected one of {}", tokens.join(", "))
    })
}

fn parse_context(s: &str) -> Result<QueryContext, String> {
    s.parse()
        .map_err(|_| "expected `installed` or `tab`".to_string())
}

fn parse_platform(s: &str) -> Result<Platform, String> {
    s.parse()
        .map_err(|_| "expected `ios`, `android` or `desktop`".to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(io::Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CmdResult = Result<ExitStatus, CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                return ExitStatus::Usage;
            }
            let _ = write!(out, "{text}");
            return ExitStatus::Success;
        }
    };
    match execute(&cli, out, err) {
        Ok(status) => status,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            ExitStatus::Usage
        }
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitStatus::Success,
        Err(CliError::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            ExitStatus::Usage
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Registry(cmd) => cmd_registry(cli, cmd, out),
        Command::Matrix(cmd) => cmd_matrix(cli, cmd, out),
        Command::Fingerprint(cmd) => cmd_fingerprint(cli, cmd, out, err),
        Command::Simulate { scenario } => cmd_simulate(cli, scenario, out, err),
        Command::Scan {
            urls,
            fixture_dirs,
            out: out_file,
        } => cmd_scan(cli, urls, fixture_dirs, out_file.as_deref(), out, err),
    }
}

fn read_data(
    explicit: Option<&Path>,
    file: &str,
    embedded: &'static str,
) -> Result<String, CliError> {
    read_document(explicit, file, embedded).map_err(|e| match explicit {
        Some(p) => usage(format!("{}: {e}", p.display())),
        None => usage(format!("{file}: {e}")),
    })
}

fn registry(cli: &Cli) -> Result<Registry, CliError> {
    let text = read_data(cli.registry.as_deref(), REGISTRY_FILE, EMBEDDED_REGISTRY)?;
    load_registry(&text).map_err(|e| usage(format!("registry: {e}")))
}

fn matrix(cli: &Cli, registry: &Registry) -> Result<PermissionMatrix, CliError> {
    let text = read_data(cli.matrix.as_deref(), MATRIX_FILE, EMBEDDED_MATRIX)?;
    load_matrix(&text, registry).map_err(|e| usage(format!("matrix: {e}")))
}

fn patterns(cli: &Cli, registry: &Registry) -> Result<PatternTable, CliError> {
    let text = read_data(cli.patterns.as_deref(), PATTERNS_FILE, EMBEDDED_PATTERNS)?;
    PatternTable::from_json(&text, registry).map_err(|e| usage(format!("patterns: {e}")))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

fn descriptor_rows(ds: &[&PermissionDescriptor]) -> Vec<Vec<String>> {
    ds.iter()
        .map(|d| {
            vec![
                d.name.clone(),
                d.category.token().to_string(),
                yes_no(d.invocable),
                d.prompted.token().to_string(),
                yes_no(d.sw_queryable),
                d.web_api.clone(),
            ]
        })
        .collect()
}

const DESCRIPTOR_HEADERS: [&str; 6] =
    ["name", "category", "invocable", "prompted", "sw", "web api"];

fn cmd_registry(cli: &Cli, cmd: &RegistryCmd, out: &mut dyn Write) -> CmdResult {
    let registry = registry(cli)?;
    let selected: Vec<&PermissionDescriptor> = match cmd {
        RegistryCmd::List { category: Some(c) } => registry.descriptors_by_category(*c),
        RegistryCmd::List { category: None } => registry.descriptors().iter().collect(),
        RegistryCmd::Show { name } => vec![registry
            .get_descriptor(name)
            .map_err(|_| usage(format!("unknown permission descriptor `{name}`")))?],
    };
    match (cli.format, cmd) {
        (Format::Json, RegistryCmd::Show { .. }) => emit_json(out, selected[0])?,
        (Format::Json, RegistryCmd::List { .. }) => emit_json(out, &selected)?,
        (Format::Table, _) => write!(
            out,
            "{}",
            render(&DESCRIPTOR_HEADERS, &descriptor_rows(&selected))
        )?,
    }
    Ok(ExitStatus::Success)
}

#[derive(Serialize)]
struct MatrixCellRow<'a> {
    descriptor: &'a str,
    default: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    state: Option<&'static str>,
}

#[derive(Serialize)]
struct MatrixColumn<'a> {
    target: &'a str,
    platform: Platform,
    browser: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<QueryContext>,
    cells: Vec<MatrixCellRow<'a>>,
}

fn cmd_matrix(cli: &Cli, cmd: &MatrixCmd, out: &mut dyn Write) -> CmdResult {
    let registry = registry(cli)?;
    let matrix = matrix(cli, &registry)?;
    let unknown = |t: &str| usage(format!("unknown browser target `{t}`"));
    match cmd {
        MatrixCmd::Show { target, context } => {
            let info = matrix.target(target).map_err(|_| unknown(target))?;
            let column = matrix.column(target).map_err(|_| unknown(target))?;
            let cells: Vec<MatrixCellRow> = column
                .into_iter()
                .map(|(d, code)| MatrixCellRow {
                    descriptor: d,
                    default: code.code(),
                    state: context.map(|c| code.resolve(c).code()),
                })
                .collect();
            let report = MatrixColumn {
                target: &info.id,
                platform: info.platform,
                browser: &info.browser_label,
                context: *context,
                cells,
            };
            match cli.format {
                Format::Json => emit_json(out, &report)?,
                Format::Table => {
                    let mut headers = vec!["descriptor", "default"];
                    if context.is_some() {
                        headers.push("state");
                    }
                    let rows: Vec<Vec<String>> = report
                        .cells
                        .iter()
                        .map(|c| {
                            let mut row = vec![c.descriptor.to_string(), c.default.to_string()];
                            row.extend(c.state.map(str::to_string));
                            row
                        })
                        .collect();
                    writeln!(
                        out,
                        "{} ({}, {})",
                        info.id, info.browser_label, info.platform
                    )?;
                    write!(out, "{}", render(&headers, &rows))?;
                }
            }
        }
        MatrixCmd::Diff { a, b } => {
            let diffs = matrix
                .diff_targets(a, b)
                .map_err(|e| usage(e.to_string()))?;
            match cli.format {
                Format::Json => emit_json(out, &diffs)?,
                Format::Table => {
                    let rows: Vec<Vec<String>> = diffs
                        .iter()
                        .map(|d| {
                            vec![
                                d.descriptor.clone(),
                                d.state_a.code().to_string(),
                                d.state_b.code().to_string(),
                            ]
                        })
                        .collect();
                    write!(out, "{}", render(&["descriptor", a, b], &rows))?;
                }
            }
        }
    }
    Ok(ExitStatus::Success)
}

/// Expands target ids and platform groups, keeping first occurrence order.
fn expand_targets(matrix: &PermissionMatrix, items: &[String]) -> Result<Vec<String>, CliError> {
    let mut ids: Vec<String> = Vec::new();
    for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let expanded: Vec<String> = if item.eq_ignore_ascii_case("all") {
            matrix.target_ids().map(str::to_string).collect()
        } else if let Ok(p) = item.parse::<Platform>() {
            matrix
                .targets_on(p)
                .into_iter()
                .map(str::to_string)
                .collect()
        } else {
            matrix
                .target(item)
                .map_err(|_| usage(format!("unknown browser target `{item}`")))?;
            vec![item.to_string()]
        };
        for id in expanded {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    if ids.is_empty() {
        return Err(usage("no targets given"));
    }
    Ok(ids)
}

#[derive(Serialize)]
struct PlanReport {
    targets: Vec<String>,
    context: QueryContext,
    max_probes: usize,
    probes: Vec<String>,
    /// Targets the probes cannot tell apart share a group.
    groups: Vec<Vec<String>>,
    verified: bool,
}

fn cmd_fingerprint(
    cli: &Cli,
    cmd: &FingerprintCmd,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let registry = registry(cli)?;
    let matrix = matrix(cli, &registry)?;
    match cmd {
        FingerprintCmd::Classify {
            observation,
            platform,
            context,
        } => {
            let text = fs::read_to_string(observation)
                .map_err(|e| usage(format!("{}: {e}", observation.display())))?;
            let mut obs = Observation::from_json(&text)
                .map_err(|e| usage(format!("{}: {e}", observation.display())))?;
            if let Some(c) = context {
                obs.context = *c;
            }
            let candidates: Vec<&str> = match platform {
                Some(p) => matrix.targets_on(*p),
                None => matrix.target_ids().collect(),
            };
            let result =
                classify_among(&obs, &matrix, &candidates).map_err(|e| usage(e.to_string()))?;
            match cli.format {
                Format::Json => emit_json(out, &result)?,
                Format::Table => {
                    writeln!(
                        out,
                        "exact: {}",
                        if result.exact.is_empty() {
                            "(none)".to_string()
                        } else {
                            result.exact.join(", ")
                        }
                    )?;
                    let rows: Vec<Vec<String>> = result
                        .ranked
                        .iter()
                        .map(|r| vec![r.target.clone(), r.mismatch_count.to_string()])
                        .collect();
                    write!(out, "{}", render(&["target", "mismatches"], &rows))?;
                }
            }
            Ok(ExitStatus::Success)
        }
        FingerprintCmd::Plan {
            targets,
            max_probes,
            context,
        } => {
            let ids = expand_targets(&matrix, targets)?;
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let probes = plan_probes(&refs, &matrix, *max_probes, *context)
                .map_err(|e| usage(e.to_string()))?;
            let groups =
                partition(&refs, &probes, &matrix, *context).map_err(|e| usage(e.to_string()))?;
            let verified = groups.iter().all(|g| g.len() == 1);
            let report = PlanReport {
                targets: ids,
                context: *context,
                max_probes: *max_probes,
                probes,
                groups,
                verified,
            };
            match cli.format {
                Format::Json => emit_json(out, &report)?,
                Format::Table => {
                    writeln!(out, "context: {}", report.context)?;
                    for (i, p) in report.probes.iter().enumerate() {
                        writeln!(out, "probe {}: {p}", i + 1)?;
                    }
                    writeln!(out, "verified: {}", report.verified)?;
                    for g in report.groups.iter().filter(|g| g.len() > 1) {
                        writeln!(out, "indistinguishable: {}", g.join(", "))?;
                    }
                }
            }
            if !report.verified {
                writeln!(err, "probe plan does not separate every target")?;
                return Ok(ExitStatus::Failures);
            }
            Ok(ExitStatus::Success)
        }
    }
}

fn cmd_simulate(cli: &Cli, path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let registry = registry(cli)?;
    let matrix = Arc::new(matrix(cli, &registry)?);
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::from_json(&text, &matrix)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let trace =
        run_scenario(&scenario, matrix).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    match cli.format {
        Format::Json => emit_json(out, &trace)?,
        Format::Table => {
            let show = |o: Option<crate::permstore::QueryOutcome>| {
                o.map_or("-".to_string(), |o| o.to_string())
            };
            let rows: Vec<Vec<String>> = trace
                .events
                .iter()
                .map(|e| {
                    vec![
                        e.index.to_string(),
                        e.actor.clone(),
                        serde_json::to_value(e.kind)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                        e.descriptor.clone().unwrap_or_else(|| "-".into()),
                        show(e.outcome),
                        show(e.expected),
                        yes_no(e.prompted),
                        e.inherited_from
                            .as_ref()
                            .map_or("-".into(), |s| s.to_string()),
                        if e.pass { "ok".into() } else { "FAIL".into() },
                    ]
                })
                .collect();
            writeln!(out, "scenario: {}", trace.scenario)?;
            write!(
                out,
                "{}",
                render(
                    &[
                        "#",
                        "actor",
                        "event",
                        "descriptor",
                        "outcome",
                        "expected",
                        "prompted",
                        "inherited",
                        "result"
                    ],
                    &rows
                )
            )?;
            for l in &trace.leakage.entries {
                writeln!(
                    out,
                    "leakage on {}: {} inherits {} from {}",
                    l.origin,
                    l.inheriting_app,
                    l.descriptors.join(", "),
                    l.source_app
                )?;
            }
        }
    }
    if !trace.passed {
        let failed: Vec<String> = trace
            .failed_indices()
            .iter()
            .map(|i| i.to_string())
            .collect();
        writeln!(err, "failing events: {}", failed.join(", "))?;
        return Ok(ExitStatus::Failures);
    }
    Ok(ExitStatus::Success)
}

fn failure_for(target: String, e: &FetchError) -> ScanFailure {
    ScanFailure {
        target,
        kind: e.kind().to_string(),
        message: e.to_string(),
    }
}

fn cmd_scan(
    cli: &Cli,
    urls: &[String],
    fixture_dirs: &[PathBuf],
    out_file: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    if urls.is_empty() && fixture_dirs.is_empty() {
        return Err(usage("scan needs at least one --url or --fixture-dir"));
    }
    let registry = registry(cli)?;
    let table = patterns(cli, &registry)?;
    let parsed: Vec<Url> = urls
        .iter()
        .map(|u| {
            Url::parse(u)
                .ok()
                .filter(|p| matches!(p.scheme(), "http" | "https"))
                .ok_or_else(|| usage(format!("`{u}` is not an absolute http(s) URL")))
        })
        .collect::<Result<_, _>>()?;

    let mut snapshots: Vec<SiteSnapshot> = Vec::new();
    let mut failures = Vec::new();
    for dir in fixture_dirs {
        match load_fixture(dir) {
            Ok(s) => snapshots.push(s),
            Err(e) => failures.push(ScanFailure {
                target: dir.display().to_string(),
                kind: "fixture".into(),
                message: e.to_string(),
            }),
        }
    }
    if !parsed.is_empty() {
        let limits = FetchLimits {
            per_site_timeout: Duration::from_secs(cli.timeout_secs),
            ..FetchLimits::default()
        };
        for (url, result) in
            parsed
                .iter()
                .zip(scan_sites(&parsed, &limits, cli.concurrency as usize))
        {
            match result {
                Ok(s) => snapshots.push(s),
                Err(e) => {
                    failures.push(failure_for(url.to_string(), &e));
                    if let FetchError::Timeout { partial } = e {
                        snapshots.push(*partial);
                    }
                }
            }
        }
    }

    let report = ScanReport::build(snapshots, failures, &registry, &table);
    if let Some(path) = out_file {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    match cli.format {
        Format::Json => emit_json(out, &report)?,
        Format::Table => write_scan_tables(&report, out)?,
    }
    if !report.is_complete() {
        for f in &report.failures {
            writeln!(err, "{} ({}): {}", f.target, f.kind, f.message)?;
        }
        return Ok(ExitStatus::Failures);
    }
    Ok(ExitStatus::Success)
}

fn write_scan_tables(report: &ScanReport, out: &mut dyn Write) -> io::Result<()> {
    let agg = &report.aggregate;
    writeln!(
        out,
        "{} origins, {} apps ({} installable, {} with service worker), {} multi-PWA origins",
        agg.origins, agg.apps, agg.installable_apps, agg.sw_detected_apps, agg.multi_pwa_origins
    )?;
    let apps: Vec<Vec<String>> = report
        .origin_reports
        .iter()
        .flat_map(|r| {
            r.apps.iter().zip(&r.usages).map(|(a, u)| {
                let mut ds: Vec<&str> = u.iter().filter_map(|f| f.descriptor.as_deref()).collect();
                ds.sort();
                ds.dedup();
                vec![
                    a.document_url.to_string(),
                    yes_no(a.installable),
                    yes_no(a.sw_detected),
                    a.app_id.clone().unwrap_or_else(|| "-".into()),
                    ds.join(" "),
                ]
            })
        })
        .collect();
    writeln!(out)?;
    write!(
        out,
        "{}",
        render(
            &["document", "installable", "sw", "app id", "descriptors"],
            &apps
        )
    )?;
    let usage_rows: Vec<Vec<String>> = agg
        .descriptor_usage
        .iter()
        .map(|u| {
            vec![
                u.descriptor.clone(),
                yes_no(u.invocable),
                u.prompted.token().to_string(),
                u.apps.to_string(),
            ]
        })
        .collect();
    writeln!(out)?;
    write!(
        out,
        "{}",
        render(
            &["permission", "invocable", "prompted", "apps"],
            &usage_rows
        )
    )?;
    if !agg.shared_risk.is_empty() {
        let rows: Vec<Vec<String>> = agg
            .shared_risk
            .iter()
            .map(|s| vec![s.descriptor.clone(), s.origins.to_string()])
            .collect();
        writeln!(out)?;
        write!(out, "{}", render(&["shared permission", "origins"], &rows))?;
    }
    Ok(())
}
