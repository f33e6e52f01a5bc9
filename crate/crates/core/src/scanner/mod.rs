//! Static PWA scanner: fetch or load a site, check installability, detect a
//! service worker, find permission-API usage and group apps by origin.
//!
//! Detection is lexical. Scripts are never executed, so URLs injected at
//! runtime are missed and matches inside comments or strings count.

mod check;
mod fetch;
mod fixture;
mod html;
mod patterns;
mod report;
mod snapshot;

pub use check::{check_installable, PwaCheck, INSTALLABLE_DISPLAY_MODES};
pub use fetch::{
    fetch_site, scan_sites, FetchError, FetchLimits, DEFAULT_SITE_CONCURRENCY, PER_SITE_WORKERS,
};
pub use fixture::{load_fixture, FixtureError, SITE_FILE};
pub use html::{extract as extract_refs, HtmlRefs, ScriptRef};
pub use patterns::{
    detect_sw, find_permission_usages, PatternError, PatternKind, PatternRule, PatternTable,
    UsageFinding, UNKNOWN_QUERY_PATTERN,
};
pub use report::{
    aggregate, group_origin, AggregateStats, DescriptorUsage, OriginReport, ScanFailure,
    ScanReport, SharedRisk, REFERENCE_INSTALLABLE_PWAS, REFERENCE_MULTI_PWA_ORIGINS,
    REFERENCE_SHARED_ORIGINS,
};
pub use snapshot::{FetchRecord, ScriptBody, ScriptSource, SiteSnapshot};
