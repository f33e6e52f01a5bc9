//! Per-origin grouping and corpus-level statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::check::{check_installable, PwaCheck};
use super::patterns::{find_permission_usages, PatternTable, UsageFinding};
use super::snapshot::SiteSnapshot;
use crate::origin::origin_of;
use crate::registry::{Prompted, Registry};

/// Installable PWAs in the reference crawl. Not reproduced here.
pub const REFERENCE_INSTALLABLE_PWAS: u64 = 291_583;
/// Origins hosting two or more PWAs in the reference crawl.
pub const REFERENCE_MULTI_PWA_ORIGINS: u64 = 12_487;
/// Origins sharing a permission across multiple PWAs in the reference crawl.
/// "media" covers microphone and camera together.
pub const REFERENCE_SHARED_ORIGINS: [(&str, u64); 5] = [
    ("geolocation", 378),
    ("notifications", 324),
    ("clipboard-read", 12),
    ("media", 85),
    ("nfc", 1),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginReport {
    pub origin: String,
    pub apps: Vec<PwaCheck>,
    pub multi_pwa: bool,
    /// Parallel to `apps`.
    pub usages: Vec<Vec<UsageFinding>>,
    /// Descriptors with findings under two or more distinct app ids.
    pub shared_risk_descriptors: BTreeSet<String>,
}

/// Groups snapshots by origin and analyses each. Reports are sorted by
/// origin; apps keep input order. URLs without a tuple origin form their own
/// group keyed by the full URL.
pub fn group_origin(
    snapshots: &[SiteSnapshot],
    registry: &Registry,
    table: &PatternTable,
) -> Vec<OriginReport> {
    let mut groups: BTreeMap<String, Vec<&SiteSnapshot>> = BTreeMap::new();
    for s in snapshots {
        let key = origin_of(&s.document_url).unwrap_or_else(|| s.document_url.to_string());
        groups.entry(key).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(origin, members)| {
            let apps: Vec<PwaCheck> = members.iter().map(|s| check_installable(s)).collect();
            let usages: Vec<Vec<UsageFinding>> = members
                .iter()
                .map(|s| find_permission_usages(s, registry, table))
                .collect();
            let installable_ids: BTreeSet<&str> = apps
                .iter()
                .filter(|a| a.installable)
                .filter_map(|a| a.app_id.as_deref())
                .collect();
            let mut holders: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for (app, findings) in apps.iter().zip(&usages) {
                let Some(id) = app.app_id.as_deref() else {
                    continue;
                };
                for d in findings.iter().filter_map(|f| f.descriptor.as_deref()) {
                    holders.entry(d).or_default().insert(id);
                }
            }
            let shared_risk_descriptors = holders
                .into_iter()
                .filter(|(_, ids)| ids.len() >= 2)
                .map(|(d, _)| d.to_string())
                .collect();
            OriginReport {
                origin,
                multi_pwa: installable_ids.len() >= 2,
                apps,
                usages,
                shared_risk_descriptors,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DescriptorUsage {
    pub descriptor: String,
    /// Apps with at least one finding for the descriptor.
    pub apps: u64,
    pub invocable: bool,
    pub prompted: Prompted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedRisk {
    pub descriptor: String,
    pub origins: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AggregateStats {
    pub origins: u64,
    pub apps: u64,
    pub installable_apps: u64,
    pub sw_detected_apps: u64,
    /// Descending by count, ties by name. Zero rows are omitted.
    pub descriptor_usage: Vec<DescriptorUsage>,
    pub multi_pwa_origins: u64,
    /// Descending by count, ties by name. Zero rows are omitted.
    pub shared_risk: Vec<SharedRisk>,
    /// `permissions.query` calls naming no known descriptor.
    pub unknown_permission_queries: u64,
}

impl AggregateStats {
    pub fn usage_count(&self, descriptor: &str) -> u64 {
        self.descriptor_usage
            .iter()
            .find(|u| u.descriptor == descriptor)
            .map_or(0, |u| u.apps)
    }

    pub fn shared_risk_count(&self, descriptor: &str) -> u64 {
        self.shared_risk
            .iter()
            .find(|s| s.descriptor == descriptor)
            .map_or(0, |s| s.origins)
    }
}

pub fn aggregate(reports: &[OriginReport], registry: &Registry) -> AggregateStats {
    let mut usage: BTreeMap<&str, u64> = BTreeMap::new();
    let mut shared: BTreeMap<&str, u64> = BTreeMap::new();
    let mut stats = AggregateStats::default();
    for report in reports {
        stats.origins += 1;
        stats.multi_pwa_origins += u64::from(report.multi_pwa);
        for (app, findings) in report.apps.iter().zip(&report.usages) {
            stats.apps += 1;
            stats.installable_apps += u64::from(app.installable);
            stats.sw_detected_apps += u64::from(app.sw_detected);
            let used: BTreeSet<&str> = findings
                .iter()
                .filter_map(|f| f.descriptor.as_deref())
                .collect();
            for d in used {
                *usage.entry(d).or_default() += 1;
            }
            stats.unknown_permission_queries +=
                findings.iter().filter(|f| f.descriptor.is_none()).count() as u64;
        }
        for d in &report.shared_risk_descriptors {
            *shared.entry(d).or_default() += 1;
        }
    }
    stats.descriptor_usage = usage
        .into_iter()
        .map(|(d, apps)| {
            let (invocable, prompted) = registry
                .get_descriptor(d)
                .map(|r| (r.invocable, r.prompted))
                .unwrap_or((false, Prompted::NotApplicable));
            DescriptorUsage {
                descriptor: d.to_string(),
                apps,
                invocable,
                prompted,
            }
        })
        .collect();
    stats.descriptor_usage.sort_by(|a, b| {
        b.apps
            .cmp(&a.apps)
            .then_with(|| a.descriptor.cmp(&b.descriptor))
    });
    stats.shared_risk = shared
        .into_iter()
        .map(|(d, origins)| SharedRisk {
            descriptor: d.to_string(),
            origins,
        })
        .collect();
    stats.shared_risk.sort_by(|a, b| {
        b.origins
            .cmp(&a.origins)
            .then_with(|| a.descriptor.cmp(&b.descriptor))
    });
    stats
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanFailure {
    pub target: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub origin_reports: Vec<OriginReport>,
    pub aggregate: AggregateStats,
    pub snapshots: Vec<SiteSnapshot>,
    pub failures: Vec<ScanFailure>,
}

impl ScanReport {
    pub fn build(
        snapshots: Vec<SiteSnapshot>,
        failures: Vec<ScanFailure>,
        registry: &Registry,
        table: &PatternTable,
    ) -> ScanReport {
        let origin_reports = group_origin(&snapshots, registry, table);
        let aggregate = aggregate(&origin_reports, registry);
        ScanReport {
            origin_reports,
            aggregate,
            snapshots,
            failures,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}
