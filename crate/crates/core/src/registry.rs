//! Catalog of permission descriptors.
//!
//! The registry is loaded once from a JSON document (the embedded default or
//! a user override) and is immutable afterwards. Every other module resolves
//! descriptor names through it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate descriptor name `{0}`")]
    DuplicateName(String),
    #[error("descriptor `{name}`: unknown category `{token}`")]
    UnknownCategory { name: String, token: String },
    #[error("descriptor `{name}`: unknown prompted value `{token}` (expected yes|no|na)")]
    UnknownPrompted { name: String, token: String },
    #[error("descriptor `{name}`: {reason}")]
    Invariant { name: String, reason: &'static str },
    #[error("alias `{alias}` points at unknown descriptor `{target}`")]
    DanglingAlias { alias: String, target: String },
    #[error("unknown permission descriptor `{0}`")]
    NotFound(String),
}

/// Grouping of descriptors by the capability they unlock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Sensor,
    HardwareAccess,
    ClipboardDataAccess,
    NotificationsBackground,
    LocationEnvironment,
    WindowUi,
    PaymentAuth,
    DesktopRelated,
    Legacy,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Sensor,
        Category::HardwareAccess,
        Category::ClipboardDataAccess,
        Category::NotificationsBackground,
        Category::LocationEnvironment,
        Category::WindowUi,
        Category::PaymentAuth,
        Category::DesktopRelated,
        Category::Legacy,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Category::Sensor => "sensor",
            Category::HardwareAccess => "hardware-access",
            Category::ClipboardDataAccess => "clipboard-data-access",
            Category::NotificationsBackground => "notifications-background",
            Category::LocationEnvironment => "location-environment",
            Category::WindowUi => "window-ui",
            Category::PaymentAuth => "payment-auth",
            Category::DesktopRelated => "desktop-related",
            Category::Legacy => "legacy",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Category {
    type Err = String;

    /// Accepts the kebab-case token, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.token() == lower)
            .ok_or_else(|| s.to_string())
    }
}

/// Whether using a descriptor shows the user a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prompted {
    #[serde(rename = "yes")]
    Yes,
    #[serde(rename = "no")]
    No,
    #[serde(rename = "na")]
    NotApplicable,
}

impl Prompted {
    pub fn token(self) -> &'static str {
        match self {
            Prompted::Yes => "yes",
            Prompted::No => "no",
            Prompted::NotApplicable => "na",
        }
    }
}

impl FromStr for Prompted {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes" => Ok(Prompted::Yes),
            "no" => Ok(Prompted::No),
            "na" => Ok(Prompted::NotApplicable),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionDescriptor {
    pub name: String,
    pub category: Category,
    pub mobile_enhancing: bool,
    pub web_api: String,
    pub invocable: bool,
    pub prompted: Prompted,
    pub sw_queryable: bool,
    /// Usage count from the reference crawl. Metadata only.
    pub reference_count: u64,
}

// Category and prompted are read as strings so errors can name the row.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescriptor {
    name: String,
    category: String,
    mobile_enhancing: bool,
    web_api: String,
    invocable: bool,
    prompted: String,
    sw_queryable: bool,
    reference_count: u64,
}

#[derive(Deserialize)]
struct RawDocument {
    descriptors: Vec<RawDescriptor>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct DocumentRef<'a> {
    descriptors: &'a [PermissionDescriptor],
    aliases: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Registry {
    descriptors: Vec<PermissionDescriptor>,
    index: HashMap<String, usize>,
    aliases: BTreeMap<String, String>,
}

pub fn load_registry(data: &str) -> Result<Registry, RegistryError> {
    let raw: RawDocument = serde_json::from_str(data)?;
    let mut descriptors = Vec::with_capacity(raw.descriptors.len());
    let mut index = HashMap::with_capacity(raw.descriptors.len());

    for row in raw.descriptors {
        if index.contains_key(&row.name) {
            return Err(RegistryError::DuplicateName(row.name));
        }
        let category =
            row.category
                .parse::<Category>()
                .map_err(|token| RegistryError::UnknownCategory {
                    name: row.name.clone(),
                    token,
                })?;
        let prompted =
            row.prompted
                .parse::<Prompted>()
                .map_err(|token| RegistryError::UnknownPrompted {
                    name: row.name.clone(),
                    token,
                })?;
        let descriptor = PermissionDescriptor {
            name: row.name,
            category,
            mobile_enhancing: row.mobile_enhancing,
            web_api: row.web_api,
            invocable: row.invocable,
            prompted,
            sw_queryable: row.sw_queryable,
            reference_count: row.reference_count,
        };
        check_descriptor(&descriptor)?;
        index.insert(descriptor.name.clone(), descriptors.len());
        descriptors.push(descriptor);
    }

    for (alias, target) in &raw.aliases {
        if index.contains_key(alias) {
            return Err(RegistryError::DuplicateName(alias.clone()));
        }
        if !index.contains_key(target) {
            return Err(RegistryError::DanglingAlias {
                alias: alias.clone(),
                target: target.clone(),
            });
        }
    }

    Ok(Registry {
        descriptors,
        index,
        aliases: raw.aliases,
    })
}

fn check_descriptor(d: &PermissionDescriptor) -> Result<(), RegistryError> {
    let fail = |reason| {
        Err(RegistryError::Invariant {
            name: d.name.clone(),
            reason,
        })
    };
    if d.name.is_empty()
        || !d
            .name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
    {
        return fail("name must be a lowercase hyphenated identifier");
    }
    if d.prompted == Prompted::Yes && !d.invocable {
        return fail("prompted = yes requires invocable = true");
    }
    if !d.invocable && d.prompted != Prompted::NotApplicable {
        return fail("invocable = false requires prompted = na");
    }
    if !d.invocable && d.reference_count != 0 {
        return fail("invocable = false requires reference_count = 0");
    }
    Ok(())
}

impl Registry {
    /// The registry compiled into the crate.
    pub fn embedded() -> Registry {
        load_registry(crate::data::EMBEDDED_REGISTRY).expect("embedded registry is valid")
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[PermissionDescriptor] {
        &self.descriptors
    }

    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }

    /// Canonical name for `name`, following aliases.
    pub fn resolve_name<'a>(&'a self, name: &str) -> Option<&'a str> {
        if let Some(&i) = self.index.get(name) {
            return Some(&self.descriptors[i].name);
        }
        self.aliases
            .get(name)
            .and_then(|target| self.index.get(target))
            .map(|&i| self.descriptors[i].name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resolve_name(name).is_some()
    }

    pub fn get_descriptor(&self, name: &str) -> Result<&PermissionDescriptor, RegistryError> {
        let canonical = self
            .resolve_name(name)
            .ok_or_else(|| RegistryError::NotFound(name.to_string()))?;
        Ok(&self.descriptors[self.index[canonical]])
    }

    pub fn descriptors_by_category(&self, category: Category) -> Vec<&PermissionDescriptor> {
        self.descriptors
            .iter()
            .filter(|d| d.category == category)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DocumentRef {
            descriptors: &self.descriptors,
            aliases: &self.aliases,
        })
        .expect("registry serializes")
    }
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.descriptors == other.descriptors && self.aliases == other.aliases
    }
}
