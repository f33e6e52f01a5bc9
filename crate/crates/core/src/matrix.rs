//! Cross-browser default permission states.
//!
//! A [`PermissionMatrix`] is a total map from (descriptor, browser target) to
//! the raw [`DefaultState`] code. Queries resolve the install-dependent `g*`
//! code through a [`QueryContext`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Registry;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown permission descriptor `{0}`")]
    UnknownDescriptor(String),
    #[error("unknown browser target `{0}`")]
    UnknownTarget(String),
    #[error("duplicate browser target `{0}`")]
    DuplicateTarget(String),
    #[error("missing cell ({descriptor}, {target})")]
    MissingCell { descriptor: String, target: String },
    #[error("invalid state code `{code}` at ({descriptor}, {target})")]
    InvalidCode {
        descriptor: String,
        target: String,
        code: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Ios,
    Android,
    Desktop,
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Platform::Ios => "ios",
            Platform::Android => "android",
            Platform::Desktop => "desktop",
        })
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ios" => Ok(Platform::Ios),
            "android" => Ok(Platform::Android),
            "desktop" => Ok(Platform::Desktop),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserTarget {
    pub id: String,
    pub platform: Platform,
    pub browser_label: String,
    pub pwa_install_supported: bool,
}

/// Raw cell code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefaultState {
    Granted,
    Prompted,
    Denied,
    Unsupported,
    /// `g*`: granted for an installed app, denied in a browser tab.
    GrantedWhenInstalled,
}

impl DefaultState {
    pub fn code(self) -> &'static str {
        match self {
            DefaultState::Granted => "g",
            DefaultState::Prompted => "p",
            DefaultState::Denied => "d",
            DefaultState::Unsupported => "-",
            DefaultState::GrantedWhenInstalled => "g*",
        }
    }

    pub fn from_code(code: &str) -> Option<DefaultState> {
        Some(match code {
            "g" => DefaultState::Granted,
            "p" => DefaultState::Prompted,
            "d" => DefaultState::Denied,
            "-" => DefaultState::Unsupported,
            "g*" => DefaultState::GrantedWhenInstalled,
            _ => return None,
        })
    }

    pub fn resolve(self, context: QueryContext) -> PermissionState {
        match self {
            DefaultState::Granted => PermissionState::Granted,
            DefaultState::Prompted => PermissionState::Prompted,
            DefaultState::Denied => PermissionState::Denied,
            DefaultState::Unsupported => PermissionState::Unsupported,
            DefaultState::GrantedWhenInstalled => match context {
                QueryContext::InstalledPwa => PermissionState::Granted,
                QueryContext::BrowserTab => PermissionState::Denied,
            },
        }
    }
}

impl fmt::Display for DefaultState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for DefaultState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

/// A default state as a page observes it: `g*` already resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermissionState {
    Granted,
    Prompted,
    Denied,
    Unsupported,
}

impl PermissionState {
    pub fn code(self) -> &'static str {
        match self {
            PermissionState::Granted => "g",
            PermissionState::Prompted => "p",
            PermissionState::Denied => "d",
            PermissionState::Unsupported => "-",
        }
    }
}

impl fmt::Display for PermissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PermissionState::Granted => "granted",
            PermissionState::Prompted => "prompted",
            PermissionState::Denied => "denied",
            PermissionState::Unsupported => "unsupported",
        })
    }
}

/// Where the permission is queried from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum QueryContext {
    #[serde(rename = "installed")]
    InstalledPwa,
    #[default]
    #[serde(rename = "tab")]
    BrowserTab,
}

impl FromStr for QueryContext {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "installed" => Ok(QueryContext::InstalledPwa),
            "tab" => Ok(QueryContext::BrowserTab),
            _ => Err(s.to_string()),
        }
    }
}

impl fmt::Display for QueryContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryContext::InstalledPwa => "installed",
            QueryContext::BrowserTab => "tab",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellDiff {
    pub descriptor: String,
    pub state_a: DefaultState,
    pub state_b: DefaultState,
}

#[derive(Deserialize)]
struct RawMatrix {
    targets: Vec<BrowserTarget>,
    cells: IndexMap<String, IndexMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermissionMatrix {
    targets: Vec<BrowserTarget>,
    target_index: HashMap<String, usize>,
    descriptors: Vec<String>,
    descriptor_index: HashMap<String, usize>,
    aliases: BTreeMap<String, String>,
    // Row-major: descriptor * targets.len() + target.
    cells: Vec<DefaultState>,
}

/// Parses and validates a matrix document against `registry`.
///
/// Rows follow registry order regardless of document order. Every registry
/// descriptor needs a cell for every target.
pub fn load_matrix(data: &str, registry: &Registry) -> Result<PermissionMatrix, MatrixError> {
    let raw: RawMatrix = serde_json::from_str(data)?;

    let mut target_index = HashMap::new();
    for (i, t) in raw.targets.iter().enumerate() {
        if target_index.insert(t.id.clone(), i).is_some() {
            return Err(MatrixError::DuplicateTarget(t.id.clone()));
        }
    }

    for (descriptor, row) in &raw.cells {
        if registry.resolve_name(descriptor) != Some(descriptor.as_str()) {
            return Err(MatrixError::UnknownDescriptor(descriptor.clone()));
        }
        if let Some(target) = row.keys().find(|t| !target_index.contains_key(*t)) {
            return Err(MatrixError::UnknownTarget(target.clone()));
        }
    }

    let descriptors: Vec<String> = registry
        .descriptors()
        .iter()
        .map(|d| d.name.clone())
        .collect();
    let mut cells = Vec::with_capacity(descriptors.len() * raw.targets.len());
    for name in &descriptors {
        let row = raw.cells.get(name);
        for target in &raw.targets {
            let missing = || MatrixError::MissingCell {
                descriptor: name.clone(),
                target: target.id.clone(),
            };
            let code = row.and_then(|r| r.get(&target.id)).ok_or_else(missing)?;
            let state = DefaultState::from_code(code).ok_or_else(|| MatrixError::InvalidCode {
                descriptor: name.clone(),
                target: target.id.clone(),
                code: code.clone(),
            })?;
            cells.push(state);
        }
    }

    let descriptor_index = descriptors
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();

    Ok(PermissionMatrix {
        targets: raw.targets,
        target_index,
        descriptors,
        descriptor_index,
        aliases: registry.aliases().clone(),
        cells,
    })
}

impl PermissionMatrix {
    /// The matrix compiled into the crate, validated against `registry`.
    pub fn embedded(registry: &Registry) -> PermissionMatrix {
        load_matrix(crate::data::EMBEDDED_MATRIX, registry).expect("embedded matrix is valid")
    }

    pub fn targets(&self) -> &[BrowserTarget] {
        &self.targets
    }

    pub fn target(&self, id: &str) -> Result<&BrowserTarget, MatrixError> {
        self.target_index
            .get(id)
            .map(|&i| &self.targets[i])
            .ok_or_else(|| MatrixError::UnknownTarget(id.to_string()))
    }

    pub fn target_ids(&self) -> impl Iterator<Item = &str> {
        self.targets.iter().map(|t| t.id.as_str())
    }

    pub fn targets_on(&self, platform: Platform) -> Vec<&str> {
        self.targets
            .iter()
            .filter(|t| t.platform == platform)
            .map(|t| t.id.as_str())
            .collect()
    }

    /// Descriptor names in registry order.
    pub fn descriptors(&self) -> &[String] {
        &self.descriptors
    }

    pub fn entry_count(&self) -> usize {
        self.cells.len()
    }

    /// Canonical descriptor name, following registry aliases.
    pub fn resolve_descriptor<'a>(&'a self, name: &str) -> Option<&'a str> {
        let canonical = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.descriptor_index
            .get(canonical)
            .map(|&i| self.descriptors[i].as_str())
    }

    fn descriptor_row(&self, name: &str) -> Result<usize, MatrixError> {
        let canonical = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.descriptor_index
            .get(canonical)
            .copied()
            .ok_or_else(|| MatrixError::UnknownDescriptor(name.to_string()))
    }

    fn target_col(&self, id: &str) -> Result<usize, MatrixError> {
        self.target_index
            .get(id)
            .copied()
            .ok_or_else(|| MatrixError::UnknownTarget(id.to_string()))
    }

    pub fn cell(&self, descriptor: &str, target: &str) -> Result<DefaultState, MatrixError> {
        let row = self.descriptor_row(descriptor)?;
        let col = self.target_col(target)?;
        Ok(self.cells[row * self.targets.len() + col])
    }

    pub fn default_state(
        &self,
        descriptor: &str,
        target: &str,
        context: QueryContext,
    ) -> Result<PermissionState, MatrixError> {
        Ok(self.cell(descriptor, target)?.resolve(context))
    }

    /// Raw column of `target`, in registry order.
    pub fn column(&self, target: &str) -> Result<Vec<(&str, DefaultState)>, MatrixError> {
        let col = self.target_col(target)?;
        let width = self.targets.len();
        Ok(self
            .descriptors
            .iter()
            .enumerate()
            .map(|(row, name)| (name.as_str(), self.cells[row * width + col]))
            .collect())
    }

    /// Column of `target` as observed from `context`.
    pub fn resolved_column(
        &self,
        target: &str,
        context: QueryContext,
    ) -> Result<Vec<(&str, PermissionState)>, MatrixError> {
        Ok(self
            .column(target)?
            .into_iter()
            .map(|(name, state)| (name, state.resolve(context)))
            .collect())
    }

    /// Descriptors whose raw cells differ between two targets, sorted by name.
    /// `g*` is compared as its own code.
    pub fn diff_targets(&self, a: &str, b: &str) -> Result<Vec<CellDiff>, MatrixError> {
        let col_a = self.column(a)?;
        let col_b = self.column(b)?;
        let mut diffs: Vec<CellDiff> = col_a
            .into_iter()
            .zip(col_b)
            .filter(|((_, sa), (_, sb))| sa != sb)
            .map(|((name, sa), (_, sb))| CellDiff {
                descriptor: name.to_string(),
                state_a: sa,
                state_b: sb,
            })
            .collect();
        diffs.sort_by(|x, y| x.descriptor.cmp(&y.descriptor));
        Ok(diffs)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            targets: &'a [BrowserTarget],
            cells: IndexMap<&'a str, IndexMap<&'a str, &'static str>>,
        }
        let width = self.targets.len();
        let cells = self
            .descriptors
            .iter()
            .enumerate()
            .map(|(row, name)| {
                let cols = self
                    .targets
                    .iter()
                    .enumerate()
                    .map(|(col, t)| (t.id.as_str(), self.cells[row * width + col].code()))
                    .collect();
                (name.as_str(), cols)
            })
            .collect();
        serde_json::to_string_pretty(&Doc {
            targets: &self.targets,
            cells,
        })
        .expect("matrix serializes")
    }
}
