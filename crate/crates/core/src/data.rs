//! Embedded data documents and the `PERMLAB_DATA_DIR` override.

use std::env;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const EMBEDDED_REGISTRY: &str = include_str!("../data/registry.json");
pub const EMBEDDED_MATRIX: &str = include_str!("../data/matrix.json");
pub const EMBEDDED_PATTERNS: &str = include_str!("../data/patterns.json");

pub const DATA_DIR_ENV: &str = "PERMLAB_DATA_DIR";

pub const REGISTRY_FILE: &str = "registry.json";
pub const MATRIX_FILE: &str = "matrix.json";
pub const PATTERNS_FILE: &str = "patterns.json";

/// Returns the text of a data document.
///
/// Lookup order: the explicit path, then `$PERMLAB_DATA_DIR/<file_name>` when
/// that file exists, then the embedded copy.
pub fn read_document(
    explicit: Option<&Path>,
    file_name: &str,
    embedded: &'static str,
) -> io::Result<String> {
    if let Some(path) = explicit {
        return fs::read_to_string(path);
    }
    if let Some(dir) = env::var_os(DATA_DIR_ENV) {
        let candidate = PathBuf::from(dir).join(file_name);
        if candidate.is_file() {
            return fs::read_to_string(candidate);
        }
    }
    Ok(embedded.to_string())
}
