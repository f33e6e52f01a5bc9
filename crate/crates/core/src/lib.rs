//! Toolkit for the PWA permission model.
//!
//! * [`registry`]: catalog of the 33 permission descriptors.
//! * [`matrix`]: default permission state per descriptor and browser target.
//! * [`fingerprint`]: classify observed default states into targets; plan probes.
//! * [`permstore`]: origin- vs app-scoped permission store simulator.
//! * [`scanner`]: static site scanner for installability and permission-API use.
//! * [`cli`]: the `permlab` command line.

pub mod cli;
pub mod data;
pub mod fingerprint;
pub mod manifest;
pub mod matrix;
pub mod origin;
pub mod permstore;
pub mod registry;
pub mod scanner;

pub use fingerprint::{classify, classify_among, plan_probes, ClassificationResult, Observation};
pub use manifest::AppManifest;
pub use matrix::{
    load_matrix, BrowserTarget, DefaultState, PermissionMatrix, PermissionState, Platform,
    QueryContext,
};
pub use registry::{load_registry, Category, PermissionDescriptor, Prompted, Registry};
