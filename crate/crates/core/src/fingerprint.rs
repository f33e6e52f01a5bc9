//! Permission-state side channel: classify observed default states against
//! the matrix, and plan a short probe sequence that separates a target set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{MatrixError, PermissionMatrix, PermissionState, QueryContext};

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("observation does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown permission descriptor `{0}` in observation")]
    UnknownDescriptor(String),
    #[error("unknown browser target `{0}`")]
    UnknownTarget(String),
}

impl From<MatrixError> for FingerprintError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::UnknownDescriptor(d) => FingerprintError::UnknownDescriptor(d),
            MatrixError::UnknownTarget(t) => FingerprintError::UnknownTarget(t),
            other => FingerprintError::UnknownTarget(other.to_string()),
        }
    }
}

/// Default states a probe script saw, keyed by descriptor name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    #[serde(default)]
    pub context: QueryContext,
    #[serde(default)]
    pub states: BTreeMap<String, PermissionState>,
}

impl Observation {
    pub fn new(context: QueryContext) -> Self {
        Observation {
            context,
            states: BTreeMap::new(),
        }
    }

    pub fn with(mut self, descriptor: &str, state: PermissionState) -> Self {
        self.states.insert(descriptor.to_string(), state);
        self
    }

    /// Accepts `{"context": .., "states": {..}}` or the flat form
    /// `{"accelerometer": "denied", ..}`, where an optional `context` key
    /// sits beside the states.
    pub fn from_json(text: &str) -> Result<Self, FingerprintError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("states").is_some() {
            return Ok(serde_json::from_value(value)?);
        }
        let mut flat: BTreeMap<String, serde_json::Value> = serde_json::from_value(value)?;
        let context = match flat.remove("context") {
            Some(c) => serde_json::from_value(c)?,
            None => QueryContext::default(),
        };
        let states = serde_json::from_value(serde_json::to_value(flat)?)?;
        Ok(Observation { context, states })
    }

    /// What a probe of every descriptor on `target` would report.
    pub fn full_column(
        matrix: &PermissionMatrix,
        target: &str,
        context: QueryContext,
    ) -> Result<Self, FingerprintError> {
        let states = matrix
            .resolved_column(target, context)?
            .into_iter()
            .map(|(d, s)| (d.to_string(), s))
            .collect();
        Ok(Observation { context, states })
    }

    /// The states a probe of `descriptors` on `target` would report.
    pub fn probe(
        matrix: &PermissionMatrix,
        target: &str,
        descriptors: &[String],
        context: QueryContext,
    ) -> Result<Self, FingerprintError> {
        let mut obs = Observation::new(context);
        for d in descriptors {
            obs.states
                .insert(d.clone(), matrix.default_state(d, target, context)?);
        }
        Ok(obs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedTarget {
    pub target: String,
    pub mismatch_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassificationResult {
    /// Targets with zero mismatches, in ranked order.
    pub exact: Vec<String>,
    pub ranked: Vec<RankedTarget>,
}

impl ClassificationResult {
    pub fn is_unique(&self) -> bool {
        self.exact.len() == 1
    }
}

/// Classifies against every target in the matrix.
pub fn classify(
    observation: &Observation,
    matrix: &PermissionMatrix,
) -> Result<ClassificationResult, FingerprintError> {
    let all: Vec<&str> = matrix.target_ids().collect();
    classify_among(observation, matrix, &all)
}

/// Classifies against a candidate subset, e.g. one platform's browsers when
/// the platform is already known.
///
/// The mismatch count is the Hamming distance over the observed keys only.
pub fn classify_among(
    observation: &Observation,
    matrix: &PermissionMatrix,
    candidates: &[&str],
) -> Result<ClassificationResult, FingerprintError> {
    let mut observed = Vec::with_capacity(observation.states.len());
    for (name, state) in &observation.states {
        let canonical = matrix
            .resolve_descriptor(name)
            .ok_or_else(|| FingerprintError::UnknownDescriptor(name.clone()))?;
        observed.push((canonical, *state));
    }

    let mut ranked = Vec::with_capacity(candidates.len());
    for &target in candidates {
        matrix.target(target)?;
        let mut mismatch_count = 0;
        for (descriptor, state) in &observed {
            if matrix.default_state(descriptor, target, observation.context)? != *state {
                mismatch_count += 1;
            }
        }
        ranked.push(RankedTarget {
            target: target.to_string(),
            mismatch_count,
        });
    }
    ranked.sort_by(|a, b| {
        a.mismatch_count
            .cmp(&b.mismatch_count)
            .then_with(|| a.target.cmp(&b.target))
    });
    ranked.dedup_by(|a, b| a.target == b.target);

    let exact = ranked
        .iter()
        .filter(|r| r.mismatch_count == 0)
        .map(|r| r.target.clone())
        .collect();
    Ok(ClassificationResult { exact, ranked })
}

/// Splits `targets` into groups that agree on every probe in `probes`.
/// Groups keep first-seen order.
pub fn partition(
    targets: &[&str],
    probes: &[String],
    matrix: &PermissionMatrix,
    context: QueryContext,
) -> Result<Vec<Vec<String>>, FingerprintError> {
    let mut groups: Vec<Vec<String>> = vec![targets.iter().map(|t| t.to_string()).collect()];
    for probe in probes {
        groups = refine(&groups, probe, matrix, context)?;
    }
    Ok(groups)
}

fn refine(
    groups: &[Vec<String>],
    descriptor: &str,
    matrix: &PermissionMatrix,
    context: QueryContext,
) -> Result<Vec<Vec<String>>, FingerprintError> {
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let mut split: Vec<(PermissionState, Vec<String>)> = Vec::new();
        for target in group {
            let state = matrix.default_state(descriptor, target, context)?;
            match split.iter_mut().find(|(s, _)| *s == state) {
                Some((_, members)) => members.push(target.clone()),
                None => split.push((state, vec![target.clone()])),
            }
        }
        out.extend(split.into_iter().map(|(_, members)| members));
    }
    Ok(out)
}

fn unseparated_pairs(groups: &[Vec<String>]) -> usize {
    groups.iter().map(|g| g.len() * (g.len() - 1) / 2).sum()
}

/// Greedy probe selection.
///
/// Each round picks the descriptor that leaves the fewest target pairs
/// unseparated, ties going to the lexicographically smallest name. Stops
/// when every group is a singleton, `max_probes` is reached, or no
/// descriptor refines the partition further; the result may then be a
/// best-effort plan, so callers check the residual partition.
pub fn plan_probes(
    targets: &[&str],
    matrix: &PermissionMatrix,
    max_probes: usize,
    context: QueryContext,
) -> Result<Vec<String>, FingerprintError> {
    for t in targets {
        matrix.target(t)?;
    }
    let mut candidates: Vec<&String> = matrix.descriptors().iter().collect();
    candidates.sort();

    let mut groups = partition(targets, &[], matrix, context)?;
    let mut plan = Vec::new();
    while plan.len() < max_probes && unseparated_pairs(&groups) > 0 {
        let current = unseparated_pairs(&groups);
        let mut best: Option<(usize, &String, Vec<Vec<String>>)> = None;
        for &d in &candidates {
            if plan.contains(d) {
                continue;
            }
            let refined = refine(&groups, d, matrix, context)?;
            let score = unseparated_pairs(&refined);
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, d, refined));
            }
        }
        match best {
            Some((score, d, refined)) if score < current => {
                plan.push(d.clone());
                groups = refined;
            }
            _ => break,
        }
    }
    Ok(plan)
}
