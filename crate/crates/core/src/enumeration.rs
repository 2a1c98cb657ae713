//! Candidate model collections.

use std::collections::HashSet;
use std::str::FromStr;

use serde::Serialize;

use crate::data::{ModelMask, MAX_COVARIATES};
use crate::error::{Error, Result};

/// Largest `d` for which every subset may be enumerated.
pub const MAX_EXHAUSTIVE_D: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    masks: Vec<ModelMask>,
    d: usize,
    max_size: usize,
}

impl CandidateSet {
    pub fn masks(&self) -> &[ModelMask] {
        &self.masks
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Size of the largest candidate.
    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn contains(&self, mask: &ModelMask) -> bool {
        self.masks.contains(mask)
    }
}

/// Every subset of `{1..d}` of size at most `max_size` (default `d`),
/// ordered by cardinality and then by bit value.
pub fn all_subsets(d: usize, include_empty: bool, max_size: Option<usize>) -> Result<CandidateSet> {
    if d == 0 || d > MAX_EXHAUSTIVE_D {
        return Err(Error::DimensionOutOfRange {
            d,
            max: MAX_EXHAUSTIVE_D,
        });
    }
    let max_size = max_size.unwrap_or(d);
    if max_size > d {
        return Err(Error::InvalidParameter(format!(
            "max_size {max_size} exceeds d = {d}"
        )));
    }
    let mut masks: Vec<ModelMask> = (0u64..1 << d)
        .map(ModelMask::from_bits)
        .filter(|m| m.size() <= max_size && (include_empty || !m.is_empty()))
        .collect();
    masks.sort();
    let max_size = masks.iter().map(|m| m.size()).max().unwrap_or(0);
    Ok(CandidateSet { masks, d, max_size })
}

/// Candidates from explicit lists of one-based covariate indices. Duplicates
/// are dropped, keeping first occurrence order.
pub fn from_explicit(sets: &[Vec<usize>], d: usize) -> Result<CandidateSet> {
    if d == 0 || d > MAX_COVARIATES {
        return Err(Error::DimensionOutOfRange {
            d,
            max: MAX_COVARIATES,
        });
    }
    let mut seen = HashSet::new();
    let mut masks = Vec::new();
    for set in sets {
        if let Some(&index) = set.iter().find(|&&j| j == 0 || j > d) {
            return Err(Error::IndexOutOfRange { index, d });
        }
        let mask = ModelMask::from_indices(set.iter().map(|j| j - 1))?;
        if seen.insert(mask) {
            masks.push(mask);
        }
    }
    if masks.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let max_size = masks.iter().map(|m| m.size()).max().unwrap_or(0);
    Ok(CandidateSet { masks, d, max_size })
}

/// Textual model-collection specification: `all`, `all-nonempty`,
/// `size<=k`, or an explicit list (e.g. loaded from JSON).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    All,
    AllNonEmpty,
    /// Non-empty subsets of size at most `k`.
    MaxSize(usize),
    Explicit(Vec<Vec<usize>>),
}

impl ModelSpec {
    pub fn build(&self, d: usize) -> Result<CandidateSet> {
        match self {
            ModelSpec::All => all_subsets(d, true, None),
            ModelSpec::AllNonEmpty => all_subsets(d, false, None),
            ModelSpec::MaxSize(k) => all_subsets(d, false, Some((*k).min(d))),
            ModelSpec::Explicit(sets) => from_explicit(sets, d),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "all" => Ok(ModelSpec::All),
            "all-nonempty" => Ok(ModelSpec::AllNonEmpty),
            _ => {
                if let Some(k) = s.strip_prefix("size<=") {
                    let k: usize = k.trim().parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad size bound in models spec {s:?}"))
                    })?;
                    if k == 0 {
                        return Err(Error::InvalidParameter("size<=0 selects no models".into()));
                    }
                    Ok(ModelSpec::MaxSize(k))
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown models spec {s:?}; expected all, all-nonempty, size<=k or @file.json"
                    )))
                }
            }
        }
    }
}
