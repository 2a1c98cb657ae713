//! Config file support.
//!
//! The file is TOML with one optional table per subcommand. Keys mirror the
//! long flag names (`R`, `phi`, `epsilon`, `models`, ...). Sweep lists may
//! be written as arrays or as single values; `inf` is accepted either as the
//! TOML float literal or as the string `"inf"`.
//!
//! ```toml
//! [select]
//! input = "data.csv"
//! response = "y"
//! R = 3.5
//! epsilon = "inf"
//!
//! [sweep]
//! n = [100, 1000]
//! eps = [0.1, 1, 5, 10]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer};

use crate::args::{parse_real, AlgorithmArg, MechanismArg, StandardizeArg};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Int(v) => Ok(Real(v as f64)),
            Raw::Text(s) => parse_real(&s).map(Real).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub select: SelectFile,
    #[serde(default)]
    pub sweep: SweepFile,
    #[serde(default)]
    pub validate: ValidateFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SelectFile {
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub algorithm: Option<AlgorithmArg>,
    #[serde(rename = "R")]
    pub radius: Option<Real>,
    pub phi: Option<Real>,
    pub epsilon: Option<Real>,
    pub stage1_epsilon: Option<Real>,
    pub delta: Option<Real>,
    pub r: Option<Real>,
    pub models: Option<String>,
    pub mechanism: Option<MechanismArg>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub debug_unsafe: Option<bool>,
    pub intercept: Option<bool>,
    pub standardize: Option<StandardizeArg>,
    pub x_ranges: Option<Vec<(Real, Real)>>,
    pub y_range: Option<(Real, Real)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepFile {
    pub model_id: Option<u32>,
    pub n: Option<OneOrMany<usize>>,
    pub eps: Option<OneOrMany<Real>>,
    #[serde(rename = "R")]
    pub radius: Option<OneOrMany<Real>>,
    /// `"default"` or a list of values.
    pub phi: Option<OneOrMany<PhiEntry>>,
    pub delta: Option<OneOrMany<Real>>,
    pub replications: Option<usize>,
    pub algorithm: Option<AlgorithmArg>,
    pub mechanism: Option<MechanismArg>,
    pub seed: Option<u64>,
    pub timing: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PhiEntry {
    Value(Real),
    Keyword(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ValidateFile {
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub r: Option<Real>,
    pub max_size: Option<usize>,
    pub intercept: Option<bool>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<FileConfig, toml::de::Error> {
    toml::from_str(text)
}

pub fn real(v: Option<Real>) -> Option<f64> {
    v.map(|r| r.0)
}
