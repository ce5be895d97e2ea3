//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use inferbase::baseline::{ConditionKey, LearnerConfig, Mode, RunSettings};
use inferbase::data::{ColumnKind, Dataset};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_THRESHOLDS: [f64; 10] = [0.0, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999];
pub const DEFAULT_FRACTIONS: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

/// Which attributes the attacker knows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnownSpec {
    /// `all-but-secret` or `pii-only`.
    Named(String),
    List(Vec<String>),
}

impl KnownSpec {
    pub fn label(&self) -> String {
        match self {
            KnownSpec::Named(n) => n.clone(),
            KnownSpec::List(cols) => cols.join(";"),
        }
    }

    fn resolve(&self, d: &Dataset, secret: &str) -> Result<Vec<String>, CliError> {
        let cols: Vec<String> = match self {
            KnownSpec::Named(n) if n == "all-but-secret" => d.columns().iter().map(|c| c.name.clone()).collect(),
            KnownSpec::Named(n) if n == "pii-only" => d.pii_columns().into_iter().map(str::to_string).collect(),
            KnownSpec::Named(n) => {
                return Err(CliError::Validation(format!(
                    "known must be \"all-but-secret\", \"pii-only\" or a list of columns, not {n:?}"
                )))
            }
            KnownSpec::List(cols) => cols.clone(),
        };
        let cols: Vec<String> = cols.into_iter().filter(|c| c != secret || matches!(self, KnownSpec::List(_))).collect();
        if cols.is_empty() {
            return Err(CliError::Validation(format!(
                "no known attributes left for secret {secret:?} under {}",
                self.label()
            )));
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    /// A column name, or `*` for every column in turn.
    pub secret: String,
    pub known: KnownSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_value: Option<String>,
    /// Overrides the run's epsilon for a continuous secret.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub file: PathBuf,
    pub secret: String,
    pub known: KnownSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_member_count: Option<usize>,
    #[serde(default = "default_fraction")]
    pub non_member_fraction: f64,
    #[serde(default = "default_budget")]
    pub complete_budget: usize,
    /// Relative tolerance for continuous secrets.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Learners compared by `replicate`; defaults to `[learner]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learners: Vec<LearnerConfig>,
    #[serde(default)]
    pub conditions: Vec<ConditionSpec>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skews: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roc: Vec<PathBuf>,
    #[serde(default)]
    pub bundled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_fraction() -> f64 {
    0.3
}
fn default_budget() -> usize {
    500
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}
fn default_fractions() -> Vec<f64> {
    DEFAULT_FRACTIONS.to_vec()
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Reads a config file and makes its relative paths absolute against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = normalize(&base.join(&*p));
            }
        };
        self.dataset.as_mut().map(fix);
        self.schema.as_mut().map(fix);
        self.out.as_mut().map(fix);
        self.roc.iter_mut().for_each(fix);
        self.attacks.iter_mut().for_each(|a| fix(&mut a.file));
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Validation("seed is required (in the config or via --seed)".into()))
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        let p = self
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::Validation("dataset is required".into()))?;
        if !p.is_file() {
            return Err(CliError::Validation(format!("dataset {} does not exist", p.display())));
        }
        if let Some(s) = &self.schema {
            if !s.is_file() {
                return Err(CliError::Validation(format!("schema {} does not exist", s.display())));
            }
        }
        Ok(p)
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            mode: self.mode,
            non_member_count: self.non_member_count,
            non_member_fraction: self.non_member_fraction,
            complete_budget: self.complete_budget,
        }
    }

    pub fn learners(&self) -> Vec<LearnerConfig> {
        if self.learners.is_empty() {
            vec![self.learner]
        } else {
            self.learners.clone()
        }
    }

    /// First 16 hex digits of the SHA-256 of the config's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex16(&Sha256::digest(&json))
    }

    /// Expands `*` secrets and named knowledge sets against `d`.
    pub fn resolve_conditions(&self, d: &Dataset) -> Result<Vec<ResolvedCondition>, CliError> {
        if self.conditions.is_empty() {
            return Err(CliError::Validation("no conditions configured".into()));
        }
        let mut out = Vec::new();
        for spec in &self.conditions {
            let secrets: Vec<String> = if spec.secret == "*" {
                d.columns().iter().map(|c| c.name.clone()).collect()
            } else {
                vec![spec.secret.clone()]
            };
            for secret in secrets {
                out.push(resolve_one(d, &secret, &spec.known, spec.secret_value.as_deref(), spec.epsilon.unwrap_or(self.epsilon))?);
            }
        }
        Ok(out)
    }

    pub fn resolve_attack(&self, d: &Dataset, a: &AttackSpec) -> Result<ResolvedCondition, CliError> {
        resolve_one(d, &a.secret, &a.known, None, a.epsilon.unwrap_or(self.epsilon))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCondition {
    pub knowledge: String,
    pub key: ConditionKey,
}

fn resolve_one(
    d: &Dataset,
    secret: &str,
    known: &KnownSpec,
    secret_value: Option<&str>,
    epsilon: f64,
) -> Result<ResolvedCondition, CliError> {
    let kind = d.column(secret).map_err(|e| CliError::Validation(e.to_string()))?.kind;
    let mut key = ConditionKey::new(known.resolve(d, secret)?, secret);
    if kind == ColumnKind::Continuous {
        key = key.with_epsilon(epsilon);
    }
    if let Some(v) = secret_value {
        key = key.with_secret_value(v);
    }
    key.validate(d).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(ResolvedCondition {
        knowledge: known.label(),
        key,
    })
}

pub fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn normalize(p: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir if out.file_name().is_some() && !out.ends_with("..") => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}
