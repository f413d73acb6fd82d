use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{
    ComplexityModel, HttpTransport, ModelSuite, RemoteModels, RetryPolicy, SubprocessTransport,
    ToyChemistry, Transport,
};
use crate::smiles::TokenDictionary;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading manifest {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("connecting models: {0}")]
    Connect(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    /// In-process toy chemistry loaded from `templates`.
    Toy,
    Subprocess,
    Http,
}

fn default_capacity() -> usize {
    50
}
fn default_forward_capacity() -> usize {
    10
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    8
}

/// Where the models live and what they can do. Read from TOML; relative
/// paths are resolved against the manifest's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub transport: TransportKind,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub command: Vec<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_capacity")]
    pub retro_capacity: usize,
    #[serde(default = "default_forward_capacity")]
    pub forward_capacity: usize,
    #[serde(default)]
    pub substitutions: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Ask the remote service (`scscore` op) for complexity scores instead
    /// of using the local surrogate.
    #[serde(default)]
    pub remote_complexity: bool,
}

/// Models ready for use, plus the remote complexity model when requested.
pub struct Connected {
    pub suite: ModelSuite,
    pub complexity: Option<Arc<dyn ComplexityModel>>,
    pub toy: Option<Arc<ToyChemistry>>,
}

impl ModelManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut m: ModelManifest = toml::from_str(text)?;
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        resolve(&mut m.templates);
        resolve(&mut m.substitutions);
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Manifest for an in-process toy chemistry file.
    pub fn toy(templates: impl Into<PathBuf>) -> Self {
        Self {
            transport: TransportKind::Toy,
            templates: Some(templates.into()),
            command: Vec::new(),
            endpoint: None,
            retro_capacity: default_capacity(),
            forward_capacity: default_forward_capacity(),
            substitutions: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            max_in_flight: default_in_flight(),
            remote_complexity: false,
        }
    }

    fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |m: &str| Err(ManifestError::Invalid(m.into()));
        if self.forward_capacity < 2 {
            return invalid("forward_capacity must be at least 2 (top-2 selectivity check)");
        }
        if self.retro_capacity == 0 {
            return invalid("retro_capacity must be at least 1");
        }
        match self.transport {
            TransportKind::Toy if self.templates.is_none() => invalid("toy transport needs `templates`"),
            TransportKind::Subprocess if self.command.is_empty() => invalid("subprocess transport needs `command`"),
            TransportKind::Http if self.endpoint.is_none() => invalid("http transport needs `endpoint`"),
            TransportKind::Toy if self.remote_complexity => invalid("toy transport has no remote complexity model"),
            _ => Ok(()),
        }
    }

    /// Fails when a run asks for more beams than the models support.
    pub fn check_beams(&self, retro_beams: usize, forward_topk: usize) -> Result<(), ManifestError> {
        if retro_beams > self.retro_capacity {
            return Err(ManifestError::Invalid(format!(
                "{retro_beams} retro beams requested, capacity is {}",
                self.retro_capacity
            )));
        }
        if forward_topk > self.forward_capacity {
            return Err(ManifestError::Invalid(format!(
                "forward top-{forward_topk} requested, capacity is {}",
                self.forward_capacity
            )));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { timeout: Duration::from_secs(self.timeout_secs), retries: self.retries, ..RetryPolicy::default() }
    }

    pub fn connect(&self) -> Result<Connected, ManifestError> {
        let connect_err = |e: String| ManifestError::Connect(e);
        let (suite, complexity, toy) = match self.transport {
            TransportKind::Toy => {
                let path = self.templates.as_ref().expect("validated");
                let toy = Arc::new(ToyChemistry::load(path).map_err(|e| connect_err(format!("{}: {e}", path.display())))?);
                (ModelSuite::from_toy(toy.clone()), None, Some(toy))
            }
            TransportKind::Subprocess | TransportKind::Http => {
                let transport: Arc<dyn Transport> = if self.transport == TransportKind::Subprocess {
                    Arc::new(SubprocessTransport::spawn(&self.command, self.max_in_flight).map_err(|e| connect_err(e.to_string()))?)
                } else {
                    Arc::new(HttpTransport::new(self.endpoint.clone().expect("validated"), self.max_in_flight))
                };
                let remote = Arc::new(RemoteModels::new(transport, self.retry_policy()));
                let complexity = self.remote_complexity.then(|| remote.clone() as Arc<dyn ComplexityModel>);
                (ModelSuite::from_remote(remote), complexity, None)
            }
        };
        let suite = match &self.substitutions {
            Some(path) => suite.with_substitutions(TokenDictionary::load(path).map_err(|e| connect_err(e.to_string()))?),
            None => suite,
        };
        Ok(Connected { suite, complexity, toy })
    }
}
