//! Completion backends. The search loop only sees [`CompletionBackend`];
//! which implementation answers is a configuration choice.

mod http;
mod replay;
mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use replay::ReplayBackend;
pub use scripted::{ScriptedBackend, DEFAULT_MALFORMED_FRACTION};

use crate::operators::GenerationRequest;

/// Where a request sits in the run, plus the sampling seed the loop drew
/// for it. Replay keys fixtures on `(generation, slot)`; the scripted
/// backend mixes `sample_seed` into its hash the way a sampler would.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotKey {
    pub generation: u64,
    pub slot: usize,
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("replay fixture missing: {}", .0.display())]
    FixtureMissing(PathBuf),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &GenerationRequest, key: SlotKey) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, req: &GenerationRequest, key: SlotKey) -> Result<String, BackendError> {
        (**self).complete(req, key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub scripted_seed: u64,
    #[serde(default = "default_malformed_fraction")]
    pub malformed_fraction: f64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_malformed_fraction() -> f64 {
    DEFAULT_MALFORMED_FRACTION
}

fn default_timeout_s() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

impl BackendConfig {
    pub fn scripted(seed: u64) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint_url: None,
            auth_token_env: None,
            fixture_dir: None,
            scripted_seed: seed,
            malformed_fraction: DEFAULT_MALFORMED_FRACTION,
            timeout_s: default_timeout_s(),
            retries: default_retries(),
        }
    }

    /// Field-level checks for the active kind.
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(BackendError::Config("backend.timeout_s must be positive".into()));
        }
        match self.kind {
            BackendKind::Http => {
                let url = self.endpoint_url.as_deref().unwrap_or_default();
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return Err(BackendError::Config(
                        "backend.endpoint_url must be an http(s) URL".into(),
                    ));
                }
            }
            BackendKind::Replay => {
                if self.fixture_dir.is_none() {
                    return Err(BackendError::Config(
                        "backend.fixture_dir is required for replay".into(),
                    ));
                }
            }
            BackendKind::Scripted => {
                if !(0.0..=1.0).contains(&self.malformed_fraction) {
                    return Err(BackendError::Config(
                        "backend.malformed_fraction must be in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn CompletionBackend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Http => Box::new(HttpBackend::new(self)?),
            BackendKind::Replay => Box::new(ReplayBackend::new(
                self.fixture_dir.clone().expect("validated"),
            )),
            BackendKind::Scripted => Box::new(
                ScriptedBackend::new(self.scripted_seed)
                    .with_malformed_fraction(self.malformed_fraction),
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::scripted(1);
        assert!(c.validate().is_ok());
        c.kind = BackendKind::Http;
        assert!(c.validate().is_err());
        c.endpoint_url = Some("http://localhost:1/v1".into());
        assert!(c.validate().is_ok());
        c.kind = BackendKind::Replay;
        assert!(c.validate().is_err());
        c.timeout_s = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_uses_defaults() {
        let c: BackendConfig = serde_json::from_str(r#"{"kind": "scripted", "scripted_seed": 4}"#).unwrap();
        assert_eq!(c, BackendConfig::scripted(4));
        assert!(serde_json::from_str::<BackendConfig>(r#"{"kind": "scripted", "token": "x"}"#).is_err());
    }
}
