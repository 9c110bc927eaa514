//! Runtime configuration from environment variables.
//!
//! | variable              | meaning                                        |
//! |-----------------------|------------------------------------------------|
//! | `PMCHAT_PROVIDER`     | `mock` (default) or `remote`                   |
//! | `PMCHAT_LLM_API_KEY`  | bearer key for the remote provider             |
//! | `PMCHAT_LLM_BASE_URL` | base URL; `/chat/completions` is appended       |
//! | `PMCHAT_LLM_MODEL`    | model name sent to the provider                |
//! | `PMCHAT_API_TOKEN`    | when set, the HTTP API requires this bearer     |
//! | `PMCHAT_DATA_DIR`     | data directory (default `./pmchat-data`)        |

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gateway::{HttpTransport, MockTransport, Transport, DEFAULT_TIMEOUT};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_REMOTE_MODEL: &str = "gpt-4o-mini";
pub const MOCK_MODEL: &str = "mock";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provider {
    Mock,
    Remote,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Config {
    pub provider: Provider,
    pub api_key: Option<String>,
    pub base_url: String,
    pub model: String,
    pub api_token: Option<String>,
    pub data_dir: PathBuf,
}

impl std::fmt::Debug for Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Config")
            .field("provider", &self.provider)
            .field("api_key", &self.api_key.as_ref().map(|_| "<set>"))
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_token", &self.api_token.as_ref().map(|_| "<set>"))
            .field("data_dir", &self.data_dir)
            .finish()
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            provider: Provider::Mock,
            api_key: None,
            base_url: DEFAULT_BASE_URL.into(),
            model: MOCK_MODEL.into(),
            api_token: None,
            data_dir: PathBuf::from("pmchat-data"),
        }
    }
}

impl Config {
    pub fn from_env() -> Result<Self> {
        Self::from_vars(&std::env::vars().collect())
    }

    pub fn from_vars(vars: &HashMap<String, String>) -> Result<Self> {
        let get = |k: &str| vars.get(k).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        let provider = match get("PMCHAT_PROVIDER").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("mock") => Provider::Mock,
            Some("remote") => Provider::Remote,
            Some(other) => {
                return Err(Error::Invalid(format!("PMCHAT_PROVIDER must be mock or remote, not {other:?}")))
            }
        };
        let default_model = match provider {
            Provider::Mock => MOCK_MODEL,
            Provider::Remote => DEFAULT_REMOTE_MODEL,
        };
        Ok(Config {
            provider,
            api_key: get("PMCHAT_LLM_API_KEY"),
            base_url: get("PMCHAT_LLM_BASE_URL").unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            model: get("PMCHAT_LLM_MODEL").unwrap_or_else(|| default_model.into()),
            api_token: get("PMCHAT_API_TOKEN"),
            data_dir: get("PMCHAT_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("pmchat-data")),
        })
    }

    pub fn transport(&self) -> Result<Arc<dyn Transport>> {
        match self.provider {
            Provider::Mock => Ok(Arc::new(MockTransport::new())),
            Provider::Remote => {
                if self.api_key.is_none() {
                    return Err(Error::Invalid("PMCHAT_PROVIDER=remote needs PMCHAT_LLM_API_KEY".into()));
                }
                Ok(Arc::new(HttpTransport::new(&self.base_url, self.api_key.clone(), DEFAULT_TIMEOUT)))
            }
        }
    }
}
