//! Backend settings resolution: command-line flags override environment
//! variables (`LLM_*`, `EMBED_*`), which override the optional TOML config
//! file. The resolved values (minus secrets) are echoed into every output
//! artifact.

use serde::{Deserialize, Serialize};
use statefactory_core::chat::{ChatConfig, ReasoningEffort};
use statefactory_core::embedding::RemoteEmbeddingConfig;

/// Keys accepted in the TOML config file.
///
/// ```toml
/// parallelism = 8
///
/// [llm]
/// endpoint = "http://localhost:8000/v1"
/// model = "served-model"
/// api_key = "..."
///
/// [embed]
/// endpoint = "http://localhost:8001/v1"
/// model = "embedding-model"
/// api_key = "..."
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub llm: BackendSection,
    #[serde(default)]
    pub embed: BackendSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct BackendSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
}

impl ConfigFile {
    pub fn load(path: Option<&std::path::Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(toml::from_str(&text)?)
            }
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

/// Fully resolved backend settings for one run.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub parallelism: usize,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_api_key: Option<String>,
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
    pub embed_api_key: Option<String>,
}

impl Settings {
    pub fn resolve(
        file: &ConfigFile,
        flag_parallelism: Option<usize>,
        flag_llm_endpoint: Option<String>,
        flag_llm_model: Option<String>,
        flag_embed_endpoint: Option<String>,
        flag_embed_model: Option<String>,
    ) -> Self {
        Settings {
            parallelism: flag_parallelism.or(file.parallelism).unwrap_or(8).max(1),
            llm_endpoint: flag_llm_endpoint
                .or_else(|| env_var("LLM_ENDPOINT"))
                .or_else(|| file.llm.endpoint.clone()),
            llm_model: flag_llm_model
                .or_else(|| env_var("LLM_MODEL"))
                .or_else(|| file.llm.model.clone()),
            llm_api_key: env_var("LLM_API_KEY").or_else(|| file.llm.api_key.clone()),
            embed_endpoint: flag_embed_endpoint
                .or_else(|| env_var("EMBED_ENDPOINT"))
                .or_else(|| file.embed.endpoint.clone()),
            embed_model: flag_embed_model
                .or_else(|| env_var("EMBED_MODEL"))
                .or_else(|| file.embed.model.clone()),
            embed_api_key: env_var("EMBED_API_KEY").or_else(|| file.embed.api_key.clone()),
        }
    }

    /// Chat configuration, or `None` when endpoint/model are unresolved.
    pub fn chat_config(&self, reasoning_effort: Option<ReasoningEffort>) -> Option<ChatConfig> {
        let endpoint = self.llm_endpoint.as_deref()?;
        let model = self.llm_model.as_deref()?;
        let mut config = ChatConfig::new(endpoint, model);
        config.api_key = self.llm_api_key.clone();
        config.reasoning_effort = reasoning_effort;
        Some(config)
    }

    /// Remote embedding configuration, or `None` when unresolved.
    pub fn embed_config(&self) -> Option<RemoteEmbeddingConfig> {
        let endpoint = self.embed_endpoint.as_deref()?;
        let model = self.embed_model.as_deref()?;
        let mut config = RemoteEmbeddingConfig::new(endpoint, model);
        config.api_key = self.embed_api_key.clone();
        Some(config)
    }

    /// Redacted view for echoing into run artifacts.
    pub fn echo(&self) -> SettingsEcho {
        SettingsEcho {
            parallelism: self.parallelism,
            llm_endpoint: self.llm_endpoint.clone(),
            llm_model: self.llm_model.clone(),
            embed_endpoint: self.embed_endpoint.clone(),
            embed_model: self.embed_model.clone(),
        }
    }
}

/// The secrets-free settings snapshot embedded in outputs.
#[derive(Debug, Clone, Serialize)]
pub struct SettingsEcho {
    pub parallelism: usize,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_outrank_file() {
        let file: ConfigFile =
            toml::from_str("parallelism = 2\n[llm]\nendpoint = \"http://file\"\nmodel = \"m\"\n")
                .unwrap();
        let settings =
            Settings::resolve(&file, Some(4), Some("http://flag".into()), None, None, None);
        assert_eq!(settings.parallelism, 4);
        assert_eq!(settings.llm_endpoint.as_deref(), Some("http://flag"));
        assert_eq!(settings.llm_model.as_deref(), Some("m"));
    }

    #[test]
    fn missing_backend_yields_none() {
        let settings = Settings::default();
        assert!(settings.chat_config(None).is_none());
        assert!(settings.embed_config().is_none());
    }
}
