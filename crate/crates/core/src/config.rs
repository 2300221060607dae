//! Run configuration loaded from a TOML file.
//!
//! ```toml
//! [gateway]
//! backend = "scripted"            # or "openai"
//! transcript = "transcript.jsonl"
//! model_name = "gpt-4.1"
//! temperature = 0.0
//! max_turns = 30
//!
//! [retrieval]
//! embedder = "deterministic"      # or "remote"
//! k_min = 2
//! top_n = 4
//!
//! [oracle]
//! command_timeout_secs = 600
//! total_timeout_secs = 1800
//!
//! [limits]
//! max_failed_attempts = 3
//!
//! [pricing."gpt-4.1"]
//! input_per_million = 2.0
//! output_per_million = 8.0
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, PriceTable, DEFAULT_MAX_FAILED_ATTEMPTS, DEFAULT_REQUEST_TIMEOUT};
use crate::gateway::{
    Gateway, GatewayConfig, OpenAiGateway, ScriptedGateway, DEFAULT_MAX_TURNS, DEFAULT_PROMPT_BUDGET,
};
use crate::localizer::{DEFAULT_CONTEXT_RADIUS, DEFAULT_K};
use crate::memory::DEFAULT_DEDUP_THRESHOLD;
use crate::oracle::{OracleLimits, DEFAULT_LOG_CAP};
use crate::retrieval::embed::{CachedEmbedder, DeterministicEmbedder, Embedder, RemoteEmbedder, DEFAULT_DETERMINISTIC_DIM};
use crate::retrieval::{DEFAULT_K_MIN, DEFAULT_TOP_N};
use crate::workspace::compress::DEFAULT_COMPRESS_BUDGET;
use crate::workspace::WorkspaceConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Unreadable(PathBuf, std::io::Error),
    #[error("config {0} is invalid: {1}")]
    Invalid(PathBuf, String),
    #[error("{0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Scripted,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub backend: Backend,
    pub transcript: Option<PathBuf>,
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_turns: usize,
    pub api_key_env: String,
    pub request_timeout_secs: u64,
    pub model_insights: bool,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let g = GatewayConfig::default();
        Self {
            backend: Backend::Scripted,
            transcript: None,
            endpoint: g.endpoint,
            model_name: g.model_name,
            temperature: g.temperature,
            max_turns: DEFAULT_MAX_TURNS,
            api_key_env: g.api_key_env,
            request_timeout_secs: DEFAULT_REQUEST_TIMEOUT.as_secs(),
            model_insights: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub embedder: EmbedderKind,
    pub dimension: usize,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub k_min: usize,
    pub top_n: usize,
    pub dedup_threshold: f64,
    /// Applied after `repair` runs when set.
    pub prune_window: Option<u64>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            embedder: EmbedderKind::Deterministic,
            dimension: DEFAULT_DETERMINISTIC_DIM,
            endpoint: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            k_min: DEFAULT_K_MIN,
            top_n: DEFAULT_TOP_N,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            prune_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub command_timeout_secs: u64,
    pub total_timeout_secs: u64,
    pub log_cap: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        let l = OracleLimits::default();
        Self {
            command_timeout_secs: l.command_timeout.as_secs(),
            total_timeout_secs: l.total_timeout.as_secs(),
            log_cap: DEFAULT_LOG_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub max_failed_attempts: u32,
    pub prompt_budget: usize,
    pub compress_budget: usize,
    pub output_cap: usize,
    pub bash_timeout_secs: u64,
    pub search_limit: usize,
    pub search_limit_per_file: bool,
    pub search_context: usize,
    pub iter_grep_k: usize,
    pub context_radius: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        let w = WorkspaceConfig::default();
        Self {
            max_failed_attempts: DEFAULT_MAX_FAILED_ATTEMPTS,
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            compress_budget: DEFAULT_COMPRESS_BUDGET,
            output_cap: w.output_cap,
            bash_timeout_secs: w.bash_timeout.as_secs(),
            search_limit: w.search_limit,
            search_limit_per_file: w.search_limit_per_file,
            search_context: w.search_context,
            iter_grep_k: DEFAULT_K,
            context_radius: DEFAULT_CONTEXT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewaySection,
    pub retrieval: RetrievalSection,
    pub oracle: OracleSection,
    pub limits: LimitsSection,
    pub pricing: PriceTable,
    /// Directory the config was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut c: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable(path.to_path_buf(), e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| ConfigError::Invalid(path.to_path_buf(), e))
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.gateway.temperature >= 0.0) {
            return Err("gateway.temperature must be >= 0".into());
        }
        if self.gateway.max_turns == 0 {
            return Err("gateway.max_turns must be >= 1".into());
        }
        if self.limits.max_failed_attempts == 0 {
            return Err("limits.max_failed_attempts must be >= 1".into());
        }
        if self.retrieval.prune_window == Some(0) {
            return Err("retrieval.prune_window must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.retrieval.dedup_threshold) {
            return Err("retrieval.dedup_threshold must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            endpoint: self.gateway.endpoint.clone(),
            model_name: self.gateway.model_name.clone(),
            temperature: self.gateway.temperature,
            max_turns: self.gateway.max_turns,
            api_key_env: self.gateway.api_key_env.clone(),
        }
    }

    pub fn workspace_config(&self) -> WorkspaceConfig {
        WorkspaceConfig {
            output_cap: self.limits.output_cap,
            bash_timeout: Duration::from_secs(self.limits.bash_timeout_secs),
            search_limit: self.limits.search_limit,
            search_limit_per_file: self.limits.search_limit_per_file,
            search_context: self.limits.search_context,
            ..WorkspaceConfig::default()
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            max_failed_attempts: self.limits.max_failed_attempts,
            max_turns: self.gateway.max_turns,
            k_min: self.retrieval.k_min,
            top_n: self.retrieval.top_n,
            prompt_budget: self.limits.prompt_budget,
            compress_budget: self.limits.compress_budget,
            iter_grep_k: self.limits.iter_grep_k,
            context_radius: self.limits.context_radius,
            workspace: self.workspace_config(),
            oracle: OracleLimits {
                command_timeout: Duration::from_secs(self.oracle.command_timeout_secs),
                total_timeout: Duration::from_secs(self.oracle.total_timeout_secs),
                log_cap: self.oracle.log_cap,
            },
            model_name: self.gateway.model_name.clone(),
            pricing: self.pricing.clone(),
            model_insights: self.gateway.model_insights,
        }
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match self.retrieval.embedder {
            EmbedderKind::Deterministic => Arc::new(DeterministicEmbedder::new(self.retrieval.dimension)),
            EmbedderKind::Remote => Arc::new(CachedEmbedder::new(
                RemoteEmbedder::new(
                    &self.retrieval.endpoint,
                    &self.retrieval.model,
                    &self.retrieval.api_key_env,
                    Duration::from_secs(self.gateway.request_timeout_secs),
                    self.retrieval.dimension,
                )
                .map_err(|e| ConfigError::Backend(e.to_string()))?,
            )),
        })
    }

    /// Builds the configured gateway. `transcript` overrides the config's
    /// transcript path for the scripted backend.
    pub fn gateway(&self, transcript: Option<&Path>) -> Result<Box<dyn Gateway>, ConfigError> {
        match self.gateway.backend {
            Backend::Scripted => {
                let path = transcript
                    .map(Path::to_path_buf)
                    .or_else(|| self.gateway.transcript.as_ref().map(|t| self.resolve(t)))
                    .ok_or_else(|| ConfigError::Backend("scripted backend needs a transcript path".into()))?;
                let g = ScriptedGateway::from_file(&path)
                    .map_err(|e| ConfigError::Backend(format!("{}: {e}", path.display())))?;
                Ok(Box::new(g))
            }
            Backend::Openai => {
                let g = OpenAiGateway::new(self.gateway_config(), Duration::from_secs(self.gateway.request_timeout_secs))
                    .map_err(|e| ConfigError::Backend(e.to_string()))?;
                Ok(Box::new(g))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = Config::parse("", Path::new(".")).unwrap();
        assert_eq!(c.gateway.temperature, 0.0);
        assert_eq!(c.gateway.max_turns, 30);
        assert_eq!(c.limits.max_failed_attempts, 3);
        assert_eq!(c.retrieval.top_n, 4);
        assert_eq!(c.retrieval.k_min, 2);
        assert_eq!(c.oracle.command_timeout_secs, 600);
        assert_eq!(c.oracle.total_timeout_secs, 1800);
        assert_eq!(c.limits.prompt_budget, 24_000);
        assert_eq!(c.limits.output_cap, 20_000);
    }

    #[test]
    fn sections_and_pricing() {
        let c = Config::parse(
            r#"
[gateway]
backend = "openai"
model_name = "m1"
[retrieval]
embedder = "deterministic"
prune_window = 50
[limits]
search_limit_per_file = true
[pricing.m1]
input_per_million = 1.5
output_per_million = 6.0
"#,
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.gateway.backend, Backend::Openai);
        assert_eq!(c.retrieval.prune_window, Some(50));
        assert!(c.workspace_config().search_limit_per_file);
        assert_eq!(c.agent_config().pricing["m1"].output_per_million, 6.0);
        assert_eq!(c.resolve(Path::new("t.jsonl")), PathBuf::from("/cfg/t.jsonl"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("[gateway]\ntemperature = -1.0\n", Path::new(".")).is_err());
        assert!(Config::parse("[limits]\nmax_failed_attempts = 0\n", Path::new(".")).is_err());
        assert!(Config::parse("[gateway]\nbogus = 1\n", Path::new(".")).is_err());
    }

    #[test]
    fn scripted_backend_needs_transcript() {
        let c = Config::default();
        assert!(matches!(c.gateway(None), Err(ConfigError::Backend(_))));
    }
}
