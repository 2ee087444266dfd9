//! TOML service configuration. Relative paths resolve against the config
//! file's directory; secrets are read from the environment variables the
//! file names, never from the file itself.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! cache_dir = "cache"
//! docs_dir = "tools"
//!
//! [upstream]
//! base_url = "http://hub.local:8080/rapidapi"
//! key_env = "TOOLBENCH_KEY"
//!
//! [providers.main]
//! kind = "openai"
//! endpoint = "https://api.openai.com/v1"
//! key_env = "OPENAI_API_KEY"
//!
//! [simulator]
//! provider = "main"
//! model_name = "gpt-4-turbo"
//!
//! [judges]
//! provider = "main"
//! evaluator = "gpt-4-turbo"
//! solvability = ["gpt-4-turbo", "gpt-4o", "gpt-4"]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::cache::{Cache, CacheError};
use crate::docs::{DocIndex, DocsError};
use crate::evaluation::VoteThreshold;
use crate::gateway::{Gateway, GatewayOptions};
use crate::llm::stub::{EchoProvider, ScriptedProvider};
use crate::llm::{BridgeConfig, ChatModel, ChatProvider, LlmBridge, OpenAiCompatProvider, ReplayMode};
use crate::prompts::PromptSet;
use crate::simulator::{Simulator, SimulatorConfig};
use crate::upstream::{HttpUpstream, OfflineUpstream, Upstream, UpstreamConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} is not set")]
    MissingSecret(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Docs(#[from] DocsError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub docs_dir: Option<PathBuf>,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    /// Newline-delimited JSON log of every LLM exchange.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
    #[serde(default)]
    pub strict_fault: bool,
    /// Remote gateway used by `run`; an in-process gateway is built otherwise.
    #[serde(default)]
    pub gateway_url: Option<String>,
    #[serde(default)]
    pub upstream: Option<UpstreamSection>,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderSection>,
    #[serde(default)]
    pub simulator: Option<SimulatorSection>,
    #[serde(default)]
    pub judges: Option<JudgesSection>,
    #[serde(default)]
    pub agent: Option<AgentSection>,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpstreamSection {
    pub base_url: String,
    pub key_env: String,
    #[serde(default = "default_upstream_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "one")]
    pub retry_budget: u32,
    #[serde(default = "sixteen")]
    pub max_in_flight: usize,
}

fn default_upstream_timeout() -> u64 {
    15
}
fn one() -> u32 {
    1
}
fn sixteen() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProviderSection {
    /// OpenAI-compatible chat completions endpoint.
    Openai {
        endpoint: String,
        key_env: String,
        #[serde(default = "default_provider_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retry_budget: Option<u32>,
        #[serde(default)]
        max_in_flight: Option<usize>,
        #[serde(default)]
        replay: Option<ReplaySection>,
    },
    /// Replies with the user prompt.
    Echo,
    /// Fixed replies, cycled.
    Scripted { replies: Vec<String> },
    /// Answers only from a recorded exchange file.
    Replay { file: PathBuf },
}

fn default_provider_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub mode: ReplayMode,
    pub file: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SimulatorSection {
    pub provider: String,
    #[serde(flatten)]
    pub settings: SimulatorConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgesSection {
    pub provider: String,
    pub evaluator: String,
    #[serde(default)]
    pub solvability: Vec<String>,
    #[serde(default)]
    pub threshold: VoteThreshold,
    #[serde(default)]
    pub temperature: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub provider: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_step_budget")]
    pub step_budget: usize,
    #[serde(default = "four")]
    pub workers: usize,
}

fn default_step_budget() -> usize {
    8
}
fn four() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub provider: String,
    pub model_name: String,
    #[serde(default = "eight")]
    pub workers: usize,
}

fn eight() -> usize {
    8
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            ConfigError::Invalid(reason) => ConfigError::Parse {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.message().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let known = |name: &str, section: &str| {
            if self.providers.contains_key(name) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("[{section}] names unknown provider `{name}`")))
            }
        };
        if let Some(s) = &self.simulator {
            known(&s.provider, "simulator")?;
        }
        if let Some(j) = &self.judges {
            known(&j.provider, "judges")?;
        }
        if let Some(a) = &self.agent {
            known(&a.provider, "agent")?;
        }
        if let Some(s) = &self.scan {
            known(&s.provider, "scan")?;
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

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    pub fn open_cache(&self) -> Result<Arc<Cache>, ConfigError> {
        Ok(Arc::new(Cache::open(self.cache_path())?))
    }

    pub fn load_docs(&self) -> Result<Arc<DocIndex>, ConfigError> {
        Ok(Arc::new(match &self.docs_dir {
            Some(d) => DocIndex::load_dir(&self.resolve(d))?,
            None => DocIndex::new(),
        }))
    }

    pub fn prompts(&self) -> Result<Arc<PromptSet>, ConfigError> {
        Ok(Arc::new(match &self.prompts_dir {
            Some(d) => {
                let dir = self.resolve(d);
                PromptSet::from_dir(&dir).map_err(|source| ConfigError::Read { path: dir, source })?
            }
            None => PromptSet::default(),
        }))
    }

    pub fn upstream(&self) -> Result<Option<Arc<dyn Upstream>>, ConfigError> {
        let Some(u) = &self.upstream else {
            return Ok(None);
        };
        let key = secret(&u.key_env)?;
        let mut cfg = UpstreamConfig::new(&u.base_url, key).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.timeout = Duration::from_secs(u.timeout_secs);
        cfg.retry_budget = u.retry_budget;
        cfg.max_in_flight = u.max_in_flight;
        let client = HttpUpstream::new(cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Some(Arc::new(client)))
    }

    /// Builds the bridge for a named provider.
    pub fn bridge(&self, name: &str) -> Result<Arc<LlmBridge>, ConfigError> {
        let section = self
            .providers
            .get(name)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown provider `{name}`")))?;
        let mut bridge = match section {
            ProviderSection::Openai {
                endpoint,
                key_env,
                timeout_secs,
                retry_budget,
                max_in_flight,
                replay,
            } => {
                let provider: Arc<dyn ChatProvider> = Arc::new(OpenAiCompatProvider::new(
                    endpoint.clone(),
                    secret(key_env)?,
                    Duration::from_secs(*timeout_secs),
                ));
                let mut cfg = BridgeConfig::default();
                if let Some(r) = retry_budget {
                    cfg.retry_budget = *r;
                }
                if let Some(m) = max_in_flight {
                    cfg.max_in_flight = *m;
                }
                let bridge = LlmBridge::new(provider, cfg);
                match replay {
                    Some(r) => bridge
                        .with_replay(r.mode, Some(self.resolve(&r.file)))
                        .map_err(|source| ConfigError::Read {
                            path: self.resolve(&r.file),
                            source,
                        })?,
                    None => bridge,
                }
            }
            ProviderSection::Echo => LlmBridge::immediate(EchoProvider),
            ProviderSection::Scripted { replies } => {
                LlmBridge::immediate(ScriptedProvider::replies(replies.clone()).cycling())
            }
            ProviderSection::Replay { file } => LlmBridge::immediate(EchoProvider)
                .with_replay(ReplayMode::ReplayOnly, Some(self.resolve(file)))
                .map_err(|source| ConfigError::Read {
                    path: self.resolve(file),
                    source,
                })?,
        };
        if let Some(log) = &self.audit_log {
            bridge = bridge.with_audit_file(self.resolve(log));
        }
        Ok(Arc::new(bridge))
    }

    fn model(&self, provider: &str, model_name: &str, temperature: f64) -> Result<ChatModel, ConfigError> {
        Ok(ChatModel::new(self.bridge(provider)?, model_name, temperature))
    }

    pub fn simulator(&self) -> Result<Simulator, ConfigError> {
        let s = self
            .simulator
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [simulator] section".into()))?;
        Ok(Simulator::new(self.bridge(&s.provider)?, s.settings.clone()).with_prompts(self.prompts()?))
    }

    /// Cache, upstream (offline if unconfigured), simulator and docs wired
    /// into a gateway.
    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        let cache = self.open_cache()?;
        let upstream = self.upstream()?.unwrap_or_else(|| Arc::new(OfflineUpstream));
        let simulator = Arc::new(self.simulator()?);
        Ok(Gateway::new(cache, upstream, simulator, self.load_docs()?).with_options(GatewayOptions {
            strict_fault: self.strict_fault,
        }))
    }

    fn judges_section(&self) -> Result<&JudgesSection, ConfigError> {
        self.judges
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [judges] section".into()))
    }

    pub fn evaluator(&self) -> Result<ChatModel, ConfigError> {
        let j = self.judges_section()?;
        self.model(&j.provider, &j.evaluator, j.temperature)
    }

    pub fn solvability_judges(&self) -> Result<(Vec<ChatModel>, VoteThreshold), ConfigError> {
        let j = self.judges_section()?;
        if j.solvability.is_empty() {
            return Err(ConfigError::Invalid("[judges] solvability list is empty".into()));
        }
        let models = j
            .solvability
            .iter()
            .map(|m| self.model(&j.provider, m, j.temperature))
            .collect::<Result<_, _>>()?;
        Ok((models, j.threshold))
    }

    pub fn agent_section(&self) -> Result<&AgentSection, ConfigError> {
        self.agent
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [agent] section".into()))
    }

    pub fn agent_model(&self) -> Result<ChatModel, ConfigError> {
        let a = self.agent_section()?;
        self.model(&a.provider, &a.model_name, a.temperature)
    }

    pub fn scan_model(&self) -> Result<(ChatModel, usize), ConfigError> {
        let s = self
            .scan
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [scan] section".into()))?;
        Ok((self.model(&s.provider, &s.model_name, 0.0)?, s.workers))
    }
}

fn secret(var: &str) -> Result<String, ConfigError> {
    std::env::var(var)
        .ok()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ConfigError::MissingSecret(var.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STUB: &str = r#"
cache_dir = "cache"
strict_fault = true

[providers.stub]
kind = "scripted"
replies = ['{"error": "", "response": "ok"}']

[simulator]
provider = "stub"
model_name = "sim"
max_examples = 3

[judges]
provider = "stub"
evaluator = "judge"
solvability = ["a", "b", "c"]
threshold = "unanimous"
"#;

    #[test]
    fn at_least_threshold() {
        let text = STUB.replace(r#"threshold = "unanimous""#, "threshold = { at-least = 2 }");
        let cfg = ServiceConfig::from_toml(&text, Path::new("/")).unwrap();
        assert_eq!(cfg.judges.unwrap().threshold, VoteThreshold::AtLeast(2));
    }

    #[test]
    fn parses_and_resolves_relative_paths() {
        let cfg = ServiceConfig::from_toml(STUB, Path::new("/srv/gw")).unwrap();
        assert_eq!(cfg.cache_path(), PathBuf::from("/srv/gw/cache"));
        assert_eq!(cfg.listen, "127.0.0.1:8080");
        let sim = cfg.simulator.as_ref().unwrap();
        assert_eq!(sim.settings.max_examples, 3);
        assert_eq!(sim.settings.temperature, SimulatorConfig::default().temperature);
        let (judges, t) = cfg.solvability_judges().unwrap();
        assert_eq!(judges.len(), 3);
        assert_eq!(t, VoteThreshold::Unanimous);
    }

    #[test]
    fn unknown_provider_rejected() {
        let bad = STUB.replace("provider = \"stub\"\nmodel_name", "provider = \"nope\"\nmodel_name");
        assert!(matches!(
            ServiceConfig::from_toml(&bad, Path::new(".")),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = format!("colour = \"blue\"\n{STUB}");
        assert!(ServiceConfig::from_toml(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn missing_secret_is_named() {
        let text = format!(
            "{STUB}\n[upstream]\nbase_url = \"http://127.0.0.1:9\"\nkey_env = \"TOOLGATE_TEST_UNSET_KEY\"\n"
        );
        let cfg = ServiceConfig::from_toml(&text, Path::new(".")).unwrap();
        let err = cfg.upstream().err().unwrap();
        assert!(err.to_string().contains("TOOLGATE_TEST_UNSET_KEY"));
    }

    #[tokio::test]
    async fn builds_in_process_gateway() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServiceConfig::from_toml(STUB, dir.path()).unwrap();
        let gw = cfg.gateway().unwrap();
        assert!(gw.cache().is_empty());
        assert!(dir.path().join("cache").is_dir());
    }
}
