//! Application configuration: a TOML file plus `TUTOR_INTENT_*` environment
//! overrides. API keys are never stored here, only the name of the variable
//! that holds them.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{IntentClassifier, ReplyGenerator, ScriptedReplies};
use crate::dialogue::{default_scripts, load_phase_scripts, PhaseScript, ThresholdPolicy};
use crate::forest::{ForestClassifier, ModelFile};
use crate::llm::{BackendConfig, FunctionCallClassifier, LlmReplies, ScriptEntry, ScriptedClassifier, SentinelClassifier, ToolSchema};

pub const ENV_PREFIX: &str = "TUTOR_INTENT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{what} not found: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("cannot build backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Forest,
    Sentinel,
    FunctionCall,
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "forest" => Ok(BackendKind::Forest),
            "sentinel" => Ok(BackendKind::Sentinel),
            "function_call" => Ok(BackendKind::FunctionCall),
            "mock" => Ok(BackendKind::Mock),
            other => Err(ConfigError::Invalid(format!("unknown backend {other:?}"))),
        }
    }
}

/// One classifier backend. Which fields matter depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Overrides the backend's own report label.
    #[serde(default)]
    pub label: Option<String>,
    /// Forest model file.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// Chat-completion endpoint for `sentinel` and `function_call`. When set
    /// on any backend it also generates Continue-path replies.
    #[serde(default)]
    pub llm: Option<BackendConfig>,
    #[serde(default)]
    pub tool: Option<ToolSchema>,
    /// Mock script given inline.
    #[serde(default)]
    pub script: Option<Vec<ScriptEntry>>,
    /// Mock script as a JSON file.
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    #[serde(default)]
    pub mock_latency_seconds: f64,
    /// Cycle the mock script instead of exhausting it.
    #[serde(default)]
    pub repeat: bool,
}

impl BackendSpec {
    pub fn of_kind(kind: BackendKind) -> Self {
        BackendSpec {
            kind,
            label: None,
            model_path: None,
            llm: None,
            tool: None,
            script: None,
            script_path: None,
            mock_latency_seconds: 0.0,
            repeat: false,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.model_path, &mut self.script_path].into_iter().flatten() {
            *p = resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            BackendKind::Forest => {
                let p = self
                    .model_path
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("forest backend needs model_path".into()))?;
                require(p, "model file")?;
            }
            BackendKind::Sentinel | BackendKind::FunctionCall => {
                if self.llm.is_none() {
                    return Err(ConfigError::Invalid(format!("{:?} backend needs an [llm] table", self.kind)));
                }
            }
            BackendKind::Mock => match (&self.script, &self.script_path) {
                (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either script or script_path, not both".into())),
                (None, None) => return Err(ConfigError::Invalid("mock backend needs script or script_path".into())),
                (None, Some(p)) => require(p, "mock script")?,
                (Some(s), None) if s.is_empty() => return Err(ConfigError::Invalid("mock script is empty".into())),
                _ => {}
            },
        }
        if let Some(llm) = &self.llm {
            llm.validate().map_err(ConfigError::Invalid)?;
        }
        if !(self.mock_latency_seconds >= 0.0 && self.mock_latency_seconds.is_finite()) {
            return Err(ConfigError::Invalid("mock_latency_seconds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn build_classifier(&self) -> Result<Built, ConfigError> {
        self.validate()?;
        let (classifier, model_format): (Arc<dyn IntentClassifier>, Option<String>) = match self.kind {
            BackendKind::Forest => {
                let path = self.model_path.as_ref().expect("validated");
                let file = ModelFile::load(path).map_err(|e| ConfigError::Backend(format!("{}: {e}", path.display())))?;
                let format = file.format.clone();
                let mut clf = ForestClassifier::from_model_file(file).map_err(|e| ConfigError::Backend(e.to_string()))?;
                if let Some(l) = &self.label {
                    clf.label = l.clone();
                }
                (Arc::new(clf), Some(format))
            }
            BackendKind::Sentinel => {
                let mut clf = SentinelClassifier::new(self.llm.clone().expect("validated"));
                if let Some(l) = &self.label {
                    clf.label = l.clone();
                }
                (Arc::new(clf), None)
            }
            BackendKind::FunctionCall => {
                let mut clf =
                    FunctionCallClassifier::new(self.llm.clone().expect("validated"), self.tool.clone().unwrap_or_default());
                if let Some(l) = &self.label {
                    clf.label = l.clone();
                }
                (Arc::new(clf), None)
            }
            BackendKind::Mock => {
                let script = match (&self.script, &self.script_path) {
                    (Some(s), _) => s.clone(),
                    (None, Some(p)) => {
                        let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Backend(format!("{}: {e}", p.display())))?;
                        serde_json::from_str(&text).map_err(|e| ConfigError::Backend(format!("{}: {e}", p.display())))?
                    }
                    (None, None) => unreachable!("validated"),
                };
                let label = self.label.clone().unwrap_or_else(|| "Mock".into());
                let mut clf = ScriptedClassifier::new(label, script)
                    .map_err(|e| ConfigError::Backend(e.to_string()))?
                    .with_latency(Duration::from_secs_f64(self.mock_latency_seconds));
                if self.repeat {
                    clf = clf.repeating();
                }
                (Arc::new(clf), None)
            }
        };
        let replies: Arc<dyn ReplyGenerator> = match &self.llm {
            Some(llm) => Arc::new(LlmReplies {
                client: crate::llm::ChatClient::new(llm.clone()),
            }),
            None => Arc::new(ScriptedReplies),
        };
        Ok(Built {
            classifier,
            replies,
            model_format,
        })
    }
}

/// A ready-to-use backend.
#[derive(Clone)]
pub struct Built {
    pub classifier: Arc<dyn IntentClassifier>,
    pub replies: Arc<dyn ReplyGenerator>,
    /// Format version of the loaded model file, for forest backends.
    pub model_format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Sessions are restored from and written to this file when set.
    #[serde(default)]
    pub snapshot_path: Option<PathBuf>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: default_bind(),
            snapshot_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub backend: BackendSpec,
    /// Backends compared by `bench`; defaults to `backend` alone.
    #[serde(default)]
    pub bench: Vec<BackendSpec>,
    #[serde(default)]
    pub policy: ThresholdPolicy,
    #[serde(default)]
    pub phase_scripts: Option<PathBuf>,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub service: ServiceConfig,
}

fn default_seed() -> u64 {
    1
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require(p: &Path, what: &'static str) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            what,
            path: p.to_path_buf(),
        })
    }
}

impl AppConfig {
    pub fn with_backend(backend: BackendSpec) -> Self {
        AppConfig {
            seed: default_seed(),
            backend,
            bench: Vec::new(),
            policy: ThresholdPolicy::default(),
            phase_scripts: None,
            data: DataPaths::default(),
            service: ServiceConfig::default(),
        }
    }

    /// Parses TOML; relative paths are taken relative to `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.backend.resolve_paths(base_dir);
        for b in &mut cfg.bench {
            b.resolve_paths(base_dir);
        }
        for p in [&mut cfg.phase_scripts, &mut cfg.data.corpus, &mut cfg.data.split, &mut cfg.service.snapshot_path]
            .into_iter()
            .flatten()
        {
            *p = resolve(base_dir, p);
        }
        Ok(cfg)
    }

    /// Reads the file, applies environment overrides and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        cfg.apply_overrides(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `TUTOR_INTENT_*` variables: BACKEND, MODEL_PATH, SEED, BIND,
    /// SNAPSHOT_PATH, ENDPOINT_URL, MODEL_NAME, API_KEY_ENV, TIMEOUT_SECONDS,
    /// ACT_THRESHOLD, CONFIRM_THRESHOLD. Other variables are ignored.
    pub fn apply_overrides(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_PREFIX}{key}={v:?} is not a valid number")))
        }
        for (k, v) in vars {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else { continue };
            match key {
                "BACKEND" => self.backend.kind = v.parse()?,
                "MODEL_PATH" => self.backend.model_path = Some(PathBuf::from(v)),
                "SEED" => self.seed = num(key, &v)?,
                "BIND" => self.service.bind = v,
                "SNAPSHOT_PATH" => self.service.snapshot_path = Some(PathBuf::from(v)),
                "ACT_THRESHOLD" => self.policy.act_threshold = num(key, &v)?,
                "CONFIRM_THRESHOLD" => self.policy.confirm_threshold = num(key, &v)?,
                "ENDPOINT_URL" | "MODEL_NAME" | "API_KEY_ENV" | "TIMEOUT_SECONDS" => {
                    let llm = self.backend.llm.get_or_insert_with(|| BackendConfig::new("", ""));
                    match key {
                        "ENDPOINT_URL" => llm.endpoint_url = v,
                        "MODEL_NAME" => llm.model_name = v,
                        "API_KEY_ENV" => llm.api_key_env = Some(v),
                        _ => llm.timeout_seconds = num(key, &v)?,
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.backend.validate()?;
        for b in &self.bench {
            b.validate()?;
        }
        self.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(p) = &self.phase_scripts {
            require(p, "phase script file")?;
        }
        if let Some(p) = &self.data.corpus {
            require(p, "corpus")?;
        }
        if let Some(p) = &self.data.split {
            require(p, "split file")?;
        }
        Ok(())
    }

    pub fn scripts(&self) -> Result<Vec<PhaseScript>, ConfigError> {
        match &self.phase_scripts {
            Some(p) => load_phase_scripts(p).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display()))),
            None => Ok(default_scripts()),
        }
    }

    /// `bench` entries, or the main backend when none are listed.
    pub fn bench_backends(&self) -> Vec<BackendSpec> {
        if self.bench.is_empty() {
            vec![self.backend.clone()]
        } else {
            self.bench.clone()
        }
    }
}
