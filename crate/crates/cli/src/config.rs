//! TOML run configuration. Relative paths resolve against the config file's
//! directory; flags override the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use trajkg::analytics::Thresholds;
use trajkg::mapping::{DEFAULT_TAU, DEFAULT_UNMAPPED_CEILING};
use trajkg::provider::remote::API_KEY_ENV;
use trajkg::provider::{RemoteConfig, RetryPolicy, DEFAULT_BATCH_SIZE};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderChoice {
    Remote,
    #[default]
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Md,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        self != Format::Md
    }

    pub fn markdown(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: ProviderChoice,
    pub endpoint: String,
    pub model: String,
    pub response_pointer: String,
    pub template_dir: Option<PathBuf>,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub batch_size: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        ProviderSettings {
            kind: ProviderChoice::default(),
            endpoint: remote.endpoint,
            model: remote.model,
            response_pointer: remote.response_pointer,
            template_dir: None,
            max_retries: remote.retry.max_retries,
            base_delay_ms: remote.retry.base_delay_ms,
            max_in_flight: remote.max_in_flight,
            timeout_secs: remote.timeout_secs,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl ProviderSettings {
    pub fn remote_config(&self) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            response_pointer: self.response_pointer.clone(),
            retry: RetryPolicy {
                max_retries: self.max_retries,
                base_delay_ms: self.base_delay_ms,
            },
            max_in_flight: self.max_in_flight,
            timeout_secs: self.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSettings {
    pub tau: f64,
    pub overlap: f64,
    pub floor: f64,
    pub lag: f64,
    pub class: f64,
    pub unmapped_ceiling: f64,
    pub min_support: usize,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        let t = Thresholds::default();
        ThresholdSettings {
            tau: DEFAULT_TAU,
            overlap: t.overlap,
            floor: t.floor,
            lag: t.lag,
            class: t.class,
            unmapped_ceiling: DEFAULT_UNMAPPED_CEILING,
            min_support: t.min_support,
        }
    }
}

impl ThresholdSettings {
    pub fn analytics(&self) -> Thresholds {
        Thresholds {
            overlap: self.overlap,
            floor: self.floor,
            lag: self.lag,
            class: self.class,
            min_support: self.min_support,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub corpus: Option<PathBuf>,
    pub refined: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    /// Question banks, any order; course order comes from `order_index`.
    pub assessments: Vec<PathBuf>,
    pub responses: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub format: Format,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub provider: ProviderSettings,
    pub thresholds: ThresholdSettings,
    pub paths: PathSettings,
    pub report: ReportSettings,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e| CliError::Input(format!("config: {e}")))?;
        let has_key = raw
            .get("provider")
            .and_then(toml::Value::as_table)
            .is_some_and(|p| p.keys().any(|k| k.contains("key") || k.contains("token")));
        if has_key {
            return Err(CliError::Input(format!(
                "config: credentials are not accepted in config files; set {API_KEY_ENV}"
            )));
        }
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    /// Reads `path` and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut config.paths;
        for slot in [
            &mut p.corpus,
            &mut p.refined,
            &mut p.graph,
            &mut p.responses,
            &mut p.out,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, slot);
        }
        for bank in &mut p.assessments {
            resolve(base, bank);
        }
        if let Some(dir) = &mut config.provider.template_dir {
            resolve(base, dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.thresholds;
        if !(t.tau > 0.0 && t.tau <= 1.0) {
            return Err(CliError::Input(format!(
                "thresholds.tau={} outside (0, 1]",
                t.tau
            )));
        }
        if !(0.0..=1.0).contains(&t.unmapped_ceiling) {
            return Err(CliError::Input(format!(
                "thresholds.unmapped_ceiling={} outside [0, 1]",
                t.unmapped_ceiling
            )));
        }
        t.analytics()
            .validate()
            .map_err(|e| CliError::Input(format!("thresholds: {e}")))?;
        if self.provider.batch_size == 0 || self.provider.max_in_flight == 0 {
            return Err(CliError::Input(
                "provider.batch_size and provider.max_in_flight must be positive".into(),
            ));
        }
        Ok(())
    }
}
