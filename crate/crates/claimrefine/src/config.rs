//! Run configuration. A TOML file may set any field; command-line flags
//! override the file.

use std::path::{Path, PathBuf};

use claimrefine_core::dpo::DpoConfig;
use claimrefine_core::extraction::PromptVariant;
use claimrefine_core::policy::GenerationParams;
use claimrefine_core::synthetic::DeskCorpusConfig;
use claimrefine_core::warmstart::WarmStartConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::Schema;
use crate::remote::RemoteSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Model-free tweet frames and first-sentence extraction.
    Template,
    /// `/generate` at `$CLAIMREFINE_GENERATOR_URL`.
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FactCheckerKind {
    /// Deterministic overlap/negation oracle.
    Lexical,
    /// `/nli` at `$CLAIMREFINE_NLI_URL`.
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
    pub max_vocab: usize,
    /// Rank of the per-iteration adapter; 0 trains the base weights directly.
    pub adapter_rank: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { context: 16, embed: 32, hidden: 64, max_vocab: 512, adapter_rank: 8 }
    }
}

/// How the base policy is pretrained before the first iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStart {
    pub train: WarmStartConfig,
    /// Targets per train claim. Each target is the seed claim followed by a
    /// random number of the words that follow it in the tweet.
    pub samples_per_claim: usize,
}

impl Default for WarmStart {
    fn default() -> Self {
        WarmStart { train: WarmStartConfig::default(), samples_per_claim: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Iterations `0..iterations`; each evaluates the current policy and
    /// then trains the next. Iteration 0 evaluates the base policy.
    pub iterations: usize,
    /// Line-delimited dataset; the seeded desk corpus is used when absent.
    pub dataset: Option<PathBuf>,
    pub schema: Schema,
    pub label_map: Option<PathBuf>,
    pub desk: DeskCorpusConfig,
    /// Pre-built tweet store; tweets are synthesized into the run
    /// directory when absent.
    pub tweets: Option<PathBuf>,
    pub generator: GeneratorKind,
    pub fact_checker: FactCheckerKind,
    pub remote: RemoteSettings,
    pub dpo: DpoConfig,
    pub generation: GenerationParams,
    pub policy: PolicyConfig,
    pub warm_start: WarmStart,
    pub variant: PromptVariant,
    pub master_seed: u64,
    pub workers: usize,
    pub run_dir: PathBuf,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            iterations: 10,
            dataset: None,
            schema: Schema::Native,
            label_map: None,
            desk: DeskCorpusConfig::default(),
            tweets: None,
            generator: GeneratorKind::Template,
            fact_checker: FactCheckerKind::Lexical,
            remote: RemoteSettings::default(),
            dpo: DpoConfig::default(),
            generation: GenerationParams::default(),
            policy: PolicyConfig::default(),
            warm_start: WarmStart::default(),
            variant: PromptVariant::Dpo,
            master_seed: 0,
            workers: 1,
            run_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl LoopConfig {
    pub fn from_toml(text: &str) -> Result<LoopConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<LoopConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })?;
        LoopConfig::from_toml(&text).map_err(|message| ConfigError::File { path: path.to_path_buf(), message })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iterations == 0 {
            return Err(ConfigError::Invalid("iterations must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        self.dpo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.generation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let p = &self.policy;
        if p.context == 0 || p.embed == 0 || p.hidden == 0 {
            return Err(ConfigError::Invalid("policy dimensions must be positive".into()));
        }
        if p.max_vocab <= 4 {
            return Err(ConfigError::Invalid("max_vocab must exceed the 4 reserved tokens".into()));
        }
        if self.dpo.adapter_only && p.adapter_rank == 0 {
            return Err(ConfigError::Invalid("adapter_only needs adapter_rank > 0".into()));
        }
        Ok(())
    }

    /// Worker count after applying the remote in-flight cap.
    pub fn effective_workers(&self) -> usize {
        let remote = self.generator == GeneratorKind::Remote || self.fact_checker == FactCheckerKind::Remote;
        if remote {
            self.workers.min(self.remote.max_in_flight.max(1))
        } else {
            self.workers
        }
    }
}
