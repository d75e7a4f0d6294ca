//! Engine configuration: a flat `key = value` file overridable by CLI
//! flags, with documented defaults and range checks.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::token::TokenizerMode;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub mode: TokenizerMode,
    pub positive_windows: Vec<usize>,
    pub negative_windows: Vec<usize>,
    pub theta: f64,
    pub decompose_literals: bool,
    pub max_find_ngram: usize,
    pub seed: u64,
    pub pretrain_lr: f64,
    pub finetune_lr: f64,
    pub epoch_cap: usize,
    pub embedding_dim: usize,
    pub shared_scorer: bool,
    pub reward_per_label: bool,
    pub rules_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: TokenizerMode::Whitespace,
            positive_windows: vec![1, 2, 3],
            negative_windows: vec![1, 2],
            theta: 0.6,
            decompose_literals: true,
            max_find_ngram: 3,
            seed: 0,
            pretrain_lr: 0.01,
            finetune_lr: 0.001,
            epoch_cap: 20,
            embedding_dim: 300,
            shared_scorer: false,
            reward_per_label: false,
            rules_path: None,
            corpus_path: None,
            embeddings_path: None,
            checkpoint_path: None,
            lexicon_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`")]
    BadLine { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("`{key}` out of range: {detail}")]
    OutOfRange { key: String, detail: String },
}

impl EngineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let mut cfg = EngineConfig::default();
        cfg.merge_file(path)?;
        Ok(cfg)
    }

    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let content = fs::read_to_string(path)?;
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::BadLine { line: idx + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply one `key = value` assignment; shared by the file parser and
    /// flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "mode" => self.mode = value.parse().map_err(|_| bad())?,
            "positive_windows" => self.positive_windows = parse_list(value).ok_or_else(bad)?,
            "negative_windows" => self.negative_windows = parse_list(value).ok_or_else(bad)?,
            "theta" => self.theta = value.parse().map_err(|_| bad())?,
            "decompose_literals" => self.decompose_literals = value.parse().map_err(|_| bad())?,
            "max_find_ngram" => self.max_find_ngram = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "pretrain_lr" => self.pretrain_lr = value.parse().map_err(|_| bad())?,
            "finetune_lr" => self.finetune_lr = value.parse().map_err(|_| bad())?,
            "epoch_cap" => self.epoch_cap = value.parse().map_err(|_| bad())?,
            "embedding_dim" => self.embedding_dim = value.parse().map_err(|_| bad())?,
            "shared_scorer" => self.shared_scorer = value.parse().map_err(|_| bad())?,
            "reward_per_label" => self.reward_per_label = value.parse().map_err(|_| bad())?,
            "rules_path" => self.rules_path = Some(PathBuf::from(value)),
            "corpus_path" => self.corpus_path = Some(PathBuf::from(value)),
            "embeddings_path" => self.embeddings_path = Some(PathBuf::from(value)),
            "checkpoint_path" => self.checkpoint_path = Some(PathBuf::from(value)),
            "lexicon_path" => self.lexicon_path = Some(PathBuf::from(value)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |key: &str, detail: String| ConfigError::OutOfRange {
            key: key.to_string(),
            detail,
        };
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(range("theta", format!("{} not in (0, 1)", self.theta)));
        }
        if self.positive_windows.is_empty() || self.negative_windows.is_empty() {
            return Err(range("windows", "window list is empty".into()));
        }
        if self.positive_windows.iter().chain(&self.negative_windows).any(|&w| w == 0) {
            return Err(range("windows", "window size 0".into()));
        }
        if self.max_find_ngram == 0 {
            return Err(range("max_find_ngram", "must be >= 1".into()));
        }
        if self.pretrain_lr <= 0.0 || self.finetune_lr <= 0.0 {
            return Err(range("lr", "learning rates must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(range("embedding_dim", "must be >= 1".into()));
        }
        Ok(())
    }
}

fn parse_list(value: &str) -> Option<Vec<usize>> {
    let items: Result<Vec<usize>, _> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect();
    items.ok().filter(|v| !v.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_are_valid() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.positive_windows, vec![1, 2, 3]);
        assert_eq!(cfg.negative_windows, vec![1, 2]);
        assert_eq!(cfg.theta, 0.6);
        assert!(cfg.decompose_literals);
        assert_eq!(cfg.epoch_cap, 20);
        assert_eq!(cfg.embedding_dim, 300);
        assert_eq!(cfg.pretrain_lr, 0.01);
        assert_eq!(cfg.finetune_lr, 0.001);
    }

    #[test]
    fn parses_key_value_file_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment\nmode = char\ntheta = 0.7\npositive_windows = 1,2").unwrap();
        let cfg = EngineConfig::from_file(&path).unwrap();
        assert_eq!(cfg.mode, TokenizerMode::Char);
        assert_eq!(cfg.theta, 0.7);
        assert_eq!(cfg.positive_windows, vec![1, 2]);
        // untouched keys keep defaults
        assert_eq!(cfg.negative_windows, vec![1, 2]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = EngineConfig::default();
        assert!(matches!(
            cfg.set("nope", "1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            cfg.set("theta", "hot"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn range_checks_fire() {
        let cfg = EngineConfig {
            theta: 1.5,
            ..EngineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::OutOfRange { .. })));
        let cfg = EngineConfig {
            positive_windows: vec![],
            ..EngineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::OutOfRange { .. })));
    }
}
