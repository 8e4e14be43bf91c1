//! Runtime settings: defaults, config-file parsing, environment
//! overrides, and the content hash stamped onto score outputs.
//!
//! The config file is deliberately flat — `section.key = value` lines,
//! `#` comments — so experiment configs diff cleanly. Every key has a
//! default; an unknown key is an error rather than a silent no-op.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{Embedder, FallbackEmbedder, RemoteEmbedder, RemoteOptions};
use crate::error::{Error, Result};
use crate::parser::VerdictKeywords;
use crate::reward::RewardConfig;

/// Environment variable that forces remote embedding when set.
pub const EMBEDDER_URL_VAR: &str = "EMBEDDER_URL";

/// Which embedding backend to score explanations with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderMode {
    /// Deterministic in-process hashed bag-of-words embedding.
    Fallback,
    /// HTTP embedding service.
    Remote,
}

/// Embedding backend settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderSettings {
    pub mode: EmbedderMode,
    /// Service endpoint; required when `mode = remote`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// Dimension of the fallback embedding space.
    pub dim: usize,
    pub timeout_secs: u64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        Self {
            mode: EmbedderMode::Fallback,
            url: None,
            dim: crate::embed::DEFAULT_DIM,
            timeout_secs: 30,
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

/// Reasoning-trace validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CctSettings {
    /// Inclusive score threshold for keeping cues when filtering.
    pub cue_score_threshold: f64,
}

impl Default for CctSettings {
    fn default() -> Self {
        Self {
            cue_score_threshold: 0.5,
        }
    }
}

/// Everything configurable, with working defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub reward: RewardConfig,
    pub embedder: EmbedderSettings,
    pub cct: CctSettings,
    pub keywords: VerdictKeywords,
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        message: format!("line {line}: {}", message.into()),
    }
}

fn parse_f64(value: &str, line: usize, key: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| config_err(line, format!("{key}: expected a number, got \"{value}\"")))
}

fn parse_usize(value: &str, line: usize, key: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| config_err(line, format!("{key}: expected an integer, got \"{value}\"")))
}

fn parse_u64(value: &str, line: usize, key: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| config_err(line, format!("{key}: expected an integer, got \"{value}\"")))
}

fn parse_bool(value: &str, line: usize, key: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(
            line,
            format!("{key}: expected true or false, got \"{value}\""),
        )),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl Settings {
    /// Parses a flat `key = value` config file on top of the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_str_contents(&text)
    }

    /// Parses config text. Later lines override earlier ones.
    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut settings = Settings::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(
                    line_no,
                    format!("expected key = value, got \"{line}\""),
                ));
            };
            settings.apply(key.trim(), value.trim(), line_no)?;
        }
        settings.check_invariants()?;
        Ok(settings)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "reward.lambda_format" => self.reward.lambda_format = parse_f64(value, line, key)?,
            "reward.lambda_grounding" => {
                self.reward.lambda_grounding = parse_f64(value, line, key)?;
            }
            "reward.lambda_explanation" => {
                self.reward.lambda_explanation = parse_f64(value, line, key)?;
            }
            "reward.w_cls" => self.reward.w_cls = parse_f64(value, line, key)?,
            "reward.w_num" => self.reward.w_num = parse_f64(value, line, key)?,
            "reward.w_iou" => self.reward.w_iou = parse_f64(value, line, key)?,
            "reward.normalize_grounding" => {
                self.reward.normalize_grounding = parse_bool(value, line, key)?;
            }
            "reward.iou_tier_hi" => self.reward.iou_tier_hi = parse_f64(value, line, key)?,
            "reward.iou_tier_lo" => self.reward.iou_tier_lo = parse_f64(value, line, key)?,
            "reward.iou_reward_hi" => self.reward.iou_reward_hi = parse_f64(value, line, key)?,
            "reward.iou_reward_mid" => self.reward.iou_reward_mid = parse_f64(value, line, key)?,
            "reward.num_reward" => self.reward.num_reward = parse_f64(value, line, key)?,
            "reward.tags.think_open" => self.reward.tags.think_open = value.to_string(),
            "reward.tags.think_close" => self.reward.tags.think_close = value.to_string(),
            "reward.tags.report_open" => self.reward.tags.report_open = value.to_string(),
            "reward.tags.report_close" => self.reward.tags.report_close = value.to_string(),
            "keywords.authentic" => self.keywords.authentic = parse_list(value),
            "keywords.forged" => self.keywords.forged = parse_list(value),
            "embedder.mode" => {
                self.embedder.mode = match value {
                    "fallback" => EmbedderMode::Fallback,
                    "remote" => EmbedderMode::Remote,
                    _ => {
                        return Err(config_err(
                            line,
                            format!("embedder.mode: expected fallback or remote, got \"{value}\""),
                        ));
                    }
                };
            }
            "embedder.url" => self.embedder.url = Some(value.to_string()),
            "embedder.dim" => self.embedder.dim = parse_usize(value, line, key)?,
            "embedder.timeout_secs" => {
                self.embedder.timeout_secs = parse_u64(value, line, key)?;
            }
            "embedder.batch_size" => self.embedder.batch_size = parse_usize(value, line, key)?,
            "embedder.max_in_flight" => {
                self.embedder.max_in_flight = parse_usize(value, line, key)?;
            }
            "cct.cue_score_threshold" => {
                self.cct.cue_score_threshold = parse_f64(value, line, key)?;
            }
            _ => {
                return Err(config_err(line, format!("unknown key \"{key}\"")));
            }
        }
        Ok(())
    }

    /// Applies environment overrides; `lookup` abstracts `std::env::var`
    /// so tests can inject values. Setting the embedder URL variable
    /// switches the mode to remote.
    pub fn apply_env_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup(EMBEDDER_URL_VAR) {
            if !url.is_empty() {
                self.embedder.url = Some(url);
                self.embedder.mode = EmbedderMode::Remote;
            }
        }
    }

    /// Applies overrides from the real process environment.
    pub fn apply_process_env(&mut self) {
        self.apply_env_overrides(|key| std::env::var(key).ok());
    }

    /// Validates cross-field constraints after all overrides are in.
    pub fn check_invariants(&self) -> Result<()> {
        self.reward.check_invariants()?;
        if !(0.0..=1.0).contains(&self.cct.cue_score_threshold) {
            return Err(Error::Config {
                message: format!(
                    "cct.cue_score_threshold must be within [0, 1], got {}",
                    self.cct.cue_score_threshold
                ),
            });
        }
        if self.embedder.dim == 0 {
            return Err(Error::Config {
                message: "embedder.dim must be positive".into(),
            });
        }
        if self.embedder.batch_size == 0 || self.embedder.max_in_flight == 0 {
            return Err(Error::Config {
                message: "embedder.batch_size and embedder.max_in_flight must be positive".into(),
            });
        }
        if self.embedder.mode == EmbedderMode::Remote && self.embedder.url.is_none() {
            return Err(Error::Config {
                message: "embedder.mode = remote requires embedder.url (or the environment URL)"
                    .into(),
            });
        }
        if self.keywords.authentic.is_empty() || self.keywords.forged.is_empty() {
            return Err(Error::Config {
                message: "verdict keyword lists must be non-empty".into(),
            });
        }
        Ok(())
    }

    /// Constructs the embedding backend these settings describe.
    pub fn build_embedder(&self) -> Result<Box<dyn Embedder>> {
        match self.embedder.mode {
            EmbedderMode::Fallback => Ok(Box::new(FallbackEmbedder {
                dim: self.embedder.dim,
            })),
            EmbedderMode::Remote => {
                let url = self.embedder.url.clone().ok_or_else(|| Error::Config {
                    message: "remote embedder requires a url".into(),
                })?;
                let options = RemoteOptions {
                    timeout: std::time::Duration::from_secs(self.embedder.timeout_secs),
                    batch_size: self.embedder.batch_size,
                    max_in_flight: self.embedder.max_in_flight,
                };
                Ok(Box::new(RemoteEmbedder::new(url, options)?))
            }
        }
    }

    /// Short stable hash of the full effective configuration, stamped
    /// onto score outputs so mixed-config results are detectable.
    #[must_use]
    pub fn content_hash(&self) -> String {
        // Canonicalize through an ordered map so the hash tracks values,
        // not serialization order.
        let value = serde_json::to_value(self).expect("settings serialize");
        let canonical = canonicalize(&value);
        let bytes = serde_json::to_vec(&canonical).expect("canonical settings serialize");
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}

/// Rebuilds a JSON value with every object's keys sorted.
fn canonicalize(value: &serde_json::Value) -> serde_json::Value {
    match value {
        serde_json::Value::Object(map) => {
            let sorted: BTreeMap<String, serde_json::Value> = map
                .iter()
                .map(|(k, v)| (k.clone(), canonicalize(v)))
                .collect();
            serde_json::Value::Object(sorted.into_iter().collect())
        }
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.iter().map(canonicalize).collect())
        }
        other => other.clone(),
    }
}
