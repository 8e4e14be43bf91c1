//! Corpus file formats: JSONL loaders, joins, and score logs.
//!
//! Ground truth and predictions arrive as JSON Lines, one record per line.
//! Loaders attach 1-based line numbers to every schema complaint, skip
//! blank lines with a warning, and reject duplicate sample ids. Every
//! record format carries a `schema_version` field that defaults to 1;
//! newer versions are rejected rather than half-read.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GroundTruthRecord;
use crate::reward::RewardBreakdown;

/// Newest record format this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn check_schema_version(version: u32, line: usize) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaViolation {
            line,
            message: format!(
                "unsupported schema_version {version}; this build reads version {SCHEMA_VERSION}"
            ),
        });
    }
    Ok(())
}

/// One raw model generation keyed by sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub sample_id: String,
    /// The generation exactly as produced, tags and all.
    pub raw_output: String,
}

/// Records plus any non-fatal observations made while loading them.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

/// Shared JSONL walk: blank-line warnings, per-line parse with line
/// numbers, and an emptiness check at the end.
fn read_jsonl<T>(
    path: &Path,
    what: &str,
    mut parse_line: impl FnMut(&str, usize) -> Result<T>,
) -> Result<Loaded<T>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            warnings.push(format!("{}: line {line_no}: blank line skipped", path.display()));
            continue;
        }
        records.push(parse_line(&line, line_no)?);
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus {
            context: format!("{what} file {} has no records", path.display()),
        });
    }
    Ok(Loaded { records, warnings })
}

fn jsonl_parse_error(err: &serde_json::Error, line: usize) -> Error {
    Error::SchemaViolation {
        line,
        message: err.to_string(),
    }
}

/// Loads a ground-truth corpus, checking record invariants and id
/// uniqueness along the way.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Loaded<GroundTruthRecord>> {
    #[derive(Deserialize)]
    struct Line {
        #[serde(default = "default_schema_version")]
        schema_version: u32,
        #[serde(flatten)]
        record: GroundTruthRecord,
    }

    let mut seen: HashSet<String> = HashSet::new();
    read_jsonl(path.as_ref(), "ground truth", |text, line_no| {
        let parsed: Line =
            serde_json::from_str(text).map_err(|e| jsonl_parse_error(&e, line_no))?;
        check_schema_version(parsed.schema_version, line_no)?;
        parsed.record.check_invariants().map_err(|e| match e {
            Error::SchemaViolation { message, .. } => Error::SchemaViolation {
                line: line_no,
                message,
            },
            other => other,
        })?;
        if !seen.insert(parsed.record.sample_id.clone()) {
            return Err(Error::SchemaViolation {
                line: line_no,
                message: format!("duplicate sample_id \"{}\"", parsed.record.sample_id),
            });
        }
        Ok(parsed.record)
    })
}

/// Loads a prediction corpus. `raw_output` is kept byte-exact.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Loaded<PredictionRecord>> {
    let mut seen: HashSet<String> = HashSet::new();
    read_jsonl(path.as_ref(), "prediction", |text, line_no| {
        let parsed: PredictionRecord =
            serde_json::from_str(text).map_err(|e| jsonl_parse_error(&e, line_no))?;
        check_schema_version(parsed.schema_version, line_no)?;
        if parsed.sample_id.is_empty() {
            return Err(Error::SchemaViolation {
                line: line_no,
                message: "sample_id must be non-empty".into(),
            });
        }
        if !seen.insert(parsed.sample_id.clone()) {
            return Err(Error::SchemaViolation {
                line: line_no,
                message: format!("duplicate sample_id \"{}\"", parsed.sample_id),
            });
        }
        Ok(parsed)
    })
}

/// A prediction paired with its reference record.
pub type JoinedPair<'a> = (&'a PredictionRecord, &'a GroundTruthRecord);

/// Pairs predictions with their ground truth by sample id, in prediction
/// file order.
///
/// Strict mode (`allow_partial = false`) errors when either side has ids
/// the other lacks. Partial mode keeps the intersection and reports what
/// was dropped as warnings. An empty intersection is an error either way.
pub fn join_corpora<'a>(
    predictions: &'a [PredictionRecord],
    ground_truth: &'a [GroundTruthRecord],
    allow_partial: bool,
) -> Result<(Vec<JoinedPair<'a>>, Vec<String>)> {
    let gt_by_id: HashMap<&str, &GroundTruthRecord> = ground_truth
        .iter()
        .map(|g| (g.sample_id.as_str(), g))
        .collect();
    let pred_ids: HashSet<&str> = predictions.iter().map(|p| p.sample_id.as_str()).collect();

    let missing_ground_truth: Vec<String> = predictions
        .iter()
        .filter(|p| !gt_by_id.contains_key(p.sample_id.as_str()))
        .map(|p| p.sample_id.clone())
        .collect();
    let missing_predictions: Vec<String> = ground_truth
        .iter()
        .filter(|g| !pred_ids.contains(g.sample_id.as_str()))
        .map(|g| g.sample_id.clone())
        .collect();

    if !allow_partial && (!missing_ground_truth.is_empty() || !missing_predictions.is_empty()) {
        return Err(Error::JoinMismatch {
            missing_ground_truth,
            missing_predictions,
        });
    }

    let mut warnings = Vec::new();
    if !missing_ground_truth.is_empty() {
        warnings.push(format!(
            "skipping {} prediction(s) without ground truth",
            missing_ground_truth.len()
        ));
    }
    if !missing_predictions.is_empty() {
        warnings.push(format!(
            "{} ground-truth record(s) have no prediction",
            missing_predictions.len()
        ));
    }

    let joined: Vec<JoinedPair<'a>> = predictions
        .iter()
        .filter_map(|p| gt_by_id.get(p.sample_id.as_str()).map(|g| (p, *g)))
        .collect();
    if joined.is_empty() {
        return Err(Error::EmptyCorpus {
            context: "no sample ids shared between predictions and ground truth".into(),
        });
    }
    Ok((joined, warnings))
}

/// One scored sample as written to a reward log.
///
/// Unlike corpus records, a reward log may repeat a sample id: grouped
/// rollouts score several generations per prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLogRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub sample_id: String,
    /// Rollout group this sample belongs to, when scoring grouped output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    /// Hash of the scoring configuration that produced the record.
    pub config_hash: String,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
}

/// Writes a reward log as JSONL, one record per line, in input order.
pub fn write_reward_log(path: impl AsRef<Path>, records: &[RewardLogRecord]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record).map_err(|e| Error::SchemaViolation {
            line: 0,
            message: format!("failed to serialize reward record: {e}"),
        })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a reward log back. Duplicate sample ids are allowed here.
pub fn read_reward_log(path: impl AsRef<Path>) -> Result<Loaded<RewardLogRecord>> {
    read_jsonl(path.as_ref(), "reward log", |text, line_no| {
        let parsed: RewardLogRecord =
            serde_json::from_str(text).map_err(|e| jsonl_parse_error(&e, line_no))?;
        check_schema_version(parsed.schema_version, line_no)?;
        Ok(parsed)
    })
}

/// Rewards for advantage normalization, in either accepted shape.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardsInput {
    /// A bare JSON array of reward values.
    Array(Vec<f64>),
    /// A reward log produced by scoring; rewards are the `r_total` column.
    Log(Vec<RewardLogRecord>),
}

impl RewardsInput {
    /// The flat reward values in input order.
    #[must_use]
    pub fn rewards(&self) -> Vec<f64> {
        match self {
            RewardsInput::Array(values) => values.clone(),
            RewardsInput::Log(records) => {
                records.iter().map(|r| r.breakdown.r_total).collect()
            }
        }
    }
}

/// Reads rewards from `path`, sniffing the format: a file whose first
/// non-whitespace byte is `[` is a bare JSON array, anything else is
/// treated as a reward log in JSONL form.
pub fn read_rewards_input(path: impl AsRef<Path>) -> Result<RewardsInput> {
    let path = path.as_ref();
    let mut contents = String::new();
    File::open(path)?.read_to_string(&mut contents)?;
    if contents.trim_start().starts_with('[') {
        let values: Vec<f64> =
            serde_json::from_str(&contents).map_err(|e| Error::SchemaViolation {
                line: e.line(),
                message: format!("expected a JSON array of numbers: {e}"),
            })?;
        if values.is_empty() {
            return Err(Error::EmptyCorpus {
                context: format!("reward array {} is empty", path.display()),
            });
        }
        Ok(RewardsInput::Array(values))
    } else {
        Ok(RewardsInput::Log(read_reward_log(path)?.records))
    }
}

/// Writes advantages as a bare JSON array, mirroring the array input
/// format so outputs can be piped back in.
pub fn write_advantages(path: impl AsRef<Path>, advantages: &[f64]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, advantages).map_err(|e| Error::SchemaViolation {
        line: 0,
        message: format!("failed to serialize advantages: {e}"),
    })?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Loads a sidecar of externally computed explanation F1 scores:
/// JSONL lines of `{"sample_id": ..., "bertscore_f1": ...}`.
pub fn load_bertscore_sidecar(path: impl AsRef<Path>) -> Result<Loaded<(String, f64)>> {
    #[derive(Deserialize)]
    struct Line {
        #[serde(default = "default_schema_version")]
        schema_version: u32,
        sample_id: String,
        bertscore_f1: f64,
    }

    let mut seen: HashSet<String> = HashSet::new();
    read_jsonl(path.as_ref(), "explanation score", |text, line_no| {
        let parsed: Line =
            serde_json::from_str(text).map_err(|e| jsonl_parse_error(&e, line_no))?;
        check_schema_version(parsed.schema_version, line_no)?;
        if !(0.0..=1.0).contains(&parsed.bertscore_f1) {
            return Err(Error::SchemaViolation {
                line: line_no,
                message: format!(
                    "bertscore_f1 {} outside [0, 1]",
                    parsed.bertscore_f1
                ),
            });
        }
        if !seen.insert(parsed.sample_id.clone()) {
            return Err(Error::SchemaViolation {
                line: line_no,
                message: format!("duplicate sample_id \"{}\"", parsed.sample_id),
            });
        }
        Ok((parsed.sample_id, parsed.bertscore_f1))
    })
}
