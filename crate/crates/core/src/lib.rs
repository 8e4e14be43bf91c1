//! Scoring and evaluation for structured image-forensics reports.
//!
//! A model under training or evaluation emits, for each document image, a
//! reasoning trace inside `<think>` tags followed by a JSON report inside
//! `<report>` tags: a verdict (authentic or forged), zero or more forged
//! regions, and a natural-language rationale. This crate turns those raw
//! outputs into numbers and diagnostics:
//!
//! - [`parser`] takes raw text apart and parses the report payload.
//! - [`reward`] scores one output against its reference with a weighted
//!   mix of format, grounding, and explanation terms — the training
//!   reward.
//! - [`cct`] parses and validates the six-stage reasoning trace inside
//!   the think section.
//! - [`embed`] provides the text embeddings behind explanation scoring:
//!   a deterministic local backend and an HTTP client.
//! - [`metrics`] aggregates a corpus into benchmark numbers: detection
//!   accuracy/F1, pixel localization mIoU/mF1, explanation CSS, and a
//!   composite macro-F1.
//! - [`grpo`] normalizes grouped rollout rewards into advantages.
//! - [`corpus`] reads and writes the JSONL corpus and log formats.
//! - [`config`] holds runtime settings and their file format.
//! - [`fixtures`] builds golden examples and seeded synthetic corpora.
//!
//! The scoring pipeline end to end:
//!
//! ```
//! use forgeval::config::Settings;
//! use forgeval::fixtures::{golden_forged_record, perfect_raw_output};
//! use forgeval::reward::total_reward;
//!
//! let settings = Settings::default();
//! let embedder = settings.build_embedder().unwrap();
//! let record = golden_forged_record();
//! let raw = perfect_raw_output(&record);
//! let breakdown = total_reward(
//!     &raw,
//!     &record,
//!     &settings.reward,
//!     &settings.keywords,
//!     embedder.as_ref(),
//! )
//! .unwrap();
//! assert!((breakdown.r_total - 1.0).abs() < 1e-12);
//! ```

pub mod cct;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod fixtures;
pub mod grpo;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod reward;

pub use error::{Error, Result};
pub use model::{AnalysisReport, BoundingBox, GroundTruthRecord, Verdict};
