//! Shared error type for the scoring library.
//!
//! Every fallible operation in this crate returns [`Result`]. Variants are
//! grouped by the subsystem that raises them; the CLI maps them onto process
//! exit codes (schema/input problems vs. embedding-service outages).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A region is geometrically unusable: inverted or zero-area box,
    /// negative coordinates, or a quad whose hull collapses to a line/point.
    #[error("degenerate region{}: {detail}", fmt_offset(.offset))]
    DegenerateRegion {
        detail: String,
        /// Byte offset into the source text, when the region came from a
        /// parsed report and the position is known.
        offset: Option<usize>,
    },

    /// The report payload is not well-formed JSON or is missing required
    /// structure.
    #[error("report syntax error at byte {offset}: {message}")]
    ReportSyntax { offset: usize, message: String },

    /// The report's verdict text matched no entry in the keyword table.
    #[error("unrecognized verdict text {verdict:?}{}", fmt_offset(.offset))]
    UnknownVerdict {
        verdict: String,
        offset: Option<usize>,
    },

    /// Mean-IoU was requested against an empty ground-truth box list.
    #[error("ground-truth box list is empty; mean IoU is undefined")]
    EmptyGroundTruth,

    /// The embedding backend could not produce vectors (network failure,
    /// HTTP error after retries, or timeout). Never silently mapped to a
    /// zero score.
    #[error("embedding backend unavailable: {message}")]
    EmbeddingUnavailable { message: String },

    /// The remote embedding service answered, but the payload violates the
    /// wire contract (count mismatch, ragged dimensions, non-finite values).
    #[error("embedding protocol violation: {message}")]
    ProtocolViolation { message: String },

    /// Two vectors of different dimensionality were combined.
    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A metric was requested over zero usable samples.
    #[error("empty corpus: {context}")]
    EmptyCorpus { context: String },

    /// Advantage normalization needs at least two completions per group.
    #[error("reward group of size {len} is too small; need at least 2")]
    GroupTooSmall { len: usize },

    /// A flat reward list cannot be partitioned into equal-size groups.
    #[error("cannot split {len} rewards into groups of {group_size}")]
    ShapeMismatch { len: usize, group_size: usize },

    /// A corpus line violates the declared record schema.
    #[error("schema violation at line {line}: {message}")]
    SchemaViolation { line: usize, message: String },

    /// Strict join failed: some sample ids exist on only one side.
    #[error("corpora do not match: {0}", join_mismatch_summary(.missing_ground_truth, .missing_predictions))]
    JoinMismatch {
        /// Prediction ids with no ground-truth record.
        missing_ground_truth: Vec<String>,
        /// Ground-truth ids with no prediction.
        missing_predictions: Vec<String>,
    },

    /// Invalid configuration file or option combination.
    #[error("configuration error: {message}")]
    Config { message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_offset(offset: &Option<usize>) -> String {
    match offset {
        Some(o) => format!(" at byte {o}"),
        None => String::new(),
    }
}

fn join_mismatch_summary(missing_gt: &[String], missing_pred: &[String]) -> String {
    let mut parts = Vec::new();
    if !missing_gt.is_empty() {
        parts.push(format!(
            "{} prediction(s) without ground truth ({})",
            missing_gt.len(),
            preview(missing_gt)
        ));
    }
    if !missing_pred.is_empty() {
        parts.push(format!(
            "{} ground-truth record(s) without predictions ({})",
            missing_pred.len(),
            preview(missing_pred)
        ));
    }
    parts.join("; ")
}

/// First few ids, abbreviated so a large mismatch doesn't flood the terminal.
fn preview(ids: &[String]) -> String {
    const SHOW: usize = 5;
    let mut s = ids.iter().take(SHOW).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOW {
        s.push_str(", ...");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_mismatch_lists_both_sides() {
        let err = Error::JoinMismatch {
            missing_ground_truth: vec!["p1".into()],
            missing_predictions: vec!["g1".into(), "g2".into()],
        };
        let msg = err.to_string();
        assert!(msg.contains("1 prediction(s) without ground truth (p1)"));
        assert!(msg.contains("2 ground-truth record(s) without predictions (g1, g2)"));
    }

    #[test]
    fn mismatch_preview_is_bounded() {
        let ids: Vec<String> = (0..20).map(|i| format!("id{i}")).collect();
        let err = Error::JoinMismatch {
            missing_ground_truth: ids,
            missing_predictions: vec![],
        };
        assert!(err.to_string().contains(", ..."));
    }
}
