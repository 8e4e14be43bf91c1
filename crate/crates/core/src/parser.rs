//! Structured-output parsing: tag sectioning, verdict classification, and
//! the report payload codec.
//!
//! Raw model output is expected to look like
//! `<think>...</think><report>{json}</report>`. Sectioning never fails —
//! whatever tags are present are recorded and the rest of the pipeline
//! decides what a missing section costs. Payload parsing is strict: a
//! malformed report is an error here and a zero content score downstream,
//! never a guessed repair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisReport, BoundingBox, Quad, TagPresence, Verdict, normalize_quad};

/// The four structural tags scored by the format reward and used to section
/// raw output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub think_open: String,
    pub think_close: String,
    pub report_open: String,
    pub report_close: String,
}

impl Default for TagSet {
    fn default() -> Self {
        Self {
            think_open: "<think>".into(),
            think_close: "</think>".into(),
            report_open: "<report>".into(),
            report_close: "</report>".into(),
        }
    }
}

impl TagSet {
    pub fn check_invariants(&self) -> Result<()> {
        let tags = [
            &self.think_open,
            &self.think_close,
            &self.report_open,
            &self.report_close,
        ];
        if tags.iter().any(|t| t.is_empty()) {
            return Err(Error::Config {
                message: "structural tags must be non-empty".into(),
            });
        }
        for i in 0..tags.len() {
            for j in 0..tags.len() {
                if i != j && tags[i] == tags[j] {
                    return Err(Error::Config {
                        message: format!("structural tag {:?} is duplicated", tags[i]),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Raw output split into its tagged sections.
///
/// A section text is `Some` only when its open tag is followed by its close
/// tag; the span between the first such pair is taken. Tag presence is
/// independent of pairing — a stray close tag still counts as present.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSections {
    pub think_text: Option<String>,
    pub report_text: Option<String>,
    pub tag_presence: TagPresence,
}

/// Sections a raw output using the default tag set. Total: never fails.
#[must_use]
pub fn extract_sections(raw: &str) -> RawSections {
    extract_sections_with(raw, &TagSet::default())
}

/// Sections a raw output using a custom tag set.
#[must_use]
pub fn extract_sections_with(raw: &str, tags: &TagSet) -> RawSections {
    let tag_presence = TagPresence {
        think_open: raw.contains(&tags.think_open),
        think_close: raw.contains(&tags.think_close),
        report_open: raw.contains(&tags.report_open),
        report_close: raw.contains(&tags.report_close),
    };
    RawSections {
        think_text: first_span(raw, &tags.think_open, &tags.think_close),
        report_text: first_span(raw, &tags.report_open, &tags.report_close),
        tag_presence,
    }
}

/// Span between the first open tag and the first close tag after it.
fn first_span(raw: &str, open: &str, close: &str) -> Option<String> {
    let start = raw.find(open)? + open.len();
    let end = raw[start..].find(close)? + start;
    Some(raw[start..end].to_string())
}

/// All `open..close` spans in order of appearance, for the
/// first-well-formed-block-wins rule.
fn all_spans<'a>(raw: &'a str, open: &str, close: &str) -> Vec<&'a str> {
    let mut spans = Vec::new();
    let mut cursor = 0;
    while let Some(rel_open) = raw[cursor..].find(open) {
        let start = cursor + rel_open + open.len();
        let Some(rel_close) = raw[start..].find(close) else {
            break;
        };
        let end = start + rel_close;
        spans.push(&raw[start..end]);
        cursor = end + close.len();
    }
    spans
}

/// Keyword table mapping free-form verdict wording onto a [`Verdict`].
///
/// Matching is case-insensitive substring search. Authentic phrases are
/// checked first so that wording like "no indication of forgery" lands on
/// the authentic side despite containing a forgery keyword.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictKeywords {
    pub authentic: Vec<String>,
    pub forged: Vec<String>,
}

impl Default for VerdictKeywords {
    fn default() -> Self {
        Self {
            authentic: ["authentic", "genuine", "pristine", "no indication"]
                .map(String::from)
                .to_vec(),
            forged: ["forgery", "forged", "tampered", "manipulated"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Maps verdict wording onto a label via the keyword table.
pub fn classify_verdict_text(text: &str, keywords: &VerdictKeywords) -> Result<Verdict> {
    let lowered = text.to_lowercase();
    if keywords.authentic.iter().any(|k| lowered.contains(&k.to_lowercase())) {
        return Ok(Verdict::Authentic);
    }
    if keywords.forged.iter().any(|k| lowered.contains(&k.to_lowercase())) {
        return Ok(Verdict::Forged);
    }
    Err(Error::UnknownVerdict {
        verdict: text.to_string(),
        offset: None,
    })
}

/// Wire shape of the report payload. Field order here is the canonical
/// serialization order.
#[derive(Serialize)]
struct PayloadOut<'a> {
    verdict: &'a str,
    regions: Vec<[f64; 4]>,
    rationale: &'a str,
}

#[derive(Deserialize)]
struct PayloadIn {
    verdict: String,
    #[serde(default)]
    regions: Vec<Vec<f64>>,
    #[serde(default)]
    rationale: String,
}

/// Parses a report payload into an [`AnalysisReport`].
///
/// Accepts either the bare JSON span or a full `<report>...</report>`
/// block. Region arrays are dispatched by length: 4 values parse as an
/// axis-aligned box, 8 values as a quad that is collapsed to its hull.
/// The returned report has complete tag presence; callers that sectioned a
/// raw output themselves overwrite it with what they saw.
pub fn parse_report(report_text: &str, keywords: &VerdictKeywords) -> Result<AnalysisReport> {
    let tags = TagSet::default();
    let inner = match first_span(report_text, &tags.report_open, &tags.report_close) {
        Some(span) => span,
        None => report_text.to_string(),
    };
    let trimmed = inner.trim();

    let payload: PayloadIn = serde_json::from_str(trimmed).map_err(|e| Error::ReportSyntax {
        offset: line_col_to_offset(trimmed, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let verdict = classify_verdict_text(&payload.verdict, keywords).map_err(|e| match e {
        Error::UnknownVerdict { verdict, .. } => {
            let offset = trimmed.find(&payload.verdict);
            Error::UnknownVerdict { verdict, offset }
        }
        other => other,
    })?;

    let mut regions = Vec::with_capacity(payload.regions.len());
    for (i, coords) in payload.regions.iter().enumerate() {
        let region = match coords.len() {
            4 => BoundingBox::new(coords[0], coords[1], coords[2], coords[3]),
            8 => {
                let mut arr = [0.0; 8];
                arr.copy_from_slice(coords);
                normalize_quad(&Quad::new(arr))
            }
            n => Err(Error::ReportSyntax {
                offset: 0,
                message: format!("regions[{i}] has {n} values; expected 4 (box) or 8 (quad)"),
            }),
        };
        regions.push(region.map_err(|e| annotate_region_error(e, i))?);
    }

    Ok(AnalysisReport {
        verdict,
        verdict_text: payload.verdict,
        regions,
        rationale: payload.rationale,
        tag_presence: TagPresence::complete(),
    })
}

fn annotate_region_error(e: Error, index: usize) -> Error {
    match e {
        Error::DegenerateRegion { detail, offset } => Error::DegenerateRegion {
            detail: format!("regions[{index}]: {detail}"),
            offset,
        },
        other => other,
    }
}

/// Renders a report back to canonical raw-output form:
/// `<think></think><report>{json}</report>` with a fixed key order.
///
/// Round-trips: `parse_report(&serialize_report(&r))` reproduces `r` for
/// any report whose tag presence is complete, and the serialized text
/// always scores a full format reward.
#[must_use]
pub fn serialize_report(report: &AnalysisReport) -> String {
    serialize_report_with_think(report, "")
}

/// Like [`serialize_report`] but with reasoning text inside the think
/// section.
#[must_use]
pub fn serialize_report_with_think(report: &AnalysisReport, think_text: &str) -> String {
    let payload = PayloadOut {
        verdict: &report.verdict_text,
        regions: report.regions.iter().map(|b| <[f64; 4]>::from(*b)).collect(),
        rationale: &report.rationale,
    };
    let json = serde_json::to_string(&payload).expect("payload serialization cannot fail");
    format!("<think>{think_text}</think><report>{json}</report>")
}

/// A raw model output taken apart: sections, the parsed report if any, and
/// what went wrong when there is none.
#[derive(Debug)]
pub struct ParsedPrediction {
    pub sections: RawSections,
    pub report: Option<AnalysisReport>,
    /// Why `report` is `None` (or why earlier blocks were skipped).
    pub report_error: Option<Error>,
    /// Non-fatal oddities, e.g. extra report blocks.
    pub warnings: Vec<String>,
}

/// Full front-end for one raw output: sections it, then parses the first
/// well-formed report block.
///
/// When several report blocks are present, the first one that parses wins
/// and a warning records the skipped ones. The parsed report's tag
/// presence reflects the raw output, not the block.
#[must_use]
pub fn parse_prediction(raw: &str, keywords: &VerdictKeywords, tags: &TagSet) -> ParsedPrediction {
    let sections = extract_sections_with(raw, tags);
    let mut warnings = Vec::new();
    let spans = all_spans(raw, &tags.report_open, &tags.report_close);
    if spans.len() > 1 {
        warnings.push(format!(
            "{} report blocks found; using the first well-formed one",
            spans.len()
        ));
    }

    let mut report = None;
    let mut report_error = None;
    for (i, span) in spans.iter().enumerate() {
        match parse_report(span, keywords) {
            Ok(mut r) => {
                if i > 0 {
                    warnings.push(format!("skipped {i} malformed report block(s)"));
                }
                r.tag_presence = sections.tag_presence;
                report = Some(r);
                break;
            }
            Err(e) => {
                if report_error.is_none() {
                    report_error = Err::<(), _>(e).err();
                }
            }
        }
    }
    if report.is_none() && report_error.is_none() {
        report_error = Some(Error::ReportSyntax {
            offset: 0,
            message: "no report block found".into(),
        });
    }
    if report.is_some() {
        report_error = None;
    }

    ParsedPrediction {
        sections,
        report,
        report_error,
        warnings,
    }
}

/// Best-effort byte offset for a 1-based line/column position.
fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    if line <= 1 {
        return column.saturating_sub(1).min(text.len());
    }
    let mut remaining = line - 1;
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            remaining -= 1;
            if remaining == 0 {
                return (i + column).min(text.len());
            }
        }
    }
    text.len()
}
