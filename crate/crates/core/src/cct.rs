//! Reasoning-trace model, parser, and structural validator.
//!
//! A well-formed `<think>` section walks six stages in a fixed order:
//!
//! ```text
//! Stage 1: Knowledge Preparation
//! Stage 2: Visual Cues Extraction
//! Stage 3: Logical Cues Extraction
//! Stage 4: Cross-Cues Validation & Filtering
//! Stage 5: Spatial Grounding
//! Stage 6: Report Synthesis
//! ```
//!
//! Stage headers match case-insensitively on both the number and the stage
//! name. Inside a stage, item lines carry machine-readable material:
//!
//! ```text
//! - ocr "TOTAL 128.00": [40, 210, 180, 232]
//! - cue v1 (visual/local, score=0.92): halo artifacts around the amount
//! - validated v1
//! - region v1: [40, 210, 180, 232]
//! ```
//!
//! Parsing is lenient and total: anything that does not parse as an item
//! stays in the stage body as free text and is never dropped. Structural
//! problems (missing stages, dangling references, verdict/region
//! contradictions) are the validator's output, not parse failures.

use serde::{Deserialize, Serialize};

use crate::model::{AnalysisReport, BoundingBox, Quad, Verdict, normalize_quad};

/// Minimum IoU for a report region to count as matching a grounded region.
pub const REGION_MATCH_IOU: f64 = 0.5;

/// The six reasoning stages, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    KnowledgePreparation,
    VisualCues,
    LogicalCues,
    CrossValidation,
    Grounding,
    ReportSynthesis,
}

impl StageKind {
    pub const ALL: [StageKind; 6] = [
        StageKind::KnowledgePreparation,
        StageKind::VisualCues,
        StageKind::LogicalCues,
        StageKind::CrossValidation,
        StageKind::Grounding,
        StageKind::ReportSynthesis,
    ];

    /// 1-based position in the canonical order.
    #[must_use]
    pub fn number(&self) -> usize {
        match self {
            StageKind::KnowledgePreparation => 1,
            StageKind::VisualCues => 2,
            StageKind::LogicalCues => 3,
            StageKind::CrossValidation => 4,
            StageKind::Grounding => 5,
            StageKind::ReportSynthesis => 6,
        }
    }

    /// Stage name as written in the canonical header.
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            StageKind::KnowledgePreparation => "Knowledge Preparation",
            StageKind::VisualCues => "Visual Cues Extraction",
            StageKind::LogicalCues => "Logical Cues Extraction",
            StageKind::CrossValidation => "Cross-Cues Validation & Filtering",
            StageKind::Grounding => "Spatial Grounding",
            StageKind::ReportSynthesis => "Report Synthesis",
        }
    }

    /// Canonical header line, e.g. `"Stage 5: Spatial Grounding"`.
    #[must_use]
    pub fn header(&self) -> String {
        format!("Stage {}: {}", self.number(), self.name())
    }
}

/// Where a cue was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueModality {
    Visual,
    Logical,
}

/// Finer cue category; which subtypes are legal depends on the modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueSubtype {
    Global,
    Local,
    Internal,
    Scenario,
}

/// True for the four legal modality/subtype pairings: visual cues are
/// global or local, logical cues are internal or scenario.
#[must_use]
pub fn cue_kind_is_valid(modality: CueModality, subtype: CueSubtype) -> bool {
    matches!(
        (modality, subtype),
        (CueModality::Visual, CueSubtype::Global)
            | (CueModality::Visual, CueSubtype::Local)
            | (CueModality::Logical, CueSubtype::Internal)
            | (CueModality::Logical, CueSubtype::Scenario)
    )
}

/// One extracted forensic cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueRecord {
    pub id: String,
    pub modality: CueModality,
    pub subtype: CueSubtype,
    pub description: String,
    /// Confidence in `[0, 1]`.
    pub score: f64,
    /// Set when the cross-validation stage kept the cue.
    pub validated: bool,
}

/// A spatial anchor tying a high-value cue to an image region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedRegion {
    pub cue_id: String,
    pub region: BoundingBox,
}

/// A recognized text line with its location, from the knowledge stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrLine {
    pub text: String,
    pub region: BoundingBox,
}

/// One stage section: its kind plus the verbatim section text (item lines
/// included, so nothing is lost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub kind: StageKind,
    pub body: String,
}

/// A parsed reasoning trace.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CctTrace {
    /// Stages in order of appearance (not necessarily canonical order).
    pub stages: Vec<StageRecord>,
    pub cues: Vec<CueRecord>,
    /// Cue ids kept by the cross-validation stage, in listing order.
    pub high_value_cues: Vec<String>,
    pub grounded_regions: Vec<GroundedRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_lines: Option<Vec<OcrLine>>,
    /// Text preceding the first stage header, retained verbatim.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub preamble: String,
}

/// Parses the text of a `<think>` section into a trace. Total and lenient:
/// never fails, and malformed item lines simply stay as free text.
#[must_use]
pub fn parse_trace(think_text: &str) -> CctTrace {
    let mut trace = CctTrace::default();
    let mut current: Option<usize> = None;
    let mut preamble = String::new();

    for line in think_text.lines() {
        if let Some(kind) = match_stage_header(line) {
            let already_seen = trace.stages.iter().any(|s| s.kind == kind);
            if !already_seen {
                trace.stages.push(StageRecord {
                    kind,
                    body: String::new(),
                });
                current = Some(trace.stages.len() - 1);
                continue;
            }
            // A repeated header is kept as plain text in the current stage.
        }
        match current {
            Some(idx) => {
                let stage_kind = trace.stages[idx].kind;
                let body = &mut trace.stages[idx].body;
                if !body.is_empty() {
                    body.push('\n');
                }
                body.push_str(line);
                parse_item_line(line, stage_kind, &mut trace);
            }
            None => {
                if !preamble.is_empty() {
                    preamble.push('\n');
                }
                preamble.push_str(line);
            }
        }
    }
    trace.preamble = preamble;
    trace
}

/// Recognizes a canonical stage header; case-insensitive on the name, and
/// the stage number must agree with the name.
fn match_stage_header(line: &str) -> Option<StageKind> {
    let lowered = line.trim().to_lowercase();
    let rest = lowered.strip_prefix("stage")?.trim_start();
    let (digits, after) = rest.split_once(':')?;
    let number: usize = digits.trim().parse().ok()?;
    let name = after.trim();
    let kind = *StageKind::ALL.get(number.checked_sub(1)?)?;
    (name == kind.name().to_lowercase()).then_some(kind)
}

/// Tries to parse one `- ...` item line in the context of a stage; silently
/// declines on anything malformed.
fn parse_item_line(line: &str, _stage: StageKind, trace: &mut CctTrace) {
    let Some(item) = line.trim().strip_prefix("- ") else {
        return;
    };
    let item = item.trim();
    if let Some(rest) = item.strip_prefix("cue ") {
        if let Some(cue) = parse_cue_item(rest) {
            if !trace.cues.iter().any(|c| c.id == cue.id) {
                trace.cues.push(cue);
            }
        }
    } else if let Some(rest) = item.strip_prefix("validated ") {
        let id = rest.trim();
        if !id.is_empty() && !id.contains(char::is_whitespace) {
            if let Some(cue) = trace.cues.iter_mut().find(|c| c.id == id) {
                cue.validated = true;
            }
            if !trace.high_value_cues.iter().any(|h| h == id) {
                trace.high_value_cues.push(id.to_string());
            }
        }
    } else if let Some(rest) = item.strip_prefix("region ") {
        if let Some((id, region)) = parse_region_item(rest) {
            trace.grounded_regions.push(GroundedRegion {
                cue_id: id,
                region,
            });
        }
    } else if let Some(rest) = item.strip_prefix("ocr ") {
        if let Some(ocr) = parse_ocr_item(rest) {
            trace.ocr_lines.get_or_insert_with(Vec::new).push(ocr);
        }
    }
}

/// `<id> (<modality>/<subtype>, score=<frac>): <description>`
fn parse_cue_item(rest: &str) -> Option<CueRecord> {
    let open = rest.find('(')?;
    let id = rest[..open].trim();
    if id.is_empty() || id.contains(char::is_whitespace) {
        return None;
    }
    let close = rest[open..].find(')')? + open;
    let inner = &rest[open + 1..close];
    let after = rest[close + 1..].trim_start();
    let description = after.strip_prefix(':')?.trim();

    let (kind_part, score_part) = inner.split_once(',')?;
    let (modality_s, subtype_s) = kind_part.trim().split_once('/')?;
    let modality = match modality_s.trim().to_lowercase().as_str() {
        "visual" => CueModality::Visual,
        "logical" => CueModality::Logical,
        _ => return None,
    };
    let subtype = match subtype_s.trim().to_lowercase().as_str() {
        "global" => CueSubtype::Global,
        "local" => CueSubtype::Local,
        "internal" => CueSubtype::Internal,
        "scenario" => CueSubtype::Scenario,
        _ => return None,
    };
    if !cue_kind_is_valid(modality, subtype) {
        return None;
    }
    let score: f64 = score_part.trim().strip_prefix("score=")?.trim().parse().ok()?;
    if !(0.0..=1.0).contains(&score) {
        return None;
    }
    Some(CueRecord {
        id: id.to_string(),
        modality,
        subtype,
        description: description.to_string(),
        score,
        validated: false,
    })
}

/// `<cue_id>: [x0, y0, x1, y1]` (or an 8-number quad).
fn parse_region_item(rest: &str) -> Option<(String, BoundingBox)> {
    let (id, coords) = rest.split_once(':')?;
    let id = id.trim();
    if id.is_empty() || id.contains(char::is_whitespace) {
        return None;
    }
    Some((id.to_string(), parse_coord_array(coords)?))
}

/// `"<text>": [x0, y0, x1, y1]`; the quoted text may not contain quotes.
fn parse_ocr_item(rest: &str) -> Option<OcrLine> {
    let rest = rest.trim_start();
    let rest = rest.strip_prefix('"')?;
    let quote_end = rest.find('"')?;
    let text = &rest[..quote_end];
    let after = rest[quote_end + 1..].trim_start();
    let coords = after.strip_prefix(':')?;
    Some(OcrLine {
        text: text.to_string(),
        region: parse_coord_array(coords)?,
    })
}

fn parse_coord_array(s: &str) -> Option<BoundingBox> {
    let coords: Vec<f64> = serde_json::from_str(s.trim()).ok()?;
    match coords.len() {
        4 => BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).ok(),
        8 => {
            let mut arr = [0.0; 8];
            arr.copy_from_slice(&coords);
            normalize_quad(&Quad::new(arr)).ok()
        }
        _ => None,
    }
}

/// Keeps the cues whose score clears the threshold (inclusive), in their
/// original order.
#[must_use]
pub fn filter_cues(cues: &[CueRecord], threshold: f64) -> Vec<CueRecord> {
    cues.iter()
        .filter(|c| c.score >= threshold)
        .cloned()
        .collect()
}

/// Finding severity: errors make a trace structurally invalid, warnings
/// don't.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Stable machine-readable finding codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingCode {
    StageMissing,
    StageOrder,
    VerdictRegionMismatch,
    DanglingCueRef,
    RegionUngrounded,
    CueUngrounded,
    /// Produced by the corpus validation driver when a record has no
    /// report block at all.
    ReportMissing,
    /// Produced by the corpus validation driver when the report block does
    /// not parse.
    ReportInvalid,
}

impl std::fmt::Display for FindingCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FindingCode::StageMissing => "STAGE_MISSING",
            FindingCode::StageOrder => "STAGE_ORDER",
            FindingCode::VerdictRegionMismatch => "VERDICT_REGION_MISMATCH",
            FindingCode::DanglingCueRef => "DANGLING_CUE_REF",
            FindingCode::RegionUngrounded => "REGION_UNGROUNDED",
            FindingCode::CueUngrounded => "CUE_UNGROUNDED",
            FindingCode::ReportMissing => "REPORT_MISSING",
            FindingCode::ReportInvalid => "REPORT_INVALID",
        };
        f.write_str(s)
    }
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    pub severity: Severity,
    pub message: String,
    /// What the finding points at: a stage header, cue id, or region index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl Finding {
    fn error(code: FindingCode, message: String, location: Option<String>) -> Self {
        Self {
            code,
            severity: Severity::Error,
            message,
            location,
        }
    }

    fn warning(code: FindingCode, message: String, location: Option<String>) -> Self {
        Self {
            code,
            severity: Severity::Warning,
            message,
            location,
        }
    }
}

/// The validator's output for one trace/report pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationDiagnostics {
    pub findings: Vec<Finding>,
    /// True exactly when no finding has error severity.
    pub structurally_valid: bool,
}

impl ValidationDiagnostics {
    #[must_use]
    pub fn errors(&self) -> Vec<&Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .collect()
    }

    #[must_use]
    pub fn warnings(&self) -> Vec<&Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
            .collect()
    }
}

/// Checks a trace against its report. Deterministic: identical inputs give
/// an identical findings list, in a fixed emission order (stage presence,
/// stage order, verdict/region coupling, reference integrity, then
/// warnings).
#[must_use]
pub fn validate(trace: &CctTrace, report: &AnalysisReport) -> ValidationDiagnostics {
    let mut findings = Vec::new();

    // 1. Every canonical stage must be present.
    for kind in StageKind::ALL {
        if !trace.stages.iter().any(|s| s.kind == kind) {
            findings.push(Finding::error(
                FindingCode::StageMissing,
                format!("stage {} ({}) is missing", kind.number(), kind.name()),
                Some(kind.header()),
            ));
        }
    }

    // 2. Stages that are present must appear in canonical order.
    let numbers: Vec<usize> = trace.stages.iter().map(|s| s.kind.number()).collect();
    if numbers.windows(2).any(|w| w[0] >= w[1]) {
        findings.push(Finding::error(
            FindingCode::StageOrder,
            format!("stages appear out of order: {numbers:?}"),
            None,
        ));
    }

    // 3. Verdict must agree with the spatial evidence.
    match report.verdict {
        Verdict::Forged if trace.grounded_regions.is_empty() => {
            findings.push(Finding::error(
                FindingCode::VerdictRegionMismatch,
                "forged verdict but the trace grounds no regions".into(),
                None,
            ));
        }
        Verdict::Authentic if !report.regions.is_empty() => {
            findings.push(Finding::error(
                FindingCode::VerdictRegionMismatch,
                format!(
                    "authentic verdict but the report lists {} region(s)",
                    report.regions.len()
                ),
                None,
            ));
        }
        _ => {}
    }

    // 4. Reference integrity: high-value ids must name cues, grounded
    //    regions must anchor high-value cues.
    for id in &trace.high_value_cues {
        if !trace.cues.iter().any(|c| &c.id == id) {
            findings.push(Finding::error(
                FindingCode::DanglingCueRef,
                format!("high-value cue {id:?} does not exist"),
                Some(id.clone()),
            ));
        }
    }
    for gr in &trace.grounded_regions {
        if !trace.high_value_cues.iter().any(|h| h == &gr.cue_id) {
            findings.push(Finding::error(
                FindingCode::DanglingCueRef,
                format!("grounded region references non-high-value cue {:?}", gr.cue_id),
                Some(gr.cue_id.clone()),
            ));
        }
    }

    // 5. Warnings: report regions should trace back to grounded regions,
    //    and high-value cues should be grounded somewhere.
    for (i, region) in report.regions.iter().enumerate() {
        let matched = trace
            .grounded_regions
            .iter()
            .any(|gr| gr.region.iou(region) >= REGION_MATCH_IOU);
        if !matched {
            findings.push(Finding::warning(
                FindingCode::RegionUngrounded,
                format!("report region {i} matches no grounded region at IoU >= {REGION_MATCH_IOU}"),
                Some(format!("regions[{i}]")),
            ));
        }
    }
    for id in &trace.high_value_cues {
        let exists = trace.cues.iter().any(|c| &c.id == id);
        let grounded = trace.grounded_regions.iter().any(|gr| &gr.cue_id == id);
        if exists && !grounded {
            findings.push(Finding::warning(
                FindingCode::CueUngrounded,
                format!("high-value cue {id:?} has no grounded region"),
                Some(id.clone()),
            ));
        }
    }

    let structurally_valid = !findings.iter().any(|f| f.severity == Severity::Error);
    ValidationDiagnostics {
        findings,
        structurally_valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TagPresence;

    fn report(verdict: Verdict, regions: Vec<BoundingBox>) -> AnalysisReport {
        AnalysisReport {
            verdict,
            verdict_text: match verdict {
                Verdict::Forged => "HIGH INDICATION OF FORGERY".into(),
                Verdict::Authentic => "AUTHENTIC".into(),
            },
            regions,
            rationale: "r".into(),
            tag_presence: TagPresence::complete(),
        }
    }

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    const FULL_TRACE: &str = "\
Stage 1: Knowledge Preparation
Scanned receipt, printed totals.
- ocr \"TOTAL 128.00\": [40, 210, 180, 232]
Stage 2: Visual Cues Extraction
- cue v1 (visual/local, score=0.92): halo artifacts around the amount
Stage 3: Logical Cues Extraction
- cue l1 (logical/internal, score=0.88): line items contradict the total
Stage 4: Cross-Cues Validation & Filtering
- validated v1
- validated l1
Stage 5: Spatial Grounding
- region v1: [40, 210, 180, 232]
- region l1: [40, 240, 180, 262]
Stage 6: Report Synthesis
Verdict assembled from the validated cues.";

    #[test]
    fn parses_full_trace() {
        let t = parse_trace(FULL_TRACE);
        assert_eq!(t.stages.len(), 6);
        assert_eq!(
            t.stages.iter().map(|s| s.kind.number()).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5, 6]
        );
        assert_eq!(t.cues.len(), 2);
        assert!(t.cues.iter().all(|c| c.validated));
        assert_eq!(t.high_value_cues, vec!["v1", "l1"]);
        assert_eq!(t.grounded_regions.len(), 2);
        assert_eq!(t.ocr_lines.as_ref().unwrap().len(), 1);
        assert_eq!(t.ocr_lines.as_ref().unwrap()[0].text, "TOTAL 128.00");
    }

    #[test]
    fn header_matching_is_case_insensitive() {
        assert_eq!(
            match_stage_header("STAGE 5: spatial grounding"),
            Some(StageKind::Grounding)
        );
        assert_eq!(
            match_stage_header("  stage 4: cross-cues validation & filtering  "),
            Some(StageKind::CrossValidation)
        );
        // Number and name must agree.
        assert_eq!(match_stage_header("Stage 2: Spatial Grounding"), None);
        assert_eq!(match_stage_header("Stage 7: Report Synthesis"), None);
        assert_eq!(match_stage_header("Knowledge Preparation"), None);
    }

    #[test]
    fn malformed_items_stay_as_text() {
        let text = "Stage 2: Visual Cues Extraction\n\
                    - cue v1 (visual/internal, score=0.9): illegal subtype\n\
                    - cue v2 (visual/local, score=1.7): out-of-range score\n\
                    - cue (visual/local, score=0.5): missing id\n\
                    - cue v3 visual local 0.5 no parens";
        let t = parse_trace(text);
        assert!(t.cues.is_empty());
        assert!(t.stages[0].body.contains("illegal subtype"));
    }

    #[test]
    fn repeated_cue_ids_keep_first() {
        let text = "Stage 2: Visual Cues Extraction\n\
                    - cue v1 (visual/local, score=0.9): first\n\
                    - cue v1 (visual/global, score=0.1): second";
        let t = parse_trace(text);
        assert_eq!(t.cues.len(), 1);
        assert_eq!(t.cues[0].description, "first");
    }

    #[test]
    fn preamble_is_retained() {
        let t = parse_trace("free-floating intro\nStage 1: Knowledge Preparation\nbody");
        assert_eq!(t.preamble, "free-floating intro");
        assert_eq!(t.stages[0].body, "body");
    }

    #[test]
    fn filter_cues_is_inclusive_and_order_preserving() {
        let mk = |id: &str, score: f64| CueRecord {
            id: id.into(),
            modality: CueModality::Visual,
            subtype: CueSubtype::Local,
            description: String::new(),
            score,
            validated: false,
        };
        let cues = vec![mk("a", 0.4), mk("b", 0.5), mk("c", 0.9), mk("d", 0.49)];
        let kept = filter_cues(&cues, 0.5);
        assert_eq!(
            kept.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
            vec!["b", "c"]
        );
        assert_eq!(filter_cues(&cues, 0.0).len(), 4);
        assert!(filter_cues(&[], 0.5).is_empty());
    }

    #[test]
    fn full_trace_validates_clean_for_matching_report() {
        let t = parse_trace(FULL_TRACE);
        let r = report(
            Verdict::Forged,
            vec![bx(40.0, 210.0, 180.0, 232.0), bx(40.0, 240.0, 180.0, 262.0)],
        );
        let d = validate(&t, &r);
        assert!(d.structurally_valid, "findings: {:?}", d.findings);
        assert!(d.findings.is_empty(), "findings: {:?}", d.findings);
    }

    #[test]
    fn missing_stage_is_an_error() {
        let text = FULL_TRACE.replace("Stage 3: Logical Cues Extraction\n- cue l1 (logical/internal, score=0.88): line items contradict the total\n", "");
        let t = parse_trace(&text);
        let r = report(Verdict::Forged, vec![bx(40.0, 210.0, 180.0, 232.0)]);
        let d = validate(&t, &r);
        assert!(!d.structurally_valid);
        // l1 becomes dangling too, since its cue line vanished with the stage.
        assert!(d
            .errors()
            .iter()
            .any(|f| f.code == FindingCode::StageMissing));
    }

    #[test]
    fn out_of_order_stages_are_an_error() {
        let text = "Stage 1: Knowledge Preparation\n\
                    Stage 3: Logical Cues Extraction\n\
                    Stage 2: Visual Cues Extraction\n\
                    Stage 4: Cross-Cues Validation & Filtering\n\
                    Stage 5: Spatial Grounding\n\
                    Stage 6: Report Synthesis";
        let t = parse_trace(text);
        let r = report(Verdict::Authentic, vec![]);
        let d = validate(&t, &r);
        let errors = d.errors();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].code, FindingCode::StageOrder);
    }

    #[test]
    fn forged_without_grounded_regions_is_an_error() {
        let text = FULL_TRACE
            .replace("- region v1: [40, 210, 180, 232]\n", "")
            .replace("- region l1: [40, 240, 180, 262]\n", "");
        let t = parse_trace(&text);
        assert!(t.grounded_regions.is_empty());
        let r = report(Verdict::Forged, vec![bx(40.0, 210.0, 180.0, 232.0)]);
        let d = validate(&t, &r);
        assert!(d
            .errors()
            .iter()
            .any(|f| f.code == FindingCode::VerdictRegionMismatch));
    }

    #[test]
    fn authentic_with_regions_is_an_error() {
        let t = parse_trace(FULL_TRACE);
        let r = report(Verdict::Authentic, vec![bx(0.0, 0.0, 10.0, 10.0)]);
        let d = validate(&t, &r);
        assert!(d
            .errors()
            .iter()
            .any(|f| f.code == FindingCode::VerdictRegionMismatch));
    }

    #[test]
    fn dangling_references_are_errors() {
        let text = FULL_TRACE.replace("- validated l1", "- validated ghost");
        let t = parse_trace(&text);
        let r = report(Verdict::Forged, vec![bx(40.0, 210.0, 180.0, 232.0)]);
        let d = validate(&t, &r);
        let dangling: Vec<_> = d
            .errors()
            .into_iter()
            .filter(|f| f.code == FindingCode::DanglingCueRef)
            .collect();
        // "ghost" names no cue, and l1's grounded region now references a
        // non-high-value cue.
        assert_eq!(dangling.len(), 2);
    }

    #[test]
    fn unmatched_report_region_is_a_warning() {
        let t = parse_trace(FULL_TRACE);
        let r = report(
            Verdict::Forged,
            vec![bx(40.0, 210.0, 180.0, 232.0), bx(500.0, 500.0, 600.0, 600.0)],
        );
        let d = validate(&t, &r);
        assert!(d.structurally_valid);
        let warnings = d.warnings();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].code, FindingCode::RegionUngrounded);
        assert_eq!(warnings[0].location.as_deref(), Some("regions[1]"));
    }

    #[test]
    fn ungrounded_high_value_cue_is_a_warning() {
        let text = FULL_TRACE.replace("- region l1: [40, 240, 180, 262]\n", "");
        let t = parse_trace(&text);
        let r = report(Verdict::Forged, vec![bx(40.0, 210.0, 180.0, 232.0)]);
        let d = validate(&t, &r);
        assert!(d.structurally_valid);
        assert!(d
            .warnings()
            .iter()
            .any(|f| f.code == FindingCode::CueUngrounded && f.location.as_deref() == Some("l1")));
    }

    #[test]
    fn validate_is_deterministic() {
        let t = parse_trace(FULL_TRACE);
        let r = report(Verdict::Forged, vec![bx(1.0, 1.0, 2.0, 2.0)]);
        assert_eq!(validate(&t, &r), validate(&t, &r));
    }

    #[test]
    fn diagnostics_serialize_with_stable_codes() {
        let t = CctTrace::default();
        let r = report(Verdict::Authentic, vec![]);
        let d = validate(&t, &r);
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"STAGE_MISSING\""));
        assert!(json.contains("\"severity\":\"error\""));
        let back: ValidationDiagnostics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn trace_round_trips_through_json() {
        let t = parse_trace(FULL_TRACE);
        let json = serde_json::to_string(&t).unwrap();
        let back: CctTrace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn eight_number_region_items_are_quads() {
        let text = "Stage 5: Spatial Grounding\n- region v1: [0, 5, 5, 0, 10, 5, 5, 10]";
        let t = parse_trace(text);
        assert_eq!(t.grounded_regions.len(), 1);
        assert_eq!(
            <[f64; 4]>::from(t.grounded_regions[0].region),
            [0.0, 0.0, 10.0, 10.0]
        );
    }
}
