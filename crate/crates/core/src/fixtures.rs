//! Deterministic fixtures: golden worked examples plus seeded synthetic
//! corpora for tests, demos, and benchmarks.
//!
//! Everything here is reproducible — golden values are constants, and the
//! synthetic corpus is a pure function of its seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{PredictionRecord, SCHEMA_VERSION};
use crate::model::{AnalysisReport, BoundingBox, GroundTruthRecord, TagPresence, Verdict};
use crate::parser::serialize_report_with_think;

/// The canonical verdict keyword the serializer uses for a label.
#[must_use]
pub fn verdict_keyword(label: Verdict) -> &'static str {
    match label {
        Verdict::Authentic => "authentic",
        Verdict::Forged => "forgery",
    }
}

/// A forged receipt with two tampered text rows; pairs with
/// [`golden_authentic_record`] as the smallest interesting corpus.
#[must_use]
pub fn golden_forged_record() -> GroundTruthRecord {
    GroundTruthRecord {
        sample_id: "golden-forged-001".into(),
        image_width: 640,
        image_height: 480,
        label: Verdict::Forged,
        gt_regions: vec![
            BoundingBox::new(40.0, 210.0, 180.0, 232.0).unwrap(),
            BoundingBox::new(40.0, 240.0, 180.0, 262.0).unwrap(),
        ],
        gt_rationale: "The totals row and the date field were retyped in a heavier font \
                       that does not match the rest of the receipt."
            .into(),
        cct_annotation: None,
        external_bertscore_f1: None,
    }
}

/// An untouched receipt: no regions, a clean-document rationale.
#[must_use]
pub fn golden_authentic_record() -> GroundTruthRecord {
    GroundTruthRecord {
        sample_id: "golden-authentic-001".into(),
        image_width: 640,
        image_height: 480,
        label: Verdict::Authentic,
        gt_regions: vec![],
        gt_rationale: "Fonts, spacing, and compression noise are consistent across the \
                       whole document; no indication of tampering."
            .into(),
        cct_annotation: None,
        external_bertscore_f1: None,
    }
}

fn fmt_coord(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x}")
    }
}

fn fmt_region(b: &BoundingBox) -> String {
    format!(
        "[{}, {}, {}, {}]",
        fmt_coord(b.x0()),
        fmt_coord(b.y0()),
        fmt_coord(b.x1()),
        fmt_coord(b.y1())
    )
}

/// Renders a six-stage reasoning trace that agrees with the record: every
/// validated cue is grounded, grounded regions match the reference boxes,
/// and an authentic record validates no cues at all. The result passes
/// trace validation against the record's own report with zero findings.
#[must_use]
pub fn golden_trace_text(record: &GroundTruthRecord) -> String {
    let mut out = String::new();
    out.push_str("Stage 1: Knowledge Preparation\n");
    out.push_str("Receipts of this template keep one font family and uniform compression noise across all fields.\n");

    out.push_str("Stage 2: Visual Cues Extraction\n");
    if record.label == Verdict::Forged {
        for (i, _) in record.gt_regions.iter().enumerate() {
            out.push_str(&format!(
                "- cue v{} (visual/local, score=0.9{}): stroke weight jumps inside text row {}\n",
                i + 1,
                i % 10,
                i + 1
            ));
        }
    } else {
        out.push_str("- cue v1 (visual/global, score=0.2): compression noise is uniform\n");
    }

    out.push_str("Stage 3: Logical Cues Extraction\n");
    if record.label == Verdict::Forged {
        out.push_str(
            "- cue l1 (logical/internal, score=0.35): printed total still matches the line items\n",
        );
    } else {
        out.push_str(
            "- cue l1 (logical/scenario, score=0.15): amounts are plausible for the merchant\n",
        );
    }

    out.push_str("Stage 4: Cross-Cues Validation & Filtering\n");
    if record.label == Verdict::Forged {
        for (i, _) in record.gt_regions.iter().enumerate() {
            out.push_str(&format!("- validated v{}\n", i + 1));
        }
    } else {
        out.push_str("No cue clears the evidence bar; nothing to validate.\n");
    }

    out.push_str("Stage 5: Spatial Grounding\n");
    if record.label == Verdict::Forged {
        for (i, region) in record.gt_regions.iter().enumerate() {
            out.push_str(&format!("- region v{}: {}\n", i + 1, fmt_region(region)));
        }
        if let Some(first) = record.gt_regions.first() {
            out.push_str(&format!("- ocr \"TOTAL 84.00\": {}\n", fmt_region(first)));
        }
    } else {
        out.push_str("No regions to ground.\n");
    }

    out.push_str("Stage 6: Report Synthesis\n");
    if record.label == Verdict::Forged {
        out.push_str("The retyped rows are localized and mutually consistent; the receipt is forged.\n");
    } else {
        out.push_str("All checks pass; the document reads as authentic.\n");
    }
    out
}

/// The ideal raw output for a record: a six-stage trace in the think
/// section and a report that matches the reference exactly. Scores a
/// perfect format reward and, scored against its own record, a perfect
/// total reward.
#[must_use]
pub fn perfect_raw_output(record: &GroundTruthRecord) -> String {
    let report = AnalysisReport {
        verdict: record.label,
        verdict_text: verdict_keyword(record.label).to_string(),
        regions: record.gt_regions.clone(),
        rationale: record.gt_rationale.clone(),
        tag_presence: TagPresence::complete(),
    };
    serialize_report_with_think(&report, &golden_trace_text(record))
}

const RATIONALE_SUBJECTS: [&str; 4] = [
    "the totals row",
    "the date field",
    "the merchant name",
    "the tax line",
];
const RATIONALE_DEFECTS: [&str; 4] = [
    "was retyped in a mismatched font",
    "shows resampling halos around the glyphs",
    "uses kerning absent elsewhere in the document",
    "sits on a flattened background patch",
];
const AUTHENTIC_RATIONALES: [&str; 3] = [
    "Fonts and spacing are uniform; nothing indicates tampering.",
    "Compression noise is continuous across all fields; the document is clean.",
    "Every amount is consistent and no region shows editing artifacts.",
];

fn random_box(rng: &mut ChaCha8Rng, width: u32, height: u32) -> BoundingBox {
    // Integer coordinates keep rasterization and IoU arithmetic exact.
    let w = rng.random_range(12..=60) as f64;
    let h = rng.random_range(8..=24) as f64;
    let x0 = rng.random_range(0..=(width as i64 - 61)) as f64;
    let y0 = rng.random_range(0..=(height as i64 - 25)) as f64;
    BoundingBox::new(x0, y0, x0 + w, y0 + h).unwrap()
}

fn random_record(rng: &mut ChaCha8Rng, index: usize) -> GroundTruthRecord {
    let label = if rng.random_bool(0.6) {
        Verdict::Forged
    } else {
        Verdict::Authentic
    };
    let width = 200;
    let height = 160;
    let (regions, rationale) = match label {
        Verdict::Forged => {
            let n = rng.random_range(1..=3);
            let regions: Vec<BoundingBox> =
                (0..n).map(|_| random_box(rng, width, height)).collect();
            let subject = RATIONALE_SUBJECTS[rng.random_range(0..RATIONALE_SUBJECTS.len())];
            let defect = RATIONALE_DEFECTS[rng.random_range(0..RATIONALE_DEFECTS.len())];
            (regions, format!("In this document {subject} {defect}."))
        }
        Verdict::Authentic => {
            let text = AUTHENTIC_RATIONALES[rng.random_range(0..AUTHENTIC_RATIONALES.len())];
            (vec![], text.to_string())
        }
    };
    GroundTruthRecord {
        sample_id: format!("synth-{index:04}"),
        image_width: width,
        image_height: height,
        label,
        gt_regions: regions,
        gt_rationale: rationale,
        cct_annotation: None,
        external_bertscore_f1: None,
    }
}

/// Degrades a perfect answer: jitter the boxes, sometimes flip the
/// verdict, sometimes drop a region or the whole report structure.
fn imperfect_raw_output(rng: &mut ChaCha8Rng, record: &GroundTruthRecord) -> String {
    if rng.random_bool(0.08) {
        return "the model rambled and produced no tagged sections".into();
    }
    let flip = rng.random_bool(0.15);
    let verdict = if flip { record.label.flipped() } else { record.label };
    let mut regions = Vec::new();
    if verdict == Verdict::Forged {
        for b in &record.gt_regions {
            if rng.random_bool(0.12) {
                continue; // missed detection
            }
            let dx = rng.random_range(-6..=6) as f64;
            let dy = rng.random_range(-4..=4) as f64;
            let jittered = BoundingBox::new(
                (b.x0() + dx).max(0.0),
                (b.y0() + dy).max(0.0),
                b.x1() + dx,
                b.y1() + dy,
            )
            .unwrap();
            regions.push(jittered);
        }
        if regions.is_empty() {
            regions.push(random_box(rng, record.image_width, record.image_height));
        }
    }
    let rationale = if rng.random_bool(0.7) {
        record.gt_rationale.clone()
    } else {
        "Some text in the image looks off.".to_string()
    };
    let report = AnalysisReport {
        verdict,
        verdict_text: verdict_keyword(verdict).to_string(),
        regions,
        rationale,
        tag_presence: TagPresence::complete(),
    };
    serialize_report_with_think(&report, "brief reasoning\n")
}

/// Builds a seeded synthetic corpus: `n` ground-truth records and one
/// prediction per record, a mix of perfect and degraded answers. The same
/// seed always yields byte-identical corpora.
#[must_use]
pub fn synth_corpus(seed: u64, n: usize) -> (Vec<GroundTruthRecord>, Vec<PredictionRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let record = random_record(&mut rng, i);
        let raw_output = if rng.random_bool(0.4) {
            perfect_raw_output(&record)
        } else {
            imperfect_raw_output(&mut rng, &record)
        };
        predictions.push(PredictionRecord {
            schema_version: SCHEMA_VERSION,
            sample_id: record.sample_id.clone(),
            raw_output,
        });
        records.push(record);
    }
    (records, predictions)
}
