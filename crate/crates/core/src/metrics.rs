//! Corpus-level benchmark metrics.
//!
//! For a joined corpus of predictions and references this module computes
//! detection accuracy and F1 (forged is the positive class), pixel-level
//! localization mIoU and mF1 over forged images, the corpus cosine
//! similarity score (CSS) over rationales, and the composite macro-F1 that
//! averages detection F1, localization mF1, and an explanation F1.
//!
//! Localization works on rasterized masks: pixel `(i, j)` is covered by a
//! box when `x0 <= i < x1` and `y0 <= j < y1` after clipping to the frame,
//! so integer-coordinate boxes cover exactly their area in pixels.

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, cosine};
use crate::error::{Error, Result};
use crate::model::{BoundingBox, GroundTruthRecord, Verdict};
use crate::parser::{TagSet, VerdictKeywords, parse_prediction};

/// Confusion-matrix metrics for the authentic/forged decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub accuracy: f64,
    /// F1 with forged as the positive class.
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// Set when no positives were predicted and none were present, where
    /// F1 is 0 by the zero-division convention rather than by error.
    pub f1_degenerate: bool,
}

/// Scores `(predicted, label)` verdict pairs. Errors on an empty corpus.
pub fn detection_metrics(pairs: &[(Verdict, Verdict)]) -> Result<DetectionMetrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus {
            context: "no verdict pairs to score".into(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    for &(pred, label) in pairs {
        match (pred, label) {
            (Verdict::Forged, Verdict::Forged) => tp += 1,
            (Verdict::Forged, Verdict::Authentic) => fp += 1,
            (Verdict::Authentic, Verdict::Forged) => fn_ += 1,
            (Verdict::Authentic, Verdict::Authentic) => tn += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / pairs.len() as f64;
    let denom = 2 * tp + fp + fn_;
    let f1_degenerate = denom == 0;
    let f1 = if f1_degenerate {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok(DetectionMetrics {
        accuracy,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        f1_degenerate,
    })
}

/// A binary coverage mask over an image frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl PixelMask {
    #[must_use]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[must_use]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[must_use]
    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Number of covered pixels.
    #[must_use]
    pub fn set_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Rasterizes the union of boxes onto a `width x height` frame, clipping
/// anything that spills past it.
#[must_use]
pub fn rasterize(boxes: &[BoundingBox], width: u32, height: u32) -> PixelMask {
    let mut bits = vec![false; width as usize * height as usize];
    for b in boxes {
        let Some(clipped) = b.clip_to_frame(width, height) else {
            continue;
        };
        // Integer pixels with x0 <= i < x1: ceil(x0) through ceil(x1) - 1.
        let x_start = clipped.x0().ceil() as usize;
        let x_end = clipped.x1().ceil() as usize; // exclusive
        let y_start = clipped.y0().ceil() as usize;
        let y_end = clipped.y1().ceil() as usize; // exclusive
        for y in y_start..y_end {
            let row = y * width as usize;
            for cell in &mut bits[row + x_start..row + x_end] {
                *cell = true;
            }
        }
    }
    PixelMask {
        width,
        height,
        bits,
    }
}

/// Pixel IoU and F1 between a predicted and a reference mask.
///
/// Both degenerate cases (no pixels anywhere) score 0.0. The masks must
/// describe the same frame.
pub fn mask_overlap_metrics(pred: &PixelMask, gt: &PixelMask) -> Result<(f64, f64)> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch {
            left: pred.bits.len(),
            right: gt.bits.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, g) in pred.bits.iter().zip(&gt.bits) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let union = tp + fp + fn_;
    let iou = if union == 0 {
        0.0
    } else {
        tp as f64 / union as f64
    };
    let f1_denom = 2 * tp + fp + fn_;
    let f1 = if f1_denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / f1_denom as f64
    };
    Ok((iou, f1))
}

/// Pixel localization metrics averaged over forged images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub miou: f64,
    pub mf1: f64,
    /// Forged images the averages run over.
    pub n_forged: usize,
}

/// Rasterizes and scores each forged image, then averages. Authentic
/// images are skipped entirely; a corpus without forged images errors.
pub fn localization_metrics(
    samples: &[(&[BoundingBox], &GroundTruthRecord)],
) -> Result<LocalizationMetrics> {
    let mut iou_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut n_forged = 0usize;
    for (pred_boxes, gt) in samples {
        if gt.label != Verdict::Forged {
            continue;
        }
        let pred_mask = rasterize(pred_boxes, gt.image_width, gt.image_height);
        let gt_mask = rasterize(&gt.gt_regions, gt.image_width, gt.image_height);
        let (iou, f1) = mask_overlap_metrics(&pred_mask, &gt_mask)?;
        iou_sum += iou;
        f1_sum += f1;
        n_forged += 1;
    }
    if n_forged == 0 {
        return Err(Error::EmptyCorpus {
            context: "no forged images; localization metrics are undefined".into(),
        });
    }
    Ok(LocalizationMetrics {
        miou: iou_sum / n_forged as f64,
        mf1: f1_sum / n_forged as f64,
        n_forged,
    })
}

/// Corpus cosine similarity score: mean clamped cosine between predicted
/// and reference rationales, over every sample.
pub fn explanation_css(pairs: &[(&str, &str)], embedder: &dyn Embedder) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus {
            context: "no rationale pairs to score".into(),
        });
    }
    let mut texts = Vec::with_capacity(pairs.len() * 2);
    for (pred, gt) in pairs {
        texts.push(*pred);
        texts.push(*gt);
    }
    let vectors = embedder.embed_batch(&texts)?;
    let mut sum = 0.0;
    for i in 0..pairs.len() {
        let similarity = cosine(&vectors[2 * i], &vectors[2 * i + 1])?;
        sum += similarity.clamp(0.0, 1.0);
    }
    Ok(sum / pairs.len() as f64)
}

/// Arithmetic mean of the three per-task scores (fractions in, fraction
/// out).
#[must_use]
pub fn macro_f1(detection_f1: f64, grounding_mf1: f64, explanation_f1: f64) -> f64 {
    (detection_f1 + grounding_mf1 + explanation_f1) / 3.0
}

/// One prediction reduced to what the corpus metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEval {
    pub sample_id: String,
    /// Predicted verdict. A record whose report did not parse is scored as
    /// a miss: the stored verdict is the opposite of the label, so it can
    /// never count as correct.
    pub pred_verdict: Verdict,
    pub report_parsed: bool,
    pub pred_boxes: Vec<BoundingBox>,
    pub pred_rationale: String,
    /// Externally computed explanation F1, when available (record field or
    /// sidecar, merged by the caller).
    pub bertscore_f1: Option<f64>,
    pub gt: GroundTruthRecord,
}

/// Parses one raw output into its evaluation view. Total: unparseable
/// reports degrade to a scored miss with no boxes and an empty rationale.
#[must_use]
pub fn sample_eval(
    raw_output: &str,
    gt: &GroundTruthRecord,
    keywords: &VerdictKeywords,
    tags: &TagSet,
) -> SampleEval {
    let parsed = parse_prediction(raw_output, keywords, tags);
    match parsed.report {
        Some(report) => SampleEval {
            sample_id: gt.sample_id.clone(),
            pred_verdict: report.verdict,
            report_parsed: true,
            pred_boxes: report.regions,
            pred_rationale: report.rationale,
            bertscore_f1: gt.external_bertscore_f1,
            gt: gt.clone(),
        },
        None => SampleEval {
            sample_id: gt.sample_id.clone(),
            pred_verdict: gt.label.flipped(),
            report_parsed: false,
            pred_boxes: Vec::new(),
            pred_rationale: String::new(),
            bertscore_f1: gt.external_bertscore_f1,
            gt: gt.clone(),
        },
    }
}

/// Options controlling the composite metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct SummaryOptions {
    /// Substitute CSS for the explanation term of macro-F1 when no
    /// external explanation F1 is available. The composite is then labeled
    /// `M-F1(CSS)`.
    pub mf1_css_substitute: bool,
}

/// The full evaluation result for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_samples: usize,
    pub n_forged: usize,
    pub n_authentic: usize,
    /// Records whose report block failed to parse (scored as misses).
    pub n_unparsed: usize,
    pub detection_accuracy: f64,
    pub detection_f1: f64,
    /// `None` when the corpus has no forged images.
    pub grounding_miou: Option<f64>,
    pub grounding_mf1: Option<f64>,
    pub css: f64,
    /// Mean external explanation F1; present only when every sample has one.
    pub bertscore_f1: Option<f64>,
    /// Composite macro-F1; present when an explanation F1 exists or CSS
    /// substitution was requested.
    pub m_f1: Option<f64>,
    /// True when `m_f1` used CSS in place of an external explanation F1.
    pub m_f1_from_css: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Computes every corpus metric from per-sample evaluation views.
pub fn summarize(
    evals: &[SampleEval],
    embedder: &dyn Embedder,
    options: &SummaryOptions,
) -> Result<MetricsSummary> {
    if evals.is_empty() {
        return Err(Error::EmptyCorpus {
            context: "no samples to evaluate".into(),
        });
    }
    let mut warnings = Vec::new();

    let pairs: Vec<(Verdict, Verdict)> =
        evals.iter().map(|e| (e.pred_verdict, e.gt.label)).collect();
    let detection = detection_metrics(&pairs)?;

    let n_forged = evals.iter().filter(|e| e.gt.label == Verdict::Forged).count();
    let n_unparsed = evals.iter().filter(|e| !e.report_parsed).count();
    if n_unparsed > 0 {
        warnings.push(format!(
            "{n_unparsed} record(s) had no parseable report and were scored as misses"
        ));
    }
    let clipped: usize = evals
        .iter()
        .map(|e| {
            e.pred_boxes
                .iter()
                .filter(|b| !b.fits_frame(e.gt.image_width, e.gt.image_height))
                .count()
        })
        .sum();
    if clipped > 0 {
        warnings.push(format!(
            "{clipped} predicted box(es) extended beyond the image frame and were clipped"
        ));
    }

    let localization = if n_forged > 0 {
        let samples: Vec<(&[BoundingBox], &GroundTruthRecord)> = evals
            .iter()
            .map(|e| (e.pred_boxes.as_slice(), &e.gt))
            .collect();
        Some(localization_metrics(&samples)?)
    } else {
        warnings.push("corpus has no forged images; localization metrics omitted".into());
        None
    };

    let rationale_pairs: Vec<(&str, &str)> = evals
        .iter()
        .map(|e| (e.pred_rationale.as_str(), e.gt.gt_rationale.as_str()))
        .collect();
    let css = explanation_css(&rationale_pairs, embedder)?;

    let with_bs = evals.iter().filter(|e| e.bertscore_f1.is_some()).count();
    let bertscore_f1 = if with_bs == evals.len() {
        let sum: f64 = evals.iter().map(|e| e.bertscore_f1.unwrap()).sum();
        Some(sum / evals.len() as f64)
    } else {
        if with_bs > 0 {
            warnings.push(format!(
                "external explanation F1 present on only {with_bs}/{} samples; ignored",
                evals.len()
            ));
        }
        None
    };

    let explanation_term = match (bertscore_f1, options.mf1_css_substitute) {
        (Some(bs), _) => Some((bs, false)),
        (None, true) => Some((css, true)),
        (None, false) => None,
    };
    let (m_f1, m_f1_from_css) = match (explanation_term, localization) {
        (Some((explanation, from_css)), Some(loc)) => (
            Some(macro_f1(detection.f1, loc.mf1, explanation)),
            from_css,
        ),
        (Some(_), None) => {
            warnings.push("macro-F1 omitted: localization term unavailable".into());
            (None, false)
        }
        (None, _) => (None, false),
    };

    Ok(MetricsSummary {
        n_samples: evals.len(),
        n_forged,
        n_authentic: evals.len() - n_forged,
        n_unparsed,
        detection_accuracy: detection.accuracy,
        detection_f1: detection.f1,
        grounding_miou: localization.map(|l| l.miou),
        grounding_mf1: localization.map(|l| l.mf1),
        css,
        bertscore_f1,
        m_f1,
        m_f1_from_css,
        warnings,
    })
}

impl MetricsSummary {
    /// Renders the aligned plain-text table, percentages to one decimal:
    /// Acc, F1, mIoU, mF1, CSS, BS(F1), M-F1. Missing values print `-`.
    #[must_use]
    pub fn format_table(&self) -> String {
        let m_f1_header = if self.m_f1_from_css { "M-F1(CSS)" } else { "M-F1" };
        let headers = ["Acc", "F1", "mIoU", "mF1", "CSS", "BS(F1)", m_f1_header];
        let values = [
            Some(self.detection_accuracy),
            Some(self.detection_f1),
            self.grounding_miou,
            self.grounding_mf1,
            Some(self.css),
            self.bertscore_f1,
            self.m_f1,
        ];
        let cells: Vec<String> = values
            .iter()
            .map(|v| match v {
                Some(x) => format!("{:.1}", x * 100.0),
                None => "-".to_string(),
            })
            .collect();
        let widths: Vec<usize> = headers
            .iter()
            .zip(&cells)
            .map(|(h, c)| h.len().max(c.len()))
            .collect();
        let header_row = headers
            .iter()
            .zip(&widths)
            .map(|(h, w)| format!("{h:>w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        let value_row = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        format!("{header_row}\n{value_row}\n")
    }
}
