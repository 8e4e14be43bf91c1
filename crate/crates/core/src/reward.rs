//! The weighted multi-task score assigned to one raw model output.
//!
//! Three components are combined linearly:
//!
//! * **format** — fraction of the four structural tags present;
//! * **grounding** — verdict correctness, region-count agreement, and a
//!   tiered localization term driven by mean IoU;
//! * **explanation** — clamped cosine similarity between the predicted and
//!   reference rationales under a configured embedding backend.
//!
//! With default weights and grounding normalization enabled, every
//! component and the total live in `[0, 1]`, and a perfect forged
//! prediction scores exactly 1.0. An output whose report block does not
//! parse keeps its format credit but earns zero on everything else — by
//! construction, not by exception handling.

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, cosine};
use crate::error::{Error, Result};
use crate::model::{AnalysisReport, BoundingBox, GroundTruthRecord, TagPresence, Verdict};
use crate::parser::{TagSet, VerdictKeywords, parse_prediction};

/// All scoring knobs, with the published defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight of the format component in the total.
    pub lambda_format: f64,
    /// Weight of the grounding component in the total.
    pub lambda_grounding: f64,
    /// Weight of the explanation component in the total.
    pub lambda_explanation: f64,
    /// Inner grounding weights: verdict, region count, localization.
    pub w_cls: f64,
    pub w_num: f64,
    pub w_iou: f64,
    /// Divide the grounding sum by its maximum so it tops out at 1.0.
    pub normalize_grounding: bool,
    /// Mean-IoU above this earns the strict-tier reward.
    pub iou_tier_hi: f64,
    /// Mean-IoU at or above this (and up to the strict bound) earns the
    /// mid-tier reward.
    pub iou_tier_lo: f64,
    /// Strict-tier localization reward.
    pub iou_reward_hi: f64,
    /// Mid-tier localization reward.
    pub iou_reward_mid: f64,
    /// Reward for agreeing on the region count (or on zero regions for
    /// authentic images).
    pub num_reward: f64,
    /// Structural tags counted by the format component.
    pub tags: TagSet,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_format: 0.15,
            lambda_grounding: 0.75,
            lambda_explanation: 0.1,
            w_cls: 1.0,
            w_num: 1.0,
            w_iou: 1.0,
            normalize_grounding: true,
            iou_tier_hi: 0.8,
            iou_tier_lo: 0.5,
            iou_reward_hi: 0.6,
            iou_reward_mid: 0.4,
            num_reward: 0.5,
            tags: TagSet::default(),
        }
    }
}

impl RewardConfig {
    pub fn check_invariants(&self) -> Result<()> {
        let nonneg = [
            ("lambda_format", self.lambda_format),
            ("lambda_grounding", self.lambda_grounding),
            ("lambda_explanation", self.lambda_explanation),
            ("w_cls", self.w_cls),
            ("w_num", self.w_num),
            ("w_iou", self.w_iou),
            ("iou_reward_hi", self.iou_reward_hi),
            ("iou_reward_mid", self.iou_reward_mid),
            ("num_reward", self.num_reward),
        ];
        for (name, value) in nonneg {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Config {
                    message: format!("{name} must be finite and non-negative, got {value}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.iou_tier_lo)
            || !(0.0..=1.0).contains(&self.iou_tier_hi)
            || self.iou_tier_lo >= self.iou_tier_hi
        {
            return Err(Error::Config {
                message: format!(
                    "IoU tiers must satisfy 0 <= lo < hi <= 1, got lo={} hi={}",
                    self.iou_tier_lo, self.iou_tier_hi
                ),
            });
        }
        if self.normalize_grounding && self.grounding_max() <= 0.0 {
            return Err(Error::Config {
                message: "grounding normalization needs a positive maximum; raise a weight".into(),
            });
        }
        self.tags.check_invariants()
    }

    /// Largest achievable raw grounding sum; the normalization divisor.
    #[must_use]
    pub fn grounding_max(&self) -> f64 {
        // Same summation shape as the scored sum so a perfect prediction
        // divides to exactly 1.0.
        self.w_cls * 1.0 + self.w_num * self.num_reward + self.w_iou * self.iou_reward_hi
    }
}

/// Fraction of structural tags present: 0, 0.25, 0.5, 0.75, or 1.
#[must_use]
pub fn format_reward(tags: &TagPresence) -> f64 {
    tags.present_count() as f64 / 4.0
}

/// 1.0 when the predicted verdict matches the label, else 0.0.
#[must_use]
pub fn detection_reward(pred: Verdict, label: Verdict) -> f64 {
    if pred == label { 1.0 } else { 0.0 }
}

/// Region-count agreement: for forged images the predicted count must
/// equal the reference count; for authentic images it must be zero.
#[must_use]
pub fn count_reward(n_pred: usize, label: Verdict, n_gt: usize, config: &RewardConfig) -> f64 {
    let agrees = match label {
        Verdict::Forged => n_pred == n_gt,
        Verdict::Authentic => n_pred == 0,
    };
    if agrees { config.num_reward * 1.0 } else { 0.0 }
}

/// Mean over reference boxes of the best IoU any predicted box achieves.
///
/// An empty prediction list contributes 0 to every reference box; an empty
/// reference list is undefined and errors.
pub fn localization_miou(pred: &[BoundingBox], gt: &[BoundingBox]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut sum = 0.0;
    for g in gt {
        let best = pred.iter().map(|p| p.iou(g)).fold(0.0, f64::max);
        sum += best;
    }
    Ok(sum / gt.len() as f64)
}

/// Tiered localization reward: strict tier above `iou_tier_hi`, mid tier
/// from `iou_tier_lo` up to and including `iou_tier_hi`, zero below.
/// Authentic images have no localization target, so the term is 0.0.
#[must_use]
pub fn tiered_iou_reward(miou: f64, label: Verdict, config: &RewardConfig) -> f64 {
    match label {
        Verdict::Authentic => 0.0,
        Verdict::Forged => {
            if miou > config.iou_tier_hi {
                config.iou_reward_hi
            } else if miou >= config.iou_tier_lo {
                config.iou_reward_mid
            } else {
                0.0
            }
        }
    }
}

/// Grounding component with its per-term breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundingScore {
    /// The combined grounding value (normalized when configured).
    pub value: f64,
    pub r_cls: f64,
    pub r_num: f64,
    pub r_iou: f64,
    /// Mean IoU against the reference boxes; 0.0 for authentic images.
    pub miou: f64,
    /// Predicted boxes that had to be clipped to the frame (or fell
    /// entirely outside it).
    pub clipped_regions: usize,
}

/// Scores verdict, region count, and localization for a parsed report.
///
/// Predicted boxes reaching beyond the image frame are clipped for the IoU
/// computation and counted in the diagnostics; the region count is taken
/// before clipping.
pub fn grounding_reward(
    report: &AnalysisReport,
    gt: &GroundTruthRecord,
    config: &RewardConfig,
) -> Result<GroundingScore> {
    let r_cls = detection_reward(report.verdict, gt.label);
    let r_num = count_reward(report.regions.len(), gt.label, gt.gt_regions.len(), config);

    let mut clipped_regions = 0;
    let mut usable = Vec::with_capacity(report.regions.len());
    for region in &report.regions {
        match region.clip_to_frame(gt.image_width, gt.image_height) {
            Some(clipped) => {
                if clipped != *region {
                    clipped_regions += 1;
                }
                usable.push(clipped);
            }
            None => clipped_regions += 1,
        }
    }

    let miou = match gt.label {
        Verdict::Forged => localization_miou(&usable, &gt.gt_regions)?,
        Verdict::Authentic => 0.0,
    };
    let r_iou = tiered_iou_reward(miou, gt.label, config);

    let raw = config.w_cls * r_cls + config.w_num * r_num + config.w_iou * r_iou;
    let value = if config.normalize_grounding {
        raw / config.grounding_max()
    } else {
        raw
    };

    Ok(GroundingScore {
        value,
        r_cls,
        r_num,
        r_iou,
        miou,
        clipped_regions,
    })
}

/// Clamped cosine similarity of the two rationales' embeddings.
///
/// Identical texts score exactly 1.0; an empty text scores 0.0 against
/// everything. Backend failures propagate — they are never folded into a
/// zero.
pub fn explanation_reward(
    pred_rationale: &str,
    gt_rationale: &str,
    embedder: &dyn Embedder,
) -> Result<f64> {
    let vectors = embedder.embed_batch(&[pred_rationale, gt_rationale])?;
    let similarity = cosine(&vectors[0], &vectors[1])?;
    Ok(similarity.clamp(0.0, 1.0))
}

/// Full per-sample score with every component and the diagnostics needed
/// to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_cls: f64,
    pub r_num: f64,
    pub r_iou: f64,
    /// Mean IoU behind `r_iou`; 0.0 for authentic images.
    pub miou: f64,
    pub r_grounding: f64,
    pub r_explanation: f64,
    pub r_total: f64,
    /// Whether a report block parsed; when false all content terms are 0.
    pub report_parsed: bool,
    pub n_pred_regions: usize,
    pub n_gt_regions: usize,
    pub clipped_regions: usize,
}

/// Bundles the scoring context so corpora can be scored without threading
/// four arguments everywhere.
pub struct Scorer<'a> {
    pub config: &'a RewardConfig,
    pub keywords: &'a VerdictKeywords,
    pub embedder: &'a dyn Embedder,
}

impl<'a> Scorer<'a> {
    pub fn new(
        config: &'a RewardConfig,
        keywords: &'a VerdictKeywords,
        embedder: &'a dyn Embedder,
    ) -> Self {
        Self {
            config,
            keywords,
            embedder,
        }
    }

    /// Scores one raw output against its reference record.
    pub fn score(&self, raw_output: &str, gt: &GroundTruthRecord) -> Result<RewardBreakdown> {
        total_reward(raw_output, gt, self.config, self.keywords, self.embedder)
    }
}

/// Scores one raw output: sections it, parses the report, and combines the
/// weighted components.
pub fn total_reward(
    raw_output: &str,
    gt: &GroundTruthRecord,
    config: &RewardConfig,
    keywords: &VerdictKeywords,
    embedder: &dyn Embedder,
) -> Result<RewardBreakdown> {
    let parsed = parse_prediction(raw_output, keywords, &config.tags);
    let r_format = format_reward(&parsed.sections.tag_presence);

    let mut breakdown = RewardBreakdown {
        r_format,
        r_cls: 0.0,
        r_num: 0.0,
        r_iou: 0.0,
        miou: 0.0,
        r_grounding: 0.0,
        r_explanation: 0.0,
        r_total: 0.0,
        report_parsed: false,
        n_pred_regions: 0,
        n_gt_regions: gt.gt_regions.len(),
        clipped_regions: 0,
    };

    if let Some(report) = &parsed.report {
        let grounding = grounding_reward(report, gt, config)?;
        breakdown.r_cls = grounding.r_cls;
        breakdown.r_num = grounding.r_num;
        breakdown.r_iou = grounding.r_iou;
        breakdown.miou = grounding.miou;
        breakdown.r_grounding = grounding.value;
        breakdown.clipped_regions = grounding.clipped_regions;
        breakdown.r_explanation =
            explanation_reward(&report.rationale, &gt.gt_rationale, embedder)?;
        breakdown.report_parsed = true;
        breakdown.n_pred_regions = report.regions.len();
    }

    breakdown.r_total = config.lambda_format * breakdown.r_format
        + config.lambda_grounding * breakdown.r_grounding
        + config.lambda_explanation * breakdown.r_explanation;
    Ok(breakdown)
}
