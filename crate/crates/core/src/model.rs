//! Core domain types: regions, verdicts, parsed reports, and ground truth.
//!
//! All region geometry is continuous (f64 coordinates, origin top-left,
//! `x` growing right and `y` growing down). Boxes are validated at
//! construction and never silently repaired: a caller that produces an
//! inverted or negative box gets [`Error::DegenerateRegion`] back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounding box `[x0, y0, x1, y1]` with `x0 < x1`, `y0 < y1`,
/// and all coordinates non-negative.
///
/// Serializes as a flat 4-element array, the same shape used in corpus
/// files and report payloads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting inverted, zero-area, non-finite, or negative
    /// coordinates.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let coords = [x0, y0, x1, y1];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateRegion {
                detail: format!("non-finite coordinates [{x0}, {y0}, {x1}, {y1}]"),
                offset: None,
            });
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::DegenerateRegion {
                detail: format!("negative coordinates [{x0}, {y0}, {x1}, {y1}]"),
                offset: None,
            });
        }
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::DegenerateRegion {
                detail: format!("inverted or zero-area box [{x0}, {y0}, {x1}, {y1}]"),
                offset: None,
            });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    #[inline]
    pub fn x0(&self) -> f64 {
        self.x0
    }

    #[inline]
    pub fn y0(&self) -> f64 {
        self.y0
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }

    #[inline]
    #[must_use]
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Overlap area with another box; 0.0 when disjoint.
    #[must_use]
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    /// Intersection-over-union in `[0, 1]`. `iou(a, a)` is exactly 1.0.
    #[must_use]
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clips the box to an `width x height` image frame. Returns `None`
    /// when the box lies entirely outside the frame (the clipped region
    /// would have zero area).
    #[must_use]
    pub fn clip_to_frame(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let x0 = self.x0.max(0.0);
        let y0 = self.y0.max(0.0);
        let x1 = self.x1.min(f64::from(width));
        let y1 = self.y1.min(f64::from(height));
        if x0 < x1 && y0 < y1 {
            Some(BoundingBox { x0, y0, x1, y1 })
        } else {
            None
        }
    }

    /// True when the box already lies inside the frame.
    #[must_use]
    pub fn fits_frame(&self, width: u32, height: u32) -> bool {
        self.x1 <= f64::from(width) && self.y1 <= f64::from(height)
    }

    /// Corner expansion (top-left, top-right, bottom-right, bottom-left).
    #[must_use]
    pub fn corners(&self) -> Quad {
        Quad::new([
            self.x0, self.y0, self.x1, self.y0, self.x1, self.y1, self.x0, self.y1,
        ])
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Four free corner points `(x, y)` of a (possibly rotated) quadrilateral
/// region, in the order they were written: `[x1,y1, x2,y2, x3,y3, x4,y4]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub coords: [f64; 8],
}

impl Quad {
    #[must_use]
    pub fn new(coords: [f64; 8]) -> Self {
        Self { coords }
    }
}

impl From<BoundingBox> for Quad {
    fn from(b: BoundingBox) -> Self {
        b.corners()
    }
}

/// Collapses a quad to its axis-aligned hull (min/max over the corners).
///
/// Fails with [`Error::DegenerateRegion`] when the hull has no area or the
/// corners carry negative/non-finite coordinates. Idempotent when composed
/// with [`BoundingBox::corners`]: `normalize_quad(&b.corners()) == b`.
pub fn normalize_quad(q: &Quad) -> Result<BoundingBox> {
    let xs = [q.coords[0], q.coords[2], q.coords[4], q.coords[6]];
    let ys = [q.coords[1], q.coords[3], q.coords[5], q.coords[7]];
    let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x1 = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y0 = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y1 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    BoundingBox::new(x0, y0, x1, y1).map_err(|e| match e {
        Error::DegenerateRegion { offset, .. } => Error::DegenerateRegion {
            detail: format!("quad {:?} collapses to a degenerate hull", q.coords),
            offset,
        },
        other => other,
    })
}

/// Document-level authenticity call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Authentic,
    Forged,
}

impl Verdict {
    /// The opposite label; used when a non-answer must be scored as a miss.
    #[must_use]
    pub fn flipped(&self) -> Verdict {
        match self {
            Verdict::Authentic => Verdict::Forged,
            Verdict::Forged => Verdict::Authentic,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Authentic => write!(f, "authentic"),
            Verdict::Forged => write!(f, "forged"),
        }
    }
}

/// Which structural tags were found in a raw model output.
///
/// Exactly four flags, one per tag of the structural tag set; each tag is
/// counted by substring presence, so repeats neither help nor hurt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TagPresence {
    pub think_open: bool,
    pub think_close: bool,
    pub report_open: bool,
    pub report_close: bool,
}

impl TagPresence {
    /// All four tags present; what a well-formed output and the reference
    /// serializer produce.
    #[must_use]
    pub fn complete() -> Self {
        Self {
            think_open: true,
            think_close: true,
            report_open: true,
            report_close: true,
        }
    }

    /// Number of tags present, 0..=4.
    #[must_use]
    pub fn present_count(&self) -> usize {
        usize::from(self.think_open)
            + usize::from(self.think_close)
            + usize::from(self.report_open)
            + usize::from(self.report_close)
    }
}

/// A parsed `<report>` payload: the final structured answer of one model
/// output.
///
/// `verdict` is derived from `verdict_text` through the keyword table;
/// `regions` are normalized boxes (quads already collapsed). An authentic
/// verdict with non-empty regions is representable — the contradiction is
/// surfaced by trace validation, not silently repaired here.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub verdict: Verdict,
    /// Verbatim verdict wording from the payload, e.g. `"HIGH INDICATION OF
    /// FORGERY"`.
    pub verdict_text: String,
    pub regions: Vec<BoundingBox>,
    pub rationale: String,
    /// Structural tags observed around this report in the raw output.
    pub tag_presence: TagPresence,
}

/// One labeled corpus sample: the reference answer a prediction is scored
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub sample_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub label: Verdict,
    /// Forged regions; empty exactly when `label` is authentic.
    #[serde(default)]
    pub gt_regions: Vec<BoundingBox>,
    #[serde(default)]
    pub gt_rationale: String,
    /// Optional reference reasoning trace in structured form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cct_annotation: Option<crate::cct::CctTrace>,
    /// Optional externally computed explanation score for this sample,
    /// a fraction in `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_bertscore_f1: Option<f64>,
}

impl GroundTruthRecord {
    /// Checks cross-field invariants that serde cannot express: label/region
    /// coupling, frame containment, and score range.
    pub fn check_invariants(&self) -> Result<()> {
        if self.sample_id.is_empty() {
            return Err(schema("sample_id must be non-empty"));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(schema("image dimensions must be positive"));
        }
        match self.label {
            Verdict::Authentic if !self.gt_regions.is_empty() => {
                return Err(schema("authentic record must have no gt_regions"));
            }
            Verdict::Forged if self.gt_regions.is_empty() => {
                return Err(schema("forged record must have at least one gt_region"));
            }
            _ => {}
        }
        for (i, b) in self.gt_regions.iter().enumerate() {
            if !b.fits_frame(self.image_width, self.image_height) {
                return Err(schema(&format!(
                    "gt_regions[{i}] extends beyond the {}x{} frame",
                    self.image_width, self.image_height
                )));
            }
        }
        if let Some(f1) = self.external_bertscore_f1 {
            if !(0.0..=1.0).contains(&f1) || f1.is_nan() {
                return Err(schema("external_bertscore_f1 must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

fn schema(message: &str) -> Error {
    // Line number is filled in by the corpus loader, which knows it.
    Error::SchemaViolation {
        line: 0,
        message: message.to_string(),
    }
}
