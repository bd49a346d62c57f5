//! Anchor-to-ground-truth assignment with soft labels.
//!
//! Each anchor takes the highest IoU over all non-ignore ground truths and
//! maps it onto a label in `[0, 1]`: 0 below `t_neg`, 1 above `t_pos`, and a
//! linear ramp in between (the semi-positive samples). Heavily occluded
//! ground truths are matched through their visible box while regression
//! still targets the full box.

use serde::{Deserialize, Serialize};

use crate::anchors::Anchor;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Intersection over anchor area above which a would-be negative anchor
/// sitting on an ignore region is excluded.
pub const IGNORE_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct GroundTruth<T> {
    pub full_box: BBox<T>,
    visible_box: Option<BBox<T>>,
    pub ignore: bool,
}

impl<T: Scalar> GroundTruth<T> {
    /// The visible box, if any, is clamped into the full box.
    pub fn new(full_box: BBox<T>, visible_box: Option<BBox<T>>, ignore: bool) -> Self {
        Self {
            full_box,
            visible_box: visible_box.map(|v| v.clamp_to(&full_box)),
            ignore,
        }
    }

    pub fn person(full_box: BBox<T>) -> Self {
        Self::new(full_box, None, false)
    }

    pub fn ignore_region(region: BBox<T>) -> Self {
        Self::new(region, None, true)
    }

    pub fn visible_box(&self) -> Option<&BBox<T>> {
        self.visible_box.as_ref()
    }

    /// Visible area over full area; 1 when no visible box is annotated.
    pub fn visible_ratio(&self) -> Result<T> {
        let full = self.full_box.area();
        if full <= T::zero() {
            return Err(Error::Degenerate("ground truth full box has zero area"));
        }
        Ok(match &self.visible_box {
            Some(v) => (v.area() / full).min(T::one()),
            None => T::one(),
        })
    }

    /// Box used for IoU matching: the visible box when the pedestrian is
    /// less than `t_vis` visible, the full box otherwise.
    pub fn effective_match_box(&self, t_vis: T) -> BBox<T> {
        match (&self.visible_box, self.visible_ratio()) {
            (Some(v), Ok(r)) if r < t_vis => *v,
            _ => self.full_box,
        }
    }
}

pub fn visible_ratio<T: Scalar>(gt: &GroundTruth<T>) -> Result<T> {
    gt.visible_ratio()
}

pub fn effective_match_box<T: Scalar>(gt: &GroundTruth<T>, t_vis: T) -> BBox<T> {
    gt.effective_match_box(t_vis)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds<T> {
    pub t_neg: T,
    pub t_pos: T,
    pub t_vis: T,
}

impl<T: Scalar> Thresholds<T> {
    pub fn new(t_neg: T, t_pos: T, t_vis: T) -> Result<Self> {
        let t = Self { t_neg, t_pos, t_vis };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !(unit(self.t_neg) && unit(self.t_pos) && self.t_neg < self.t_pos) {
            return Err(Error::InvalidArgument(format!(
                "thresholds need 0 <= t_neg < t_pos <= 1, got {{{}, {}}}",
                self.t_neg, self.t_pos
            )));
        }
        if !unit(self.t_vis) {
            return Err(Error::InvalidArgument(format!(
                "t_vis must lie in [0, 1], got {}",
                self.t_vis
            )));
        }
        Ok(())
    }

    /// First refinement step: `{0.4, 0.5}`, `t_vis = 0.5`.
    pub fn step1() -> Self {
        Self {
            t_neg: T::lit(0.4),
            t_pos: T::lit(0.5),
            t_vis: T::lit(0.5),
        }
    }

    /// Second refinement step: `{0.5, 0.6}`, `t_vis = 0.5`.
    pub fn step2() -> Self {
        Self {
            t_neg: T::lit(0.5),
            t_pos: T::lit(0.6),
            t_vis: T::lit(0.5),
        }
    }
}

impl<T: Scalar> Default for Thresholds<T> {
    fn default() -> Self {
        Self::step1()
    }
}

/// Soft classification label for an anchor's best IoU.
pub fn soft_label<T: Scalar>(iou: T, t: &Thresholds<T>) -> Result<T> {
    if !(iou >= T::zero() && iou <= T::one()) {
        return Err(Error::domain(iou.as_f64(), "iou in [0, 1]"));
    }
    Ok(if iou <= t.t_neg {
        T::zero()
    } else if iou >= t.t_pos {
        T::one()
    } else {
        (iou - t.t_neg) / (t.t_pos - t.t_neg)
    })
}

/// `(dcx / w_a, dcy / h_a, ln(w_g / w_a), ln(h_g / h_a))`.
pub fn encode_regression_target<T: Scalar>(anchor: &BBox<T>, gt: &BBox<T>) -> Result<[T; 4]> {
    let (wa, ha) = (anchor.width(), anchor.height());
    let (wg, hg) = (gt.width(), gt.height());
    if wa <= T::zero() || ha <= T::zero() {
        return Err(Error::Degenerate("anchor has zero area"));
    }
    if wg <= T::zero() || hg <= T::zero() {
        return Err(Error::Degenerate("ground truth has zero area"));
    }
    let (acx, acy) = anchor.center();
    let (gcx, gcy) = gt.center();
    Ok([
        (gcx - acx) / wa,
        (gcy - acy) / ha,
        (wg / wa).ln(),
        (hg / ha).ln(),
    ])
}

/// Inverse of [`encode_regression_target`].
pub fn decode_regression_target<T: Scalar>(anchor: &BBox<T>, deltas: &[T; 4]) -> Result<BBox<T>> {
    let (wa, ha) = (anchor.width(), anchor.height());
    let (acx, acy) = anchor.center();
    BBox::from_center(
        acx + deltas[0] * wa,
        acy + deltas[1] * ha,
        wa * deltas[2].exp(),
        ha * deltas[3].exp(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignedSample<T> {
    pub anchor_index: usize,
    pub label: T,
    /// Best-matching non-ignore ground truth, when any overlaps the anchor.
    pub gt_index: Option<usize>,
    /// Encoded full-box target; present exactly when `label > 0`.
    pub regression_target: Option<[T; 4]>,
    /// Excluded samples contribute to no loss.
    pub excluded: bool,
}

impl<T: Scalar> AssignedSample<T> {
    pub fn is_positive(&self) -> bool {
        !self.excluded && self.label >= T::one()
    }

    pub fn is_semi_positive(&self) -> bool {
        !self.excluded && self.label > T::zero() && self.label < T::one()
    }

    pub fn is_negative(&self) -> bool {
        !self.excluded && self.label <= T::zero()
    }
}

fn assign_one<T: Scalar>(
    anchor_index: usize,
    anchor: &BBox<T>,
    gts: &[GroundTruth<T>],
    match_boxes: &[Option<BBox<T>>],
    t: &Thresholds<T>,
) -> AssignedSample<T> {
    let mut best: Option<(usize, T)> = None;
    for (g, mb) in match_boxes.iter().enumerate() {
        let Some(mb) = mb else { continue };
        let v = anchor.iou(mb);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((g, v));
        }
    }
    let max_iou = best.map_or(T::zero(), |(_, v)| v);
    // soft_label only rejects IoUs outside [0, 1], which iou() never yields
    let label = soft_label(max_iou, t).unwrap_or(T::zero());
    let gt_index = best.filter(|(_, v)| *v > T::zero()).map(|(g, _)| g);

    let regression_target = match gt_index {
        Some(g) if label > T::zero() => encode_regression_target(anchor, &gts[g].full_box).ok(),
        _ => None,
    };
    let excluded = label <= T::zero()
        && gts
            .iter()
            .filter(|g| g.ignore)
            .any(|g| anchor.intersection_over_self(&g.full_box) > T::lit(IGNORE_OVERLAP));

    AssignedSample {
        anchor_index,
        label,
        gt_index,
        regression_target,
        excluded,
    }
}

/// Assign every anchor of one image.
///
/// Matching uses argmax IoU with ties going to the lowest ground-truth
/// index; there is no forced best-anchor match per ground truth.
pub fn assign<T: Scalar>(
    anchors: &[Anchor<T>],
    gts: &[GroundTruth<T>],
    t: &Thresholds<T>,
) -> Result<Vec<AssignedSample<T>>> {
    let boxes: Vec<BBox<T>> = anchors.iter().map(|a| a.bbox).collect();
    assign_boxes(&boxes, gts, t)
}

/// [`assign`] over bare anchor boxes.
pub fn assign_boxes<T: Scalar>(
    anchors: &[BBox<T>],
    gts: &[GroundTruth<T>],
    t: &Thresholds<T>,
) -> Result<Vec<AssignedSample<T>>> {
    t.validate()?;
    let match_boxes: Vec<Option<BBox<T>>> = gts
        .iter()
        .map(|g| (!g.ignore).then(|| g.effective_match_box(t.t_vis)))
        .collect();
    Ok(anchors
        .iter()
        .enumerate()
        .map(|(i, a)| assign_one(i, a, gts, &match_boxes, t))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Semi-positive label distribution plus per-class totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelHistogram {
    /// Equal-width bins over `(0, 1)`, each closed on the right.
    pub bins: Vec<HistogramBin>,
    pub positive: u64,
    pub semi_positive: u64,
    pub negative: u64,
    pub excluded: u64,
}

impl LabelHistogram {
    pub fn total(&self) -> u64 {
        self.positive + self.semi_positive + self.negative + self.excluded
    }

    /// Accumulate another image's counts (bin layouts must agree).
    pub fn merge(&mut self, other: &LabelHistogram) {
        debug_assert_eq!(self.bins.len(), other.bins.len());
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
        }
        self.positive += other.positive;
        self.semi_positive += other.semi_positive;
        self.negative += other.negative;
        self.excluded += other.excluded;
    }

    pub fn empty(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        let width = 1.0 / bins as f64;
        Ok(Self {
            bins: (0..bins)
                .map(|k| HistogramBin {
                    low: k as f64 * width,
                    high: if k + 1 == bins { 1.0 } else { (k + 1) as f64 * width },
                    count: 0,
                })
                .collect(),
            positive: 0,
            semi_positive: 0,
            negative: 0,
            excluded: 0,
        })
    }
}

pub fn label_histogram<T: Scalar>(samples: &[AssignedSample<T>], bins: usize) -> Result<LabelHistogram> {
    let mut h = LabelHistogram::empty(bins)?;
    for s in samples {
        if s.excluded {
            h.excluded += 1;
        } else if s.is_positive() {
            h.positive += 1;
        } else if s.is_negative() {
            h.negative += 1;
        } else {
            h.semi_positive += 1;
            let scaled = s.label.as_f64() * bins as f64;
            let k = (scaled.ceil() as usize).clamp(1, bins) - 1;
            h.bins[k].count += 1;
        }
    }
    Ok(h)
}
