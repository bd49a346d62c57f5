//! Caltech-protocol evaluation: occlusion subsets, greedy detection
//! matching, FPPI / miss-rate curves and the log-average miss rate.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::GroundTruth;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nms::{rank_order, Detection};
use crate::scalar::Scalar;

/// Intersection over detection area above which a detection on an ignore
/// region is neither rewarded nor penalized.
pub const IGNORE_IOA: f64 = 0.5;
pub const DEFAULT_MR_FLOOR: f64 = 1e-10;
/// Minimum full-box height for the reasonable subset.
pub const REASONABLE_MIN_HEIGHT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Reasonable,
    Bare,
    Partial,
    Heavy,
}

impl Subset {
    pub const ALL: [Subset; 5] = [Subset::All, Subset::Reasonable, Subset::Bare, Subset::Partial, Subset::Heavy];

    pub fn name(&self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Reasonable => "reasonable",
            Subset::Bare => "bare",
            Subset::Partial => "partial",
            Subset::Heavy => "heavy",
        }
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subset '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetDecision {
    Include,
    Ignore,
}

/// Whether a ground truth counts toward the miss rate of `subset`.
///
/// Occlusion is `1 - visible_ratio`; height is the full box height.
/// Ground truths already flagged ignore, and those with a zero-area full
/// box, are always ignored.
pub fn subset_filter<T: Scalar>(gt: &GroundTruth<T>, subset: Subset) -> SubsetDecision {
    if gt.ignore {
        return SubsetDecision::Ignore;
    }
    let Ok(ratio) = gt.visible_ratio() else {
        return SubsetDecision::Ignore;
    };
    let occlusion = 1.0 - ratio.as_f64();
    let height = gt.full_box.height().as_f64();
    let keep = match subset {
        Subset::All => true,
        Subset::Reasonable => height >= REASONABLE_MIN_HEIGHT && occlusion < 0.35,
        Subset::Bare => occlusion <= 0.10,
        Subset::Partial => occlusion > 0.10 && occlusion < 0.35,
        Subset::Heavy => occlusion >= 0.35,
    };
    if keep {
        SubsetDecision::Include
    } else {
        SubsetDecision::Ignore
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DetStatus {
    TruePositive,
    FalsePositive,
    Ignored,
}

/// Evaluation-side ground truth: a box and whether it is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalGt<T> {
    pub bbox: BBox<T>,
    pub ignore: bool,
}

impl<T: Scalar> EvalGt<T> {
    pub fn include(bbox: BBox<T>) -> Self {
        Self { bbox, ignore: false }
    }

    pub fn ignored(bbox: BBox<T>) -> Self {
        Self { bbox, ignore: true }
    }
}

/// Apply `subset` to an image's annotations.
pub fn eval_gts<T: Scalar>(gts: &[GroundTruth<T>], subset: Subset) -> Vec<EvalGt<T>> {
    gts.iter()
        .map(|g| EvalGt {
            bbox: g.full_box,
            ignore: subset_filter(g, subset) == SubsetDecision::Ignore,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    /// Per detection, in input order.
    pub det_status: Vec<DetStatus>,
    /// Matched ground truth per detection (true positives only).
    pub det_match: Vec<Option<usize>>,
    /// Per ground truth: `true` when matched. Ignored ground truths are never matched.
    pub gt_matched: Vec<bool>,
    pub scores: Vec<T>,
}

impl<T: Scalar> MatchResult<T> {
    pub fn n_included(&self, gts: &[EvalGt<T>]) -> usize {
        gts.iter().filter(|g| !g.ignore).count()
    }
}

/// Greedy matching in score order: each detection takes the unmatched
/// included ground truth of highest IoU `>= iou_thresh`; failing that it is
/// ignored if it mostly lies on an ignore box, else a false positive.
pub fn match_detections<T: Scalar>(dets: &[Detection<T>], gts: &[EvalGt<T>], iou_thresh: T) -> MatchResult<T> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| rank_order(&dets[a], &dets[b]));

    let mut gt_matched = vec![false; gts.len()];
    let mut det_status = vec![DetStatus::FalsePositive; dets.len()];
    let mut det_match = vec![None; dets.len()];
    let ioa_limit = T::lit(IGNORE_IOA);

    for i in order {
        let d = &dets[i].bbox;
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.ignore || gt_matched[g] {
                continue;
            }
            let v = d.iou(&gt.bbox);
            if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
            det_status[i] = DetStatus::TruePositive;
            det_match[i] = Some(g);
        } else if gts
            .iter()
            .any(|gt| gt.ignore && d.intersection_over_self(&gt.bbox) > ioa_limit)
        {
            det_status[i] = DetStatus::Ignored;
        }
    }
    MatchResult {
        det_status,
        det_match,
        gt_matched,
        scores: dets.iter().map(|d| d.score).collect(),
    }
}

/// Per-image tallies needed for the threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTally<T> {
    /// `(score, status)` of every non-ignored detection.
    pub scored: Vec<(T, DetStatus)>,
    pub n_gt: usize,
}

impl<T: Scalar> ImageTally<T> {
    pub fn from_match(m: &MatchResult<T>, n_included_gt: usize) -> Self {
        Self {
            scored: m
                .scores
                .iter()
                .zip(&m.det_status)
                .filter(|(_, s)| **s != DetStatus::Ignored)
                .map(|(sc, st)| (*sc, *st))
                .collect(),
            n_gt: n_included_gt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint<T> {
    /// Detections with score `>= threshold` are kept; `+inf` keeps none.
    pub threshold: T,
    pub fppi: T,
    pub miss_rate: T,
}

/// FPPI / miss-rate points over descending score thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissRateCurve<T> {
    pub points: Vec<CurvePoint<T>>,
}

impl<T: Scalar> MissRateCurve<T> {
    pub fn from_points(points: Vec<(T, T)>) -> Result<Self> {
        let mut out = Vec::with_capacity(points.len());
        for (k, (fppi, mr)) in points.into_iter().enumerate() {
            if let Some(prev) = out.last().map(|p: &CurvePoint<T>| p.fppi) {
                if fppi < prev {
                    return Err(Error::InvalidArgument(format!("fppi decreases at point {k}")));
                }
            }
            out.push(CurvePoint {
                threshold: T::nan(),
                fppi,
                miss_rate: mr,
            });
        }
        Ok(Self { points: out })
    }
}

/// Sweep a threshold over every distinct detection score.
///
/// Starts at threshold `+inf` (no detections, fppi 0, miss rate 1). Points
/// sharing an fppi are merged into the one with the lowest threshold, which
/// is what step sampling would pick anyway.
pub fn miss_rate_curve<T: Scalar>(tallies: &[ImageTally<T>], n_images: usize) -> Result<MissRateCurve<T>> {
    if n_images == 0 {
        return Err(Error::InvalidArgument("n_images must be at least 1".into()));
    }
    let total_gt: usize = tallies.iter().map(|t| t.n_gt).sum();
    if total_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut all: Vec<(T, DetStatus)> = tallies.iter().flat_map(|t| t.scored.iter().copied()).collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

    let n_img = T::lit(n_images as f64);
    let n_gt = T::lit(total_gt as f64);
    let mut points = vec![CurvePoint {
        threshold: T::infinity(),
        fppi: T::zero(),
        miss_rate: T::one(),
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        while i < all.len() && all[i].0 == threshold {
            match all[i].1 {
                DetStatus::TruePositive => tp += 1,
                DetStatus::FalsePositive => fp += 1,
                DetStatus::Ignored => {}
            }
            i += 1;
        }
        let p = CurvePoint {
            threshold,
            fppi: T::lit(fp as f64) / n_img,
            miss_rate: T::lit((total_gt - tp) as f64) / n_gt,
        };
        match points.last_mut() {
            Some(last) if last.fppi == p.fppi => *last = p,
            _ => points.push(p),
        }
    }
    Ok(MissRateCurve { points })
}

/// `n` reference FPPI values log-spaced over `[lo, hi]`.
pub fn reference_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| {
            let e = a + (b - a) * k as f64 / (n - 1) as f64;
            10f64.powf(e)
        })
        .collect()
}

/// Geometric mean of the miss rate sampled at each reference FPPI.
///
/// Each reference takes the miss rate of the last curve point whose fppi
/// does not exceed it (the first point if none does); samples are floored at
/// `floor` before taking logs.
pub fn log_average_miss_rate_at<T: Scalar>(curve: &MissRateCurve<T>, refs: &[f64], floor: f64) -> Result<T> {
    if curve.points.is_empty() {
        return Err(Error::InvalidArgument("empty miss-rate curve".into()));
    }
    if refs.is_empty() {
        return Err(Error::InvalidArgument("no reference points".into()));
    }
    let mut log_sum = 0.0;
    let mut samples = Vec::with_capacity(refs.len());
    for &r in refs {
        // tolerate ulp-level error in 10^e versus fppi values like 0.1
        let limit = r * (1.0 + 1e-12);
        let sampled = curve
            .points
            .iter()
            .rev()
            .find(|p| p.fppi.as_f64() <= limit)
            .unwrap_or(&curve.points[0]);
        let v = sampled.miss_rate.as_f64().max(floor);
        samples.push(v);
        log_sum += v.ln();
    }
    // exp(ln v) is not always v; a flat sample set returns its value
    if samples.iter().all(|v| *v == samples[0]) {
        return Ok(T::lit(samples[0]));
    }
    Ok(T::lit((log_sum / refs.len() as f64).exp()))
}

/// MR⁻²: nine reference points over FPPI `[1e-2, 1]`, floor 1e-10.
pub fn log_average_miss_rate<T: Scalar>(curve: &MissRateCurve<T>) -> Result<T> {
    log_average_miss_rate_at(curve, &reference_points(1e-2, 1.0, 9), DEFAULT_MR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig<T> {
    pub iou_thresh: T,
    pub subset: Subset,
    pub fppi_range: (f64, f64),
    pub n_ref_points: usize,
    pub mr_floor: f64,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        Self {
            iou_thresh: T::half(),
            subset: Subset::Reasonable,
            fppi_range: (1e-2, 1.0),
            n_ref_points: 9,
            mr_floor: DEFAULT_MR_FLOOR,
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_thresh > T::zero() && self.iou_thresh <= T::one()) {
            return Err(Error::domain(self.iou_thresh.as_f64(), "iou threshold in (0, 1]"));
        }
        if self.n_ref_points < 2 {
            return Err(Error::InvalidArgument("need at least 2 reference points".into()));
        }
        let (lo, hi) = self.fppi_range;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("bad fppi range [{lo}, {hi}]")));
        }
        if self.mr_floor.is_nan() || self.mr_floor <= 0.0 {
            return Err(Error::domain(self.mr_floor, "miss-rate floor > 0"));
        }
        Ok(())
    }

    pub fn reference_points(&self) -> Vec<f64> {
        reference_points(self.fppi_range.0, self.fppi_range.1, self.n_ref_points)
    }
}

/// One image: detections and raw annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord<T> {
    pub detections: Vec<Detection<T>>,
    pub annotations: Vec<GroundTruth<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport<T> {
    pub curve: MissRateCurve<T>,
    pub log_average_miss_rate: T,
    pub n_images: usize,
    pub n_gt: usize,
    /// Included ground truths matched at the lowest threshold.
    pub n_matched: usize,
}

impl<T: Scalar> EvalReport<T> {
    pub fn recall(&self) -> f64 {
        self.n_matched as f64 / self.n_gt as f64
    }
}

/// Match every image (in parallel), build the curve and summarize it.
pub fn evaluate<T: Scalar>(images: &[ImageRecord<T>], cfg: &EvalConfig<T>) -> Result<EvalReport<T>> {
    cfg.validate()?;
    let tallies: Vec<(ImageTally<T>, usize)> = images
        .par_iter()
        .map(|img| {
            let gts = eval_gts(&img.annotations, cfg.subset);
            let m = match_detections(&img.detections, &gts, cfg.iou_thresh);
            let matched = m.gt_matched.iter().filter(|x| **x).count();
            (ImageTally::from_match(&m, m.n_included(&gts)), matched)
        })
        .collect();
    let n_matched = tallies.iter().map(|t| t.1).sum();
    let tallies: Vec<ImageTally<T>> = tallies.into_iter().map(|t| t.0).collect();
    let curve = miss_rate_curve(&tallies, images.len())?;
    let mr = log_average_miss_rate_at(&curve, &cfg.reference_points(), cfg.mr_floor)?;
    Ok(EvalReport {
        n_gt: tallies.iter().map(|t| t.n_gt).sum(),
        curve,
        log_average_miss_rate: mr,
        n_images: images.len(),
        n_matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox<f64> {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(bx: BBox<f64>, score: f64, id: u64) -> Detection<f64> {
        Detection::new(bx, score, id).unwrap()
    }

    fn occluded(height: f64, occlusion: f64) -> GroundTruth<f64> {
        let full = b(0.0, 0.0, 20.0, height);
        let vis = b(0.0, 0.0, 20.0, height * (1.0 - occlusion));
        GroundTruth::new(full, Some(vis), false)
    }

    #[test]
    fn subset_examples() {
        use SubsetDecision::*;
        assert_eq!(subset_filter(&occluded(60.0, 0.0), Subset::Reasonable), Include);
        assert_eq!(subset_filter(&occluded(40.0, 0.0), Subset::Reasonable), Ignore);
        assert_eq!(subset_filter(&occluded(40.0, 0.2), Subset::Reasonable), Ignore);
        assert_eq!(subset_filter(&occluded(60.0, 0.2), Subset::Partial), Include);
        assert_eq!(subset_filter(&occluded(60.0, 0.2), Subset::Bare), Ignore);
        assert_eq!(subset_filter(&occluded(60.0, 0.5), Subset::Heavy), Include);
        let mut flagged = occluded(60.0, 0.0);
        flagged.ignore = true;
        assert_eq!(subset_filter(&flagged, Subset::All), Ignore);
        assert_eq!("Reasonable".parse::<Subset>().unwrap(), Subset::Reasonable);
    }

    #[test]
    fn match_one_gt_two_dets() {
        let gt = vec![EvalGt::include(b(0.0, 0.0, 10.0, 20.0))];
        let dets = vec![det(b(0.0, 0.0, 10.0, 19.0), 0.8, 0), det(b(0.0, 1.0, 10.0, 20.0), 0.9, 1)];
        let m = match_detections(&dets, &gt, 0.5);
        assert_eq!(m.det_status, vec![DetStatus::FalsePositive, DetStatus::TruePositive]);
        assert_eq!(m.gt_matched, vec![true]);
    }

    #[test]
    fn match_on_ignore_region() {
        let gts = vec![EvalGt::ignored(b(0.0, 0.0, 100.0, 100.0))];
        let d = vec![det(b(90.0, 0.0, 110.0, 50.0), 0.5, 0), det(b(10.0, 10.0, 20.0, 30.0), 0.5, 1)];
        let m = match_detections(&d, &gts, 0.5);
        assert_eq!(m.det_status, vec![DetStatus::FalsePositive, DetStatus::Ignored]);
    }

    #[test]
    fn no_dets_all_missed() {
        let gts = vec![EvalGt::include(b(0.0, 0.0, 10.0, 20.0)); 2];
        let m = match_detections::<f64>(&[], &gts, 0.5);
        assert_eq!(m.gt_matched, vec![false, false]);
        let t = ImageTally::from_match(&m, 2);
        let c = miss_rate_curve(&[t], 1).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].fppi, c.points[0].miss_rate), (0.0, 1.0));
    }

    #[test]
    fn perfect_detector_curve_and_floor() {
        let gt = b(0.0, 0.0, 10.0, 20.0);
        let m = match_detections(&[det(gt, 0.9, 0)], &[EvalGt::include(gt)], 0.5);
        let c = miss_rate_curve(&[ImageTally::from_match(&m, 1)], 1).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].fppi, c.points[0].miss_rate), (0.0, 0.0));
        assert_eq!(log_average_miss_rate(&c).unwrap(), 1e-10);
    }

    #[test]
    fn single_false_positive_curve() {
        let mut tallies = vec![ImageTally { scored: vec![(0.9, DetStatus::FalsePositive)], n_gt: 2 }];
        for _ in 0..3 {
            tallies.push(ImageTally { scored: vec![], n_gt: 0 });
        }
        let c = miss_rate_curve(&tallies, 4).unwrap();
        let pts: Vec<_> = c.points.iter().map(|p| (p.fppi, p.miss_rate)).collect();
        assert_eq!(pts, vec![(0.0, 1.0), (0.25, 1.0)]);
    }

    #[test]
    fn curve_needs_ground_truth() {
        let t = vec![ImageTally::<f64> { scored: vec![], n_gt: 0 }];
        assert!(matches!(miss_rate_curve(&t, 1), Err(Error::NoGroundTruth)));
    }

    #[test]
    fn lamr_examples() {
        let c = MissRateCurve::from_points(vec![(0.0, 0.5), (5.0, 0.5)]).unwrap();
        assert_eq!(log_average_miss_rate(&c).unwrap(), 0.5);

        let c = MissRateCurve::from_points(vec![(0.0, 0.2), (0.1, 0.1)]).unwrap();
        let expect = ((4.0 * 0.2f64.ln() + 5.0 * 0.1f64.ln()) / 9.0).exp();
        let v = log_average_miss_rate(&c).unwrap();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.136079).abs() < 1e-6);

        assert!(log_average_miss_rate(&MissRateCurve::<f64> { points: vec![] }).is_err());
    }

    #[test]
    fn reference_points_span_range() {
        let r = reference_points(1e-2, 1.0, 9);
        assert_eq!(r.len(), 9);
        assert!((r[0] - 1e-2).abs() < 1e-15);
        assert!((r[8] - 1.0).abs() < 1e-15);
        assert!((r[4] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::<f64>::default().validate().is_ok());
        let bad = EvalConfig::<f64> { n_ref_points: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EvalConfig::<f64> { iou_thresh: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    /// Exhaustive re-statement of the greedy rule for small inputs: walk the
    /// detections in rank order and scan every ground truth.
    fn brute_match(dets: &[Detection<f64>], gts: &[EvalGt<f64>], thr: f64) -> Vec<DetStatus> {
        let mut idx: Vec<usize> = (0..dets.len()).collect();
        idx.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(dets[a].id.cmp(&dets[b].id)));
        let mut used = vec![false; gts.len()];
        let mut out = vec![DetStatus::FalsePositive; dets.len()];
        for i in idx {
            let inter = |a: &BBox<f64>, c: &BBox<f64>| {
                let w = (a.x2().min(c.x2()) - a.x1().max(c.x1())).max(0.0);
                let h = (a.y2().min(c.y2()) - a.y1().max(c.y1())).max(0.0);
                w * h
            };
            let d = dets[i].bbox;
            let mut best = None;
            let mut best_v = -1.0;
            for (g, gt) in gts.iter().enumerate() {
                if gt.ignore || used[g] {
                    continue;
                }
                let iw = inter(&d, &gt.bbox);
                let u = d.area() + gt.bbox.area() - iw;
                let v = if u > 0.0 { iw / u } else { 0.0 };
                if v >= thr && v > best_v {
                    best_v = v;
                    best = Some(g);
                }
            }
            if let Some(g) = best {
                used[g] = true;
                out[i] = DetStatus::TruePositive;
            } else if gts.iter().any(|g| g.ignore && d.area() > 0.0 && inter(&d, &g.bbox) / d.area() > 0.5) {
                out[i] = DetStatus::Ignored;
            }
        }
        out
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.0..20.0f64, 0.0..20.0f64, 2.0..12.0f64, 2.0..12.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn matching_equals_brute_force(
            dboxes in proptest::collection::vec((arb_box(), 0.0..=1.0f64), 0..=4),
            gboxes in proptest::collection::vec((arb_box(), any::<bool>()), 0..=4),
            thr in 0.1..0.9f64,
        ) {
            let dets: Vec<_> = dboxes.iter().enumerate().map(|(i, (bx, s))| det(*bx, *s, i as u64)).collect();
            let gts: Vec<_> = gboxes.iter().map(|(bx, ig)| EvalGt { bbox: *bx, ignore: *ig }).collect();
            prop_assert_eq!(match_detections(&dets, &gts, thr).det_status, brute_match(&dets, &gts, thr));
        }

        #[test]
        fn duplicating_images_is_neutral(
            dboxes in proptest::collection::vec((arb_box(), 0.0..=1.0f64), 0..6),
            gboxes in proptest::collection::vec(arb_box(), 1..4),
        ) {
            let img = ImageRecord {
                detections: dboxes.iter().enumerate().map(|(i, (bx, s))| det(*bx, *s, i as u64)).collect(),
                annotations: gboxes.iter().map(|bx| GroundTruth::person(*bx)).collect(),
            };
            let cfg = EvalConfig { subset: Subset::All, ..EvalConfig::default() };
            let one = evaluate(std::slice::from_ref(&img), &cfg).unwrap();
            let two = evaluate(&[img.clone(), img], &cfg).unwrap();
            let strip = |c: &MissRateCurve<f64>| c.points.iter().map(|p| (p.fppi, p.miss_rate)).collect::<Vec<_>>();
            prop_assert_eq!(strip(&one.curve), strip(&two.curve));
            prop_assert!((one.log_average_miss_rate - two.log_average_miss_rate).abs() < 1e-12);
        }

        #[test]
        fn pure_false_positive_never_helps(
            dboxes in proptest::collection::vec((arb_box(), 0.0..=1.0f64), 0..6),
            gboxes in proptest::collection::vec(arb_box(), 1..4),
            fp_score in 0.0..=1.0f64,
        ) {
            let mut img = ImageRecord {
                detections: dboxes.iter().enumerate().map(|(i, (bx, s))| det(*bx, *s, i as u64)).collect(),
                annotations: gboxes.iter().map(|bx| GroundTruth::person(*bx)).collect(),
            };
            let cfg = EvalConfig { subset: Subset::All, ..EvalConfig::default() };
            let before = evaluate(&[img.clone()], &cfg).unwrap();
            // far away from everything, lowest priority among equal scores
            img.detections.push(det(b(1000.0, 1000.0, 1010.0, 1020.0), fp_score, 999));
            let after = evaluate(&[img], &cfg).unwrap();
            prop_assert!(after.log_average_miss_rate >= before.log_average_miss_rate - 1e-15);
            // fppi at every reference can only grow
            for r in cfg.reference_points() {
                let at = |c: &MissRateCurve<f64>| c.points.iter().rev().find(|p| p.fppi <= r).map(|p| p.miss_rate).unwrap_or(c.points[0].miss_rate);
                prop_assert!(at(&after.curve) >= at(&before.curve) - 1e-15);
            }
            let max_fppi = |c: &MissRateCurve<f64>| c.points.last().unwrap().fppi;
            prop_assert!(max_fppi(&after.curve) >= max_fppi(&before.curve));
        }

        #[test]
        fn lamr_within_sample_range(
            steps in proptest::collection::vec((0.0..0.3f64, 0.0..1.0f64), 1..10),
        ) {
            let mut f = 0.0;
            let pts: Vec<(f64, f64)> = steps.iter().map(|(df, mr)| { f += df; (f, *mr) }).collect();
            let c = MissRateCurve::from_points(pts).unwrap();
            let v = log_average_miss_rate(&c).unwrap();
            let lo = c.points.iter().map(|p| p.miss_rate.max(1e-10)).fold(f64::INFINITY, f64::min);
            let hi = c.points.iter().map(|p| p.miss_rate.max(1e-10)).fold(0.0, f64::max);
            prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }
    }
}
