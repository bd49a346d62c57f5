//! Non-maximum suppression: greedy, Soft-NMS (linear, gaussian) and the
//! cosine-decay variant, plus the inference postprocess.
//!
//! The rescoring variants share one schedule: repeatedly take the highest
//! scoring unprocessed detection `M` (ties to the lower id) and multiply the
//! score of every remaining detection by a weight of `iou(M, b)`. Rescored
//! outputs keep every detection, including those decayed to 0, ordered by
//! final score descending then id ascending.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    pub score: T,
    pub id: u64,
}

impl<T: Scalar> Detection<T> {
    pub fn new(bbox: BBox<T>, score: T, id: u64) -> Result<Self> {
        if !(score >= T::zero() && score <= T::one()) {
            return Err(Error::domain(score.as_f64(), "score in [0, 1]"));
        }
        Ok(Self { bbox, score, id })
    }
}

/// Score descending, then id ascending.
pub fn rank_order<T: Scalar>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

pub fn sort_by_rank<T: Scalar>(dets: &mut [Detection<T>]) {
    dets.sort_by(rank_order);
}

fn check_nt<T: Scalar>(n_t: T) -> Result<()> {
    if !(n_t >= T::zero() && n_t < T::one()) {
        return Err(Error::domain(n_t.as_f64(), "n_t in [0, 1)"));
    }
    Ok(())
}

/// `cos(pi/2 * (iou - n_t) / (1 - n_t))` for `iou >= n_t`, and 1 below it.
pub fn cosine_weight<T: Scalar>(iou: T, n_t: T) -> Result<T> {
    check_nt(n_t)?;
    Ok(cosine_weight_unchecked(iou, n_t))
}

fn cosine_weight_unchecked<T: Scalar>(iou: T, n_t: T) -> T {
    if iou < n_t {
        return T::one();
    }
    if iou >= T::one() {
        // cos(pi/2) is not exactly 0 in floating point
        return T::zero();
    }
    let x = (iou - n_t) / (T::one() - n_t);
    (T::lit(FRAC_PI_2) * x).cos().max(T::zero())
}

/// `1 - iou` for `iou >= n_t`, 1 below.
pub fn linear_weight<T: Scalar>(iou: T, n_t: T) -> T {
    if iou < n_t {
        T::one()
    } else {
        T::one() - iou
    }
}

/// `exp(-iou^2 / sigma)` for every overlapping box.
pub fn gaussian_weight<T: Scalar>(iou: T, sigma: T) -> T {
    if iou > T::zero() {
        (-(iou * iou) / sigma).exp()
    } else {
        T::one()
    }
}

/// Soft-NMS schedule with an arbitrary overlap weight.
pub fn rescore<T: Scalar>(dets: &[Detection<T>], weight: impl Fn(T) -> T) -> Vec<Detection<T>> {
    let mut pending: Vec<Detection<T>> = dets.to_vec();
    let mut done = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let best = pending
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| rank_order(a, b))
            .map(|(i, _)| i)
            .expect("non-empty");
        let m = pending.swap_remove(best);
        for d in pending.iter_mut() {
            let w = weight(m.bbox.iou(&d.bbox));
            d.score = d.score * w;
        }
        done.push(m);
    }
    sort_by_rank(&mut done);
    done
}

pub fn cosine_nms<T: Scalar>(dets: &[Detection<T>], n_t: T) -> Result<Vec<Detection<T>>> {
    check_nt(n_t)?;
    Ok(rescore(dets, |iou| cosine_weight_unchecked(iou, n_t)))
}

pub fn soft_nms_linear<T: Scalar>(dets: &[Detection<T>], n_t: T) -> Result<Vec<Detection<T>>> {
    check_nt(n_t)?;
    Ok(rescore(dets, |iou| linear_weight(iou, n_t)))
}

pub fn soft_nms_gaussian<T: Scalar>(dets: &[Detection<T>], sigma: T) -> Result<Vec<Detection<T>>> {
    if sigma.is_nan() || sigma <= T::zero() {
        return Err(Error::domain(sigma.as_f64(), "sigma > 0"));
    }
    Ok(rescore(dets, |iou| gaussian_weight(iou, sigma)))
}

/// Classic suppression: drop every box whose IoU with a kept box is `>= n_t`.
pub fn greedy_nms<T: Scalar>(dets: &[Detection<T>], n_t: T) -> Result<Vec<Detection<T>>> {
    if !(n_t >= T::zero() && n_t <= T::one()) {
        return Err(Error::domain(n_t.as_f64(), "n_t in [0, 1]"));
    }
    let mut sorted = dets.to_vec();
    sort_by_rank(&mut sorted);
    let mut kept: Vec<Detection<T>> = Vec::new();
    for d in sorted {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < n_t) {
            kept.push(d);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum NmsVariant<T> {
    Greedy { nt: T },
    Linear { nt: T },
    Gaussian { sigma: T },
    Cosine { nt: T },
}

impl<T: Scalar> NmsVariant<T> {
    pub fn apply(&self, dets: &[Detection<T>]) -> Result<Vec<Detection<T>>> {
        match *self {
            NmsVariant::Greedy { nt } => greedy_nms(dets, nt),
            NmsVariant::Linear { nt } => soft_nms_linear(dets, nt),
            NmsVariant::Gaussian { sigma } => soft_nms_gaussian(dets, sigma),
            NmsVariant::Cosine { nt } => cosine_nms(dets, nt),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NmsVariant::Greedy { .. } => "greedy",
            NmsVariant::Linear { .. } => "linear",
            NmsVariant::Gaussian { .. } => "gaussian",
            NmsVariant::Cosine { .. } => "cosine",
        }
    }

    /// Build a variant from its name; `nt` or `sigma` is used as appropriate.
    pub fn from_name(name: &str, nt: T, sigma: T) -> Result<Self> {
        Ok(match name {
            "greedy" => NmsVariant::Greedy { nt },
            "linear" => NmsVariant::Linear { nt },
            "gaussian" => NmsVariant::Gaussian { sigma },
            "cosine" => NmsVariant::Cosine { nt },
            other => return Err(Error::InvalidArgument(format!("unknown nms variant '{other}'"))),
        })
    }
}

impl<T: Scalar> Default for NmsVariant<T> {
    fn default() -> Self {
        NmsVariant::Cosine { nt: T::lit(0.3) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig<T> {
    pub conf_thresh: T,
    pub pre_top_k: usize,
    pub variant: NmsVariant<T>,
    pub final_top_k: usize,
}

impl<T: Scalar> Default for PostprocessConfig<T> {
    fn default() -> Self {
        Self {
            conf_thresh: T::lit(0.05),
            pre_top_k: 1000,
            variant: NmsVariant::default(),
            final_top_k: 150,
        }
    }
}

/// Confidence filter, top-k, NMS, top-k.
pub fn postprocess<T: Scalar>(dets: &[Detection<T>], cfg: &PostprocessConfig<T>) -> Result<Vec<Detection<T>>> {
    let mut kept: Vec<Detection<T>> = dets.iter().filter(|d| d.score >= cfg.conf_thresh).copied().collect();
    sort_by_rank(&mut kept);
    kept.truncate(cfg.pre_top_k);
    let mut out = cfg.variant.apply(&kept)?;
    sort_by_rank(&mut out);
    out.truncate(cfg.final_top_k);
    Ok(out)
}
