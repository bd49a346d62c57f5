//! Box-regression losses, the soft-label focal classification loss, and the
//! multi-task combination.

use serde::{Deserialize, Serialize};

use crate::assignment::encode_regression_target;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

pub mod gradcheck;

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig<T> {
    /// Knee of `smooth_ln`, in `[0, 1)`.
    pub sigma: T,
    /// Weight of the regression term.
    pub lambda: T,
    pub alpha: T,
    /// Weight of the semi-positive term.
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            sigma: T::half(),
            lambda: T::one(),
            alpha: T::lit(0.25),
            beta: T::lit(0.1),
            gamma: T::two(),
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn with_sigma(sigma: T) -> Result<Self> {
        let cfg = Self {
            sigma,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= T::zero() && self.sigma < T::one()) {
            return Err(Error::domain(self.sigma.as_f64(), "sigma in [0, 1)"));
        }
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return Err(Error::domain(self.lambda.as_f64(), "lambda >= 0"));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::domain(self.alpha.as_f64(), "alpha in (0, 1)"));
        }
        if !(self.beta >= T::zero() && self.beta.is_finite()) {
            return Err(Error::domain(self.beta.as_f64(), "beta >= 0"));
        }
        if !(self.gamma >= T::zero() && self.gamma.is_finite()) {
            return Err(Error::domain(self.gamma.as_f64(), "gamma >= 0"));
        }
        Ok(())
    }
}

fn huber<T: Scalar>(d: T) -> T {
    if d.abs() < T::one() {
        T::half() * d * d
    } else {
        d.abs() - T::half()
    }
}

fn huber_grad<T: Scalar>(d: T) -> T {
    if d.abs() < T::one() {
        d
    } else {
        d.signum()
    }
}

pub fn smooth_l1<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(target)
        .fold(T::zero(), |acc, (p, t)| acc + huber(*p - *t)))
}

/// `-ln(1 - x)` up to `sigma`, then its tangent line.
pub fn smooth_ln<T: Scalar>(x: T, sigma: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain(x.as_f64(), "x in [0, 1]"));
    }
    if !(sigma >= T::zero() && sigma < T::one()) {
        return Err(Error::domain(sigma.as_f64(), "sigma in [0, 1)"));
    }
    Ok(smooth_ln_unchecked(x, sigma))
}

fn smooth_ln_unchecked<T: Scalar>(x: T, sigma: T) -> T {
    if x <= sigma {
        -(T::one() - x).ln()
    } else {
        (x - sigma) / (T::one() - sigma) - (T::one() - sigma).ln()
    }
}

/// Derivative of `smooth_ln`; at the knee both branches agree.
pub fn smooth_ln_grad<T: Scalar>(x: T, sigma: T) -> T {
    if x <= sigma {
        T::one() / (T::one() - x)
    } else {
        T::one() / (T::one() - sigma)
    }
}

pub fn iou_loss<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>) -> T {
    T::one() - pred.iou(gt)
}

/// `1 - IoU + |C \ (gt ∪ pred)| / |C|`; with a zero-area hull this is `1 - IoU`.
pub fn giou_loss<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>) -> T {
    let hull = pred.enclosing(gt).area();
    let base = iou_loss(pred, gt);
    if hull <= T::zero() {
        return base;
    }
    let empty = (hull - pred.union_area(gt)).max(T::zero());
    base + empty / hull
}

/// `1 - IoU + ρ²(centers) / c²`, `c` the hull diagonal.
pub fn diou_loss<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>) -> Result<T> {
    let hull = pred.enclosing(gt);
    let diag2 = hull.width() * hull.width() + hull.height() * hull.height();
    if diag2 <= T::zero() {
        return Err(Error::Degenerate("enclosing box has zero diagonal"));
    }
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    let rho2 = (px - gx) * (px - gx) + (py - gy) * (py - gy);
    Ok(iou_loss(pred, gt) + rho2 / diag2)
}

/// Fraction of the enclosing box not covered by the intersection,
/// `|C \ (gt ∩ pred)| / |C|`. A zero-area hull counts as fully uncovered.
pub fn hull_uncovered_ratio<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>) -> T {
    let hull = pred.enclosing(gt).area();
    if hull <= T::zero() {
        return T::one();
    }
    let inter = pred.intersection_area(gt);
    ((hull - inter) / hull).max(T::zero()).min(T::one())
}

fn center_offsets<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>, reference: &BBox<T>) -> Result<[T; 2]> {
    let (wr, hr) = (reference.width(), reference.height());
    if wr <= T::zero() || hr <= T::zero() {
        return Err(Error::Degenerate("center reference box has zero area"));
    }
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    // (p - r)/w - (g - r)/w, written without the reference center.
    Ok([(px - gx) / wr, (py - gy) / hr])
}

/// Center-IoU loss: `smooth_ln(|C \ (gt ∩ pred)| / |C|) + smooth_l1(t, t*)`.
///
/// `t` and `t*` are the pred and gt centers expressed relative to `reference`
/// (normally the ground truth itself, or the anchor).
pub fn center_iou_loss<T: Scalar>(
    pred: &BBox<T>,
    gt: &BBox<T>,
    reference: &BBox<T>,
    cfg: &LossConfig<T>,
) -> Result<T> {
    let d = center_offsets(pred, gt, reference)?;
    let ratio = hull_uncovered_ratio(pred, gt);
    Ok(smooth_ln(ratio, cfg.sigma)? + huber(d[0]) + huber(d[1]))
}

/// Right-sided derivative of `max(a, b)` with respect to `a`.
fn dmax_da<T: Scalar>(a: T, b: T) -> T {
    if a >= b {
        T::one()
    } else {
        T::zero()
    }
}

/// Right-sided derivative of `min(a, b)` with respect to `a`.
fn dmin_da<T: Scalar>(a: T, b: T) -> T {
    if a < b {
        T::one()
    } else {
        T::zero()
    }
}

/// Per-axis quantities of the intersection and hull as functions of the
/// predicted interval `[lo, hi]` against a fixed ground-truth interval.
struct AxisTerms<T> {
    overlap: T,
    d_overlap_lo: T,
    d_overlap_hi: T,
    span: T,
    d_span_lo: T,
    d_span_hi: T,
}

fn axis_terms<T: Scalar>(lo: T, hi: T, g_lo: T, g_hi: T) -> AxisTerms<T> {
    let raw = hi.min(g_hi) - lo.max(g_lo);
    let d_raw_lo = -dmax_da(lo, g_lo);
    let d_raw_hi = dmin_da(hi, g_hi);
    // max(0, raw): right-sided at raw == 0 only lets the overlap grow
    let clamp = |d: T| {
        if raw > T::zero() {
            d
        } else if raw == T::zero() {
            d.max(T::zero())
        } else {
            T::zero()
        }
    };
    AxisTerms {
        overlap: raw.max(T::zero()),
        d_overlap_lo: clamp(d_raw_lo),
        d_overlap_hi: clamp(d_raw_hi),
        span: hi.max(g_hi) - lo.min(g_lo),
        d_span_lo: -dmin_da(lo, g_lo),
        d_span_hi: dmax_da(hi, g_hi),
    }
}

/// Analytic gradient of [`center_iou_loss`] with respect to the predicted
/// `(x1, y1, x2, y2)`; `gt` and `reference` are constants.
///
/// Where corner coordinates tie (a kink of the min/max structure) the
/// right-sided derivative is returned.
pub fn grad_center_iou<T: Scalar>(
    pred: &BBox<T>,
    gt: &BBox<T>,
    reference: &BBox<T>,
    cfg: &LossConfig<T>,
) -> Result<[T; 4]> {
    let d = center_offsets(pred, gt, reference)?;
    let (wr, hr) = (reference.width(), reference.height());

    let ax = axis_terms(pred.x1(), pred.x2(), gt.x1(), gt.x2());
    let ay = axis_terms(pred.y1(), pred.y2(), gt.y1(), gt.y2());

    let inter = ax.overlap * ay.overlap;
    let hull = ax.span * ay.span;

    // ratio = 1 - I / C; d ratio = -(dI * C - I * dC) / C^2
    let mut grad = [T::zero(); 4];
    if hull > T::zero() {
        let ratio = ((hull - inter) / hull).max(T::zero()).min(T::one());
        let outer = smooth_ln_grad(ratio, cfg.sigma);
        let d_inter = [
            ax.d_overlap_lo * ay.overlap,
            ay.d_overlap_lo * ax.overlap,
            ax.d_overlap_hi * ay.overlap,
            ay.d_overlap_hi * ax.overlap,
        ];
        let d_hull = [
            ax.d_span_lo * ay.span,
            ay.d_span_lo * ax.span,
            ax.d_span_hi * ay.span,
            ay.d_span_hi * ax.span,
        ];
        let c2 = hull * hull;
        for k in 0..4 {
            grad[k] = outer * -(d_inter[k] * hull - inter * d_hull[k]) / c2;
        }
    }

    // each center coordinate is the mean of its two corners
    let gx = huber_grad(d[0]) * T::half() / wr;
    let gy = huber_grad(d[1]) * T::half() / hr;
    grad[0] = grad[0] + gx;
    grad[2] = grad[2] + gx;
    grad[1] = grad[1] + gy;
    grad[3] = grad[3] + gy;
    Ok(grad)
}

/// Regression loss family, selectable at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionLoss {
    /// Smooth-L1 over the encoded `(dx, dy, dw, dh)` deltas relative to the reference box.
    SmoothL1,
    Iou,
    Giou,
    Diou,
    CenterIou,
}

impl RegressionLoss {
    pub const ALL: [RegressionLoss; 5] = [
        RegressionLoss::SmoothL1,
        RegressionLoss::Iou,
        RegressionLoss::Giou,
        RegressionLoss::Diou,
        RegressionLoss::CenterIou,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RegressionLoss::SmoothL1 => "smoothl1",
            RegressionLoss::Iou => "iou",
            RegressionLoss::Giou => "giou",
            RegressionLoss::Diou => "diou",
            RegressionLoss::CenterIou => "centeriou",
        }
    }

    pub fn eval<T: Scalar>(
        &self,
        pred: &BBox<T>,
        gt: &BBox<T>,
        reference: &BBox<T>,
        cfg: &LossConfig<T>,
    ) -> Result<T> {
        match self {
            RegressionLoss::SmoothL1 => {
                let p = encode_regression_target(reference, pred)?;
                let g = encode_regression_target(reference, gt)?;
                smooth_l1(&p, &g)
            }
            RegressionLoss::Iou => Ok(iou_loss(pred, gt)),
            RegressionLoss::Giou => Ok(giou_loss(pred, gt)),
            RegressionLoss::Diou => diou_loss(pred, gt),
            RegressionLoss::CenterIou => center_iou_loss(pred, gt, reference, cfg),
        }
    }
}

impl std::str::FromStr for RegressionLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss kind '{s}'")))
    }
}

/// Focal loss extended with a semi-positive term.
///
/// Labels of exactly 1 are positives, exactly 0 negatives, anything in
/// between semi-positive and weighted by `beta * label^gamma`. Excluded
/// entries are skipped and the sum is not normalized.
pub fn classification_loss<T: Scalar>(
    preds: &[T],
    labels: &[T],
    excluded: &[bool],
    cfg: &LossConfig<T>,
) -> Result<T> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    if preds.len() != excluded.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: excluded.len(),
        });
    }
    let eps = T::lit(PROB_EPS);
    let mut total = T::zero();
    for ((&p, &label), &skip) in preds.iter().zip(labels).zip(excluded) {
        if skip {
            continue;
        }
        if !(label >= T::zero() && label <= T::one()) {
            return Err(Error::domain(label.as_f64(), "label in [0, 1]"));
        }
        if p.is_nan() {
            return Err(Error::domain(f64::NAN, "probability"));
        }
        let p = p.max(eps).min(T::one() - eps);
        let term = if label >= T::one() {
            -cfg.alpha * (T::one() - p).powf(cfg.gamma) * p.ln()
        } else if label <= T::zero() {
            -(T::one() - cfg.alpha) * p.powf(cfg.gamma) * (T::one() - p).ln()
        } else {
            -cfg.beta * label.powf(cfg.gamma) * p.ln()
        };
        total = total + term;
    }
    Ok(total)
}

/// `cls_sum / n_cls + lambda / max(n_reg, 1) * Σ reg_losses`.
///
/// `reg_losses` should already be restricted to samples with label > 0.
pub fn multitask_loss<T: Scalar>(
    cls_sum: T,
    reg_losses: &[T],
    n_cls: usize,
    n_reg: usize,
    cfg: &LossConfig<T>,
) -> Result<T> {
    if n_cls == 0 {
        return Err(Error::InvalidArgument("n_cls must be at least 1".into()));
    }
    let cls = cls_sum / T::lit(n_cls as f64);
    if cfg.lambda == T::zero() {
        return Ok(cls);
    }
    let reg = reg_losses.iter().fold(T::zero(), |a, &r| a + r);
    Ok(cls + cfg.lambda / T::lit(n_reg.max(1) as f64) * reg)
}
