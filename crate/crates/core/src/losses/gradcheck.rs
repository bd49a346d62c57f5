//! Finite-difference verification of [`grad_center_iou`](super::grad_center_iou).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{center_iou_loss, grad_center_iou, LossConfig};
use crate::error::Result;
use crate::geometry::BBox;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Gradient components smaller than this are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct Triple {
    pub pred: BBox<f64>,
    pub gt: BBox<f64>,
    pub reference: BBox<f64>,
}

/// Random box with corners in `[0, 12]` and sides in `[0.5, 6]`.
fn random_box(rng: &mut impl Rng) -> BBox<f64> {
    let w = rng.gen_range(0.5..6.0);
    let h = rng.gen_range(0.5..6.0);
    let x = rng.gen_range(0.0..12.0);
    let y = rng.gen_range(0.0..12.0);
    BBox::new(x, y, x + w, y + h).expect("ordered corners")
}

/// Seeded `(pred, gt, reference)` triples. Roughly half the references are
/// the ground truth itself, the rest independent boxes.
pub fn random_triples(n: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let gt = random_box(&mut rng);
            // keep most predictions overlapping the ground truth
            let pred = if rng.gen_bool(0.8) {
                let (cx, cy) = gt.center();
                let w = gt.width() * rng.gen_range(0.3..2.0);
                let h = gt.height() * rng.gen_range(0.3..2.0);
                let dx = rng.gen_range(-0.6..0.6) * gt.width();
                let dy = rng.gen_range(-0.6..0.6) * gt.height();
                BBox::from_center(cx + dx, cy + dy, w, h).expect("positive size")
            } else {
                random_box(&mut rng)
            };
            let reference = if rng.gen_bool(0.5) { gt } else { random_box(&mut rng) };
            Triple { pred, gt, reference }
        })
        .collect()
}

/// True when a kink of the loss lies within `margin` of `pred` along any
/// coordinate, so central differences straddle it.
pub fn near_kink(t: &Triple, sigma: f64, margin: f64) -> bool {
    let (p, g) = (&t.pred, &t.gt);
    let pairs = [
        (p.x1(), g.x1()),
        (p.x2(), g.x2()),
        (p.y1(), g.y1()),
        (p.y2(), g.y2()),
        (p.x2(), g.x1()),
        (p.x1(), g.x2()),
        (p.y2(), g.y1()),
        (p.y1(), g.y2()),
    ];
    if pairs.iter().any(|(a, b)| (a - b).abs() <= margin) {
        return true;
    }
    let (pcx, pcy) = p.center();
    let (gcx, gcy) = g.center();
    let dx = ((pcx - gcx) / t.reference.width()).abs();
    let dy = ((pcy - gcy) / t.reference.height()).abs();
    if (dx - 1.0).abs() <= margin / t.reference.width() || (dy - 1.0).abs() <= margin / t.reference.height() {
        return true;
    }
    // smooth_ln is C1 at its knee; the second derivative jump only costs
    // O(h) accuracy, but skip anyway to keep the comparison clean
    let ratio = super::hull_uncovered_ratio(p, g);
    let scale = p.enclosing(g).area().max(1e-12);
    (ratio - sigma).abs() <= 4.0 * margin * (p.width() + p.height() + g.width() + g.height()) / scale
}

/// Central-difference gradient of the Center-IoU loss in `pred`.
pub fn numeric_gradient(t: &Triple, cfg: &LossConfig<f64>, h: f64) -> Result<[f64; 4]> {
    let c = t.pred.to_array();
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut up = c;
        let mut dn = c;
        up[k] += h;
        dn[k] -= h;
        let fu = center_iou_loss(&BBox::from_array(up)?, &t.gt, &t.reference, cfg)?;
        let fd = center_iou_loss(&BBox::from_array(dn)?, &t.gt, &t.reference, cfg)?;
        *slot = (fu - fd) / (2.0 * h);
    }
    Ok(out)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn skipped_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.skipped as f64 / self.trials as f64
        }
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance && self.skipped_fraction() < 0.02
    }
}

/// Compare analytic and central-difference gradients on seeded random
/// triples, once per `sigma`.
pub fn grad_check(trials: usize, seed: u64, sigmas: &[f64]) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        trials: 0,
        checked: 0,
        skipped: 0,
        max_relative_error: 0.0,
        tolerance: DEFAULT_TOLERANCE,
    };
    let triples = random_triples(trials, seed);
    for &sigma in sigmas {
        let cfg = LossConfig::with_sigma(sigma)?;
        for t in &triples {
            report.trials += 1;
            if near_kink(t, sigma, 10.0 * DEFAULT_STEP) {
                report.skipped += 1;
                continue;
            }
            let a = grad_center_iou(&t.pred, &t.gt, &t.reference, &cfg)?;
            let n = numeric_gradient(t, &cfg, DEFAULT_STEP)?;
            for k in 0..4 {
                report.max_relative_error = report.max_relative_error.max(relative_error(a[k], n[k]));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
