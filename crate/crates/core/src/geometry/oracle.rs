//! Rasterized area estimates for region expressions over a few boxes.
//!
//! This is a test oracle for the closed-form area formulas: it counts the
//! centers of a regular grid of cells with side `resolution` that fall inside
//! the region, and never uses interval arithmetic on the boxes themselves.
//! The count is exact for the grid; the grid error is bounded by roughly
//! `resolution * perimeter`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::BBox;

/// Maximum number of leaf boxes in one expression.
pub const MAX_LEAVES: usize = 3;

/// Set expression over the leaf boxes of an [`AreaQuery`], referenced by index.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Leaf(usize),
    /// Bounding hull of two sub-regions' leaves, i.e. the enclosing box.
    Hull(usize, usize),
    Union(Box<Region>, Box<Region>),
    Intersection(Box<Region>, Box<Region>),
    Difference(Box<Region>, Box<Region>),
}

impl Region {
    pub fn union(a: Region, b: Region) -> Region {
        Region::Union(Box::new(a), Box::new(b))
    }

    pub fn intersection(a: Region, b: Region) -> Region {
        Region::Intersection(Box::new(a), Box::new(b))
    }

    pub fn difference(a: Region, b: Region) -> Region {
        Region::Difference(Box::new(a), Box::new(b))
    }

    fn max_leaf(&self) -> usize {
        match self {
            Region::Leaf(i) => *i,
            Region::Hull(a, b) => (*a).max(*b),
            Region::Union(a, b) | Region::Intersection(a, b) | Region::Difference(a, b) => {
                a.max_leaf().max(b.max_leaf())
            }
        }
    }

    /// Membership given per-leaf bits; hulls use dedicated bits after the leaves.
    fn eval(&self, inside: &dyn Fn(Membership) -> bool) -> bool {
        match self {
            Region::Leaf(i) => inside(Membership::Leaf(*i)),
            Region::Hull(a, b) => inside(Membership::Hull(*a, *b)),
            Region::Union(a, b) => a.eval(inside) || b.eval(inside),
            Region::Intersection(a, b) => a.eval(inside) && b.eval(inside),
            Region::Difference(a, b) => a.eval(inside) && !b.eval(inside),
        }
    }
}

#[derive(Clone, Copy)]
enum Membership {
    Leaf(usize),
    Hull(usize, usize),
}

/// Estimate the area of `region` over `leaves` by counting grid cell centers.
pub fn rasterized_area<T: Scalar>(leaves: &[BBox<T>], region: &Region, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if leaves.is_empty() || leaves.len() > MAX_LEAVES {
        return Err(Error::InvalidArgument(format!(
            "expected 1..={MAX_LEAVES} boxes, got {}",
            leaves.len()
        )));
    }
    if region.max_leaf() >= leaves.len() {
        return Err(Error::InvalidArgument("region references a missing box".into()));
    }

    // Rectangles tested per cell: the leaves, then every hull pair.
    let mut rects: Vec<[f64; 4]> = leaves
        .iter()
        .map(|b| [b.x1().as_f64(), b.y1().as_f64(), b.x2().as_f64(), b.y2().as_f64()])
        .collect();
    let n = leaves.len();
    let hull_slot = |a: usize, b: usize| n + a * n + b;
    for a in 0..n {
        for b in 0..n {
            let (p, q) = (rects[a], rects[b]);
            rects.push([p[0].min(q[0]), p[1].min(q[1]), p[2].max(q[2]), p[3].max(q[3])]);
        }
    }
    let width = rects.len();
    debug_assert!(width <= 16);

    // Truth table over the membership bitmask of all tested rectangles.
    let table: Vec<bool> = (0u32..(1 << width))
        .map(|mask| {
            region.eval(&|m| {
                let bit = match m {
                    Membership::Leaf(i) => i,
                    Membership::Hull(a, b) => hull_slot(a, b),
                };
                mask & (1 << bit) != 0
            })
        })
        .collect();

    let lo_x = rects.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
    let lo_y = rects.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
    let hi_x = rects.iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    let hi_y = rects.iter().map(|r| r[3]).fold(f64::NEG_INFINITY, f64::max);

    let origin_x = (lo_x / resolution).floor() * resolution;
    let origin_y = (lo_y / resolution).floor() * resolution;
    let cols = ((hi_x - origin_x) / resolution).ceil() as usize + 1;
    let rows = ((hi_y - origin_y) / resolution).ceil() as usize + 1;

    let mask_of = |coord: f64, lo: usize, hi: usize| -> u32 {
        let mut m = 0u32;
        for (bit, r) in rects.iter().enumerate() {
            if r[lo] <= coord && coord <= r[hi] {
                m |= 1 << bit;
            }
        }
        m
    };

    // Membership is separable: a cell center is inside a rectangle iff its x
    // and y are both inside. Histogram the column masks once, then each row
    // combines with the histogram instead of visiting every cell.
    let mut col_hist: std::collections::HashMap<u32, u64> = std::collections::HashMap::new();
    for c in 0..cols {
        let x = origin_x + (c as f64 + 0.5) * resolution;
        *col_hist.entry(mask_of(x, 0, 2)).or_default() += 1;
    }
    let col_hist: Vec<(u32, u64)> = col_hist.into_iter().collect();

    let mut count: u64 = 0;
    for r in 0..rows {
        let y = origin_y + (r as f64 + 0.5) * resolution;
        let row_mask = mask_of(y, 1, 3);
        for &(col_mask, n_cols) in &col_hist {
            if table[(row_mask & col_mask) as usize] {
                count += n_cols;
            }
        }
    }
    Ok(count as f64 * resolution * resolution)
}
