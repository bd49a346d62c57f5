//! Axis-aligned box algebra.
//!
//! Boxes use continuous pixel coordinates in corner form with
//! `area = (x2 - x1) * (y2 - y1)`; there is no `+1` pixel convention.
//! Zero-area boxes are valid values and every IoU involving one is 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub mod oracle;

/// Axis-aligned rectangle, `(x1, y1)` top-left and `(x2, y2)` bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[T; 4]", into = "[T; 4]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BBox<T> {
    x1: T,
    y1: T,
    x2: T,
    y2: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinate in ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::InvalidBox(format!(
                "corners out of order: ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box of the given size centered on `(cx, cy)`.
    pub fn from_center(cx: T, cy: T, width: T, height: T) -> Result<Self> {
        let hw = width * T::half();
        let hh = height * T::half();
        Self::new(cx - hw, cy - hh, cx + hw, cy + hh)
    }

    pub fn from_array(c: [T; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn x1(&self) -> T {
        self.x1
    }
    pub fn y1(&self) -> T {
        self.y1
    }
    pub fn x2(&self) -> T {
        self.x2
    }
    pub fn y2(&self) -> T {
        self.y2
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        (
            (self.x1 + self.x2) * T::half(),
            (self.y1 + self.y2) * T::half(),
        )
    }

    /// Overlap rectangle, or `None` when the boxes do not touch.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x1 <= x2 && y1 <= y2 {
            Some(Self { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    pub fn union_area(&self, other: &Self) -> T {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Intersection over union; 0 when the union has no area.
    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            (inter / union).min(T::one())
        }
    }

    /// Intersection over this box's own area (used for ignore regions).
    pub fn intersection_over_self(&self, other: &Self) -> T {
        let a = self.area();
        if a <= T::zero() {
            T::zero()
        } else {
            self.intersection_area(other) / a
        }
    }

    /// Smallest box containing both inputs.
    pub fn enclosing(&self, other: &Self) -> Self {
        Self {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn contains_point(&self, x: T, y: T) -> bool {
        self.x1 <= x && x <= self.x2 && self.y1 <= y && y <= self.y2
    }

    /// Coordinatewise clamp into `bounds`. The result is the intersection
    /// when the boxes overlap and a degenerate box on the boundary otherwise.
    pub fn clamp_to(&self, bounds: &Self) -> Self {
        let cx = |v: T| v.max(bounds.x1).min(bounds.x2);
        let cy = |v: T| v.max(bounds.y1).min(bounds.y2);
        Self {
            x1: cx(self.x1),
            y1: cy(self.y1),
            x2: cx(self.x2),
            y2: cy(self.y2),
        }
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Uniform scaling about the origin; `s` must be positive.
    pub fn scale(&self, s: T) -> Self {
        debug_assert!(s > T::zero());
        Self {
            x1: self.x1 * s,
            y1: self.y1 * s,
            x2: self.x2 * s,
            y2: self.y2 * s,
        }
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x1: U::lit(self.x1.as_f64()),
            y1: U::lit(self.y1.as_f64()),
            x2: U::lit(self.x2.as_f64()),
            y2: U::lit(self.y2.as_f64()),
        }
    }
}

impl<T: Scalar> TryFrom<[T; 4]> for BBox<T> {
    type Error = Error;

    fn try_from(c: [T; 4]) -> Result<Self> {
        Self::from_array(c)
    }
}

impl<T: Scalar> From<BBox<T>> for [T; 4] {
    fn from(b: BBox<T>) -> Self {
        b.to_array()
    }
}

pub fn area<T: Scalar>(b: &BBox<T>) -> T {
    b.area()
}

pub fn intersection_area<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    a.intersection_area(b)
}

pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    a.iou(b)
}

pub fn enclosing_box<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> BBox<T> {
    a.enclosing(b)
}

pub fn center<T: Scalar>(b: &BBox<T>) -> (T, T) {
    b.center()
}
