//! Axis-aligned box arithmetic: areas, intersections, spatial IoU and
//! the volume IoU of two tracks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::track::Track;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box has non-positive extent (w={w}, h={h})")]
    Degenerate { w: String, h: String },
    #[error("box score {0} outside [0, 1]")]
    ScoreOutOfRange(String),
}

/// Closed rectangle `[x, x + w] × [y, y + h]` carrying a proposal score.
///
/// `x`/`y` are the left/top edges in pixels. Coordinates are continuous, so
/// interpolated boxes with fractional edges are handled the same way as
/// integer ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
    pub score: T,
}

impl<T: Scalar> BBox<T> {
    /// Builds a box, rejecting non-positive extents and scores outside `[0, 1]`.
    pub fn new(x: T, y: T, w: T, h: T, score: T) -> Result<Self, GeometryError> {
        let b = Self { x, y, w, h, score };
        b.validate()?;
        Ok(b)
    }

    /// Box with score 0, used where no proposal evidence exists.
    pub fn unscored(x: T, y: T, w: T, h: T) -> Self {
        Self {
            x,
            y,
            w,
            h,
            score: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        // Written so that NaN fails both checks.
        if !(self.w > T::zero() && self.h > T::zero()) {
            return Err(GeometryError::Degenerate {
                w: format!("{:?}", self.w),
                h: format!("{:?}", self.h),
            });
        }
        if !(self.score >= T::zero() && self.score <= T::one()) {
            return Err(GeometryError::ScoreOutOfRange(format!("{:?}", self.score)));
        }
        Ok(())
    }

    #[inline]
    pub fn right(&self) -> T {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// Area of `self ∩ other`; zero when the boxes are disjoint or only touch.
    #[inline]
    pub fn intersection_area(&self, other: &Self) -> T {
        let iw = self.right().min_of(other.right()) - self.x.max_of(other.x);
        let ih = self.bottom().min_of(other.bottom()) - self.y.max_of(other.y);
        iw.max_of(T::zero()) * ih.max_of(T::zero())
    }

    #[inline]
    pub fn union_area(&self, other: &Self) -> T {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Translated copy; size and score are kept.
    #[inline]
    pub fn shifted(&self, dx: T, dy: T) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Spatial intersection over union.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// Volume IoU of two tracks.
///
/// Per-frame areas are summed over time. On frames shared by both tracks the
/// intersection and union of the two boxes contribute; on frames covered by
/// only one track its box area goes to the union alone. For single-frame
/// tracks on the same frame this is exactly [`iou`].
pub fn viou<T: Scalar>(a: &Track<T>, b: &Track<T>) -> T {
    let (Some(a_first), Some(b_first)) = (a.first_frame(), b.first_frame()) else {
        return T::zero();
    };
    let first = a_first.min(b_first);
    let last = a.last_frame().unwrap().max(b.last_frame().unwrap());

    let mut inter = T::zero();
    let mut union = T::zero();
    for frame in first..=last {
        match (a.box_at(frame), b.box_at(frame)) {
            (Some(p), Some(q)) => {
                let i = p.intersection_area(q);
                inter = inter + i;
                union = union + (p.area() + q.area() - i);
            }
            (Some(p), None) | (None, Some(p)) => union = union + p.area(),
            (None, None) => {}
        }
    }
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}
