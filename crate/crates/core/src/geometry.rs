//! Axis-aligned boxes and line segments.

use serde::{Deserialize, Serialize};

use crate::stl::{norm, sub};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self { lo, hi }
    }

    /// Cube of half-width `r` around `c`.
    pub fn around(c: [f64; 3], r: f64) -> Self {
        Self {
            lo: [c[0] - r, c[1] - r, c[2] - r],
            hi: [c[0] + r, c[1] + r, c[2] + r],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|j| !(self.lo[j] < self.hi[j]))
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    /// Strict interior membership.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|j| self.lo[j] < p[j] && p[j] < self.hi[j])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|j| self.lo[j] < other.hi[j] && other.lo[j] < self.hi[j])
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb {
            lo: [self.lo[0] - r, self.lo[1] - r, self.lo[2] - r],
            hi: [self.hi[0] + r, self.hi[1] + r, self.hi[2] + r],
        }
    }

    /// Closed membership, used for containment checks of configuration geometry.
    pub fn contains_closed(&self, p: [f64; 3]) -> bool {
        (0..3).all(|j| self.lo[j] <= p[j] && p[j] <= self.hi[j])
    }

    /// Whether the segment `a..b` passes through the closed box (slab test).
    pub fn hits_segment(&self, a: [f64; 3], b: [f64; 3]) -> bool {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for j in 0..3 {
            let d = b[j] - a[j];
            if d.abs() < 1e-15 {
                if a[j] < self.lo[j] || a[j] > self.hi[j] {
                    return false;
                }
                continue;
            }
            let (mut lo, mut hi) = ((self.lo[j] - a[j]) / d, (self.hi[j] - a[j]) / d);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl Segment {
    pub fn new(a: [f64; 3], b: [f64; 3]) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        norm(sub(self.b, self.a))
    }

    pub fn midpoint(&self) -> [f64; 3] {
        [
            0.5 * (self.a[0] + self.b[0]),
            0.5 * (self.a[1] + self.b[1]),
            0.5 * (self.a[2] + self.b[2]),
        ]
    }

    /// Closest point on the segment; the projection parameter is clamped to `[0, 1]`.
    pub fn closest_point(&self, p: [f64; 3]) -> [f64; 3] {
        let ab = sub(self.b, self.a);
        let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
        let t = if len2 > 0.0 {
            let ap = sub(p, self.a);
            ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        [self.a[0] + t * ab[0], self.a[1] + t * ab[1], self.a[2] + t * ab[2]]
    }

    pub fn distance(&self, p: [f64; 3]) -> f64 {
        norm(sub(p, self.closest_point(p)))
    }

    /// Gradient of [`Segment::distance`] with respect to `p`; zero on the segment.
    pub fn distance_gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let diff = sub(p, self.closest_point(p));
        let d = norm(diff);
        if d > 0.0 {
            [diff[0] / d, diff[1] / d, diff[2] / d]
        } else {
            [0.0; 3]
        }
    }
}
